"""Profile controller: completion-rate bookkeeping and difficulty-weighted sampling.

Tracks per-initial-state completion rates (CR) over a sliding window,
classifies states as too easy / ideal / too difficult, and samples training
profiles with probability proportional to 1 - |CR - 0.5| so the batch
concentrates on states the agent completes about half the time.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .behaviors import (
    UserProfile,
    build_profile,
    consistent_trait_subsets,
    dedup,
)
from .states import N_STATES, index_state
from .user_model import DialogueOutcome

DEFAULT_WINDOW = 200
DEFAULT_N_MAX = 200

# Below this many windowed attempts the CR estimate is Laplace-smoothed,
# (s+1)/(n+2); raw one-sample rates would collapse the weight prematurely.
SMOOTHING_MIN_ATTEMPTS = 5


class DifficultyClass(enum.Enum):
    TOO_EASY = "too_easy"
    IDEAL = "ideal"
    TOO_DIFFICULT = "too_difficult"


def classify(cr: float) -> DifficultyClass:
    """Partition of [0, 1]: >0.6 too easy, <0.4 too difficult, else ideal."""
    if not (0.0 <= cr <= 1.0):
        raise ValueError(f"completion rate {cr} outside [0, 1]")
    if cr > 0.6:
        return DifficultyClass.TOO_EASY
    if cr < 0.4:
        return DifficultyClass.TOO_DIFFICULT
    return DifficultyClass.IDEAL


def raw_weight(cr: float) -> float:
    """Unnormalized sampling weight 1 - |CR - 0.5|."""
    return 1.0 - abs(cr - 0.5)


@dataclass
class CompletionStats:
    """Per-state outcome history: cumulative totals plus a sliding window.

    Totals are monotone and feed reporting; the window (last `window`
    outcomes per state) feeds the CR used for sampling, so stale outcomes
    from a weaker agent age out.
    """

    n_states: int = N_STATES
    window: int = DEFAULT_WINDOW
    attempts: np.ndarray = field(default=None)
    successes: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.attempts is None:
            self.attempts = np.zeros(self.n_states, dtype=np.int64)
        if self.successes is None:
            self.successes = np.zeros(self.n_states, dtype=np.int64)
        self._windows = [deque(maxlen=self.window) for _ in range(self.n_states)]

    def update(self, idx: int, outcome: DialogueOutcome) -> None:
        if outcome is DialogueOutcome.ONGOING:
            raise ValueError("cannot record an ongoing dialogue")
        if not (0 <= idx < self.n_states):
            raise ValueError(f"state index {idx} out of range")
        success = outcome is DialogueOutcome.SUCCESS
        self.attempts[idx] += 1
        self.successes[idx] += int(success)
        self._windows[idx].append(success)

    def windowed_counts(self, idx: int) -> tuple[int, int]:
        w = self._windows[idx]
        return len(w), sum(w)

    def cr(self, idx: int) -> float | None:
        """Raw windowed completion rate; None when the state is unvisited."""
        n, s = self.windowed_counts(idx)
        return s / n if n else None

    def cr_smoothed(self, idx: int) -> float:
        """Windowed CR with Laplace smoothing at low attempt counts.

        Unvisited states come out at exactly 0.5, i.e. maximal sampling
        weight: optimism under ignorance keeps all states explored.
        """
        n, s = self.windowed_counts(idx)
        if n < SMOOTHING_MIN_ATTEMPTS:
            return (s + 1) / (n + 2)
        return s / n

    def seed_window(self, idx: int, attempts: int, successes: int) -> None:
        """Fill a state's window to a given count ratio (for loading tables)."""
        if successes > attempts:
            raise ValueError("successes exceed attempts")
        n = min(attempts, self.window)
        s = round(successes * n / attempts) if attempts else 0
        self._windows[idx].clear()
        self._windows[idx].extend([True] * s + [False] * (n - s))
        self.attempts[idx] = attempts
        self.successes[idx] = successes


def sampling_weights(stats: CompletionStats) -> np.ndarray:
    """Normalized per-state probabilities 1 - |CR - 0.5| over smoothed CRs."""
    raw = np.array([raw_weight(stats.cr_smoothed(i)) for i in range(stats.n_states)])
    return raw / raw.sum()


def draw_state(stats: CompletionStats, rng: np.random.Generator,
               weights: np.ndarray | None = None) -> int:
    """One state index from the current sampling distribution."""
    if weights is None:
        weights = sampling_weights(stats)
    # inverse-CDF draw: much faster than Generator.choice with p=
    return int(np.searchsorted(np.cumsum(weights), rng.random(), side="right"))


def sample_batch(
    stats: CompletionStats,
    batch_size: int,
    rng: np.random.Generator,
    *,
    n_max: int = DEFAULT_N_MAX,
    uniform: bool = False,
) -> list[UserProfile]:
    """Sample `batch_size` unique consistent profiles.

    State indices follow the difficulty weights (uniform over states when
    `uniform` is set or stats are empty, which the weights already yield);
    trait subsets are drawn uniformly from the consistent subsets of each
    state. The batch is deduplicated and topped up until it has
    `batch_size` unique profiles or the per-state cap of `n_max` distinct
    trait combinations binds everywhere.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    weights = None
    if not uniform:
        weights = sampling_weights(stats)
    subset_cache: dict[int, list] = {}
    per_state_ids: dict[int, set[int]] = {}
    batch: list[UserProfile] = []
    seen: set[int] = set()
    attempts_left = 200 * batch_size
    while len(batch) < batch_size and attempts_left > 0:
        attempts_left -= 1
        if uniform:
            idx = int(rng.integers(stats.n_states))
        else:
            idx = draw_state(stats, rng, weights)
        subsets = subset_cache.get(idx)
        if subsets is None:
            subsets = consistent_trait_subsets(index_state(idx))
            subset_cache[idx] = subsets
        used = per_state_ids.setdefault(idx, set())
        if len(used) >= min(n_max, len(subsets)):
            if all(
                len(per_state_ids.get(i, ())) >= min(n_max, len(subset_cache.get(i, range(32))))
                for i in range(stats.n_states)
            ):
                break  # cap binds everywhere; return a short batch
            continue
        traits = subsets[int(rng.integers(len(subsets)))]
        profile = build_profile(index_state(idx), traits)
        if profile.profile_id in seen:
            continue
        seen.add(profile.profile_id)
        used.add(profile.profile_id)
        batch.append(profile)
    return dedup(batch)


def stats_table(stats: CompletionStats) -> list[dict]:
    """Per-state rows (state, attempts, successes, cr, class, weight)."""
    weights = sampling_weights(stats)
    rows = []
    for i in range(stats.n_states):
        cr = stats.cr(i)
        smoothed = stats.cr_smoothed(i)
        rows.append({
            "index": i,
            "state": index_state(i).serialize() if stats.n_states == N_STATES else str(i),
            "attempts": int(stats.attempts[i]),
            "successes": int(stats.successes[i]),
            "cr": cr,
            "class": classify(smoothed).value,
            "weight": float(weights[i]),
        })
    return rows
