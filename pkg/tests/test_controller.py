import numpy as np
import pytest

from dialarena.behaviors import is_consistent
from dialarena.controller import (
    CompletionStats,
    DifficultyClass,
    classify,
    draw_state,
    raw_weight,
    sample_batch,
    sampling_weights,
    stats_table,
)
from dialarena.user_model import DialogueOutcome


def stats_with(crs, attempts=10):
    """Stats over len(crs) states with exact raw windowed CRs."""
    stats = CompletionStats(n_states=len(crs))
    for i, cr in enumerate(crs):
        wins = round(cr * attempts)
        assert wins / attempts == cr, "pick attempts so cr is exact"
        for k in range(attempts):
            stats.update(i, DialogueOutcome.SUCCESS if k < wins else DialogueOutcome.TIMEOUT)
    return stats


def test_update_stats_examples():
    stats = CompletionStats(n_states=3)
    stats.update(0, DialogueOutcome.SUCCESS)
    assert stats.attempts[0] == 1 and stats.successes[0] == 1 and stats.cr(0) == 1.0
    stats = stats_with([0.5], attempts=4)
    stats.update(0, DialogueOutcome.REFUSAL)
    assert stats.attempts[0] == 5 and stats.successes[0] == 2 and stats.cr(0) == 0.4


def test_update_rejects_ongoing():
    stats = CompletionStats(n_states=1)
    with pytest.raises(ValueError):
        stats.update(0, DialogueOutcome.ONGOING)


def test_counts_monotone():
    rng = np.random.default_rng(0)
    stats = CompletionStats(n_states=4, window=10)
    prev_a, prev_s = stats.attempts.copy(), stats.successes.copy()
    outcomes = [DialogueOutcome.SUCCESS, DialogueOutcome.REFUSAL, DialogueOutcome.TIMEOUT]
    for _ in range(200):
        stats.update(int(rng.integers(4)), outcomes[rng.integers(3)])
        assert np.all(stats.attempts >= prev_a) and np.all(stats.successes >= prev_s)
        assert np.all(stats.successes <= stats.attempts)
        prev_a, prev_s = stats.attempts.copy(), stats.successes.copy()


def test_classify_thresholds():
    assert classify(0.7) is DifficultyClass.TOO_EASY
    assert classify(0.4) is DifficultyClass.IDEAL
    assert classify(0.35) is DifficultyClass.TOO_DIFFICULT
    assert classify(0.6) is DifficultyClass.IDEAL
    assert classify(0.61) is DifficultyClass.TOO_EASY


def test_classify_partitions_reachable_rates():
    # every successes <= attempts <= 50 lands in exactly one class
    for n in range(1, 51):
        for s in range(n + 1):
            cls = classify(s / n)
            assert cls in DifficultyClass


def test_raw_weight_examples():
    assert raw_weight(0.5) == 1.0
    assert raw_weight(0.0) == 0.5
    assert raw_weight(1.0) == 0.5


def test_raw_weight_symmetric():
    for x in np.linspace(0, 0.5, 51):
        assert raw_weight(0.5 + x) == pytest.approx(raw_weight(0.5 - x), abs=1e-15)


def test_weights_toy_example():
    stats = stats_with([0.5, 0.3, 0.9])
    w = sampling_weights(stats)
    np.testing.assert_allclose(w, [1.0 / 2.4, 0.8 / 2.4, 0.6 / 2.4], atol=1e-12)


def test_weights_are_distribution():
    rng = np.random.default_rng(1)
    stats = CompletionStats(n_states=20, window=30)
    outcomes = [DialogueOutcome.SUCCESS, DialogueOutcome.TIMEOUT]
    for _ in range(500):
        stats.update(int(rng.integers(20)), outcomes[rng.integers(2)])
        w = sampling_weights(stats)
        assert abs(w.sum() - 1.0) < 1e-12
        assert np.all(w > 0) and np.all(w <= 1)


def test_unvisited_states_get_max_raw_weight():
    stats = CompletionStats(n_states=4)
    assert stats.cr_smoothed(0) == 0.5
    w = sampling_weights(stats)
    np.testing.assert_allclose(w, 0.25)


def test_success_never_raises_weight_above_half_cr():
    rng = np.random.default_rng(5)
    stats = CompletionStats(n_states=1, window=50)
    for _ in range(300):
        before = raw_weight(stats.cr_smoothed(0))
        cr_before = stats.cr_smoothed(0)
        outcome = DialogueOutcome.SUCCESS if rng.random() < 0.6 else DialogueOutcome.REFUSAL
        stats.update(0, outcome)
        if outcome is DialogueOutcome.SUCCESS and cr_before >= 0.5:
            assert raw_weight(stats.cr_smoothed(0)) <= before + 1e-12


def test_sample_batch_unique_and_consistent():
    stats = CompletionStats()
    rng = np.random.default_rng(2)
    batch = sample_batch(stats, 60, rng)
    assert len(batch) == 60
    ids = [p.profile_id for p in batch]
    assert len(set(ids)) == 60
    assert all(is_consistent(p) for p in batch)


def test_sample_batch_single():
    batch = sample_batch(CompletionStats(), 1, np.random.default_rng(3))
    assert len(batch) == 1 and is_consistent(batch[0])


def test_sample_batch_cap_binds():
    # one state, tiny cap: the batch comes back short rather than looping
    stats = CompletionStats(n_states=1)
    batch = sample_batch(stats, 10, np.random.default_rng(4), n_max=3)
    assert len(batch) <= 3


def test_empty_stats_draws_uniform():
    stats = CompletionStats()
    rng = np.random.default_rng(6)
    w = sampling_weights(stats)
    counts = np.zeros(120)
    n = 100_000
    for _ in range(n):
        counts[draw_state(stats, rng, w)] += 1
    from scipy import stats as sps
    _, p = sps.chisquare(counts)
    assert p > 0.01


def test_eq1_draw_distribution():
    crs = [0.5, 0.3, 0.9, 0.0, 1.0]
    stats = stats_with(crs)
    w = sampling_weights(stats)
    expected = np.array([1.0, 0.8, 0.6, 0.5, 0.5])
    np.testing.assert_allclose(w, expected / expected.sum(), atol=1e-12)
    rng = np.random.default_rng(7)
    counts = np.zeros(5)
    n = 100_000
    for _ in range(n):
        counts[draw_state(stats, rng, w)] += 1
    from scipy import stats as sps
    _, p = sps.chisquare(counts, n * w)
    assert p > 0.01


def test_stats_table_shape():
    stats = CompletionStats()
    stats.update(0, DialogueOutcome.SUCCESS)
    rows = stats_table(stats)
    assert len(rows) == 120
    assert rows[0]["state"] == "0,0,0"
    assert rows[0]["attempts"] == 1 and rows[0]["cr"] == 1.0
    assert rows[1]["cr"] is None  # unvisited
