"""Group-relative policy optimization for the tabular softmax policy.

Rewards are the terminal success indicator, advantages are rewards minus the
group mean, and the gradient accumulates advantage-weighted log-softmax
gradients over each trajectory's visited (bucket, flags) rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .agent import PolicyParams, softmax
from .user_model import DialogueOutcome

LOG_PROB_GUARD_TOL = 1e-6


def task_reward(outcome: DialogueOutcome) -> int:
    """1 iff the user agreed; refusal and timeout both count as failure."""
    if outcome is DialogueOutcome.ONGOING:
        raise ValueError("reward undefined for an ongoing dialogue")
    return int(outcome is DialogueOutcome.SUCCESS)


def group_advantages(rewards) -> np.ndarray:
    """Per-trajectory reward minus the group mean."""
    r = np.asarray(rewards, dtype=float)
    if r.size < 1:
        raise ValueError("empty reward group")
    return r - r.mean()


@dataclass(frozen=True)
class PolicyStep:
    """One agent decision as needed by the gradient: where, what, how likely."""

    bucket: int
    flags: int
    action_index: int
    log_prob: float


@dataclass
class RewardedGroup:
    """Trajectory group sharing one initial profile, with rewards and advantages."""

    step_lists: list[list[PolicyStep]]
    rewards: np.ndarray
    advantages: np.ndarray

    @classmethod
    def from_rewards(cls, step_lists, rewards) -> "RewardedGroup":
        rewards = np.asarray(rewards, dtype=float)
        if len(step_lists) != rewards.size:
            raise ValueError("step list / reward length mismatch")
        return cls(step_lists, rewards, group_advantages(rewards))


def policy_gradient(params: PolicyParams, groups: list[RewardedGroup]) -> np.ndarray:
    """Gradient of the surrogate sum_i A_i * sum_t log pi(a_t) over all trajectories.

    For a visited row the log-softmax gradient is onehot(a_t) - probs; rows
    never visited get zero. Stored log-probs are checked against the current
    params to catch stale-parameter reuse.
    """
    grad = np.zeros_like(params.logits)
    prob_cache: dict[tuple[int, int], np.ndarray] = {}
    n_traj = 0
    for group in groups:
        for steps, adv in zip(group.step_lists, group.advantages):
            n_traj += 1
            if adv == 0.0:
                continue
            for step in steps:
                key = (step.bucket, step.flags)
                probs = prob_cache.get(key)
                if probs is None:
                    probs = softmax(params.logits[step.bucket, step.flags])
                    prob_cache[key] = probs
                recomputed = float(np.log(probs[step.action_index]))
                if abs(recomputed - step.log_prob) > LOG_PROB_GUARD_TOL:
                    raise ValueError(
                        "stored log_prob does not match current params "
                        f"(bucket={step.bucket} flags={step.flags} "
                        f"action={step.action_index}): {step.log_prob} vs {recomputed}"
                    )
                grad[step.bucket, step.flags] -= adv * probs
                grad[step.bucket, step.flags, step.action_index] += adv
    if n_traj == 0:
        raise ValueError("no trajectories in gradient computation")
    return grad


def apply_update(params: PolicyParams, gradient: np.ndarray, lr: float) -> PolicyParams:
    """Ascent step params + lr * gradient; rejects non-finite gradients."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    if not np.all(np.isfinite(gradient)):
        bad = int(np.count_nonzero(~np.isfinite(gradient)))
        raise ValueError(f"gradient has {bad} non-finite entries; aborting update")
    return PolicyParams(params.logits + lr * gradient)
