"""Co-evolutionary training loop: rollouts, optimization, difficulty feedback.

An iteration samples a batch of profiles (Phase 1), runs grouped rollouts
(Phase 2), applies the group-relative policy update (Phase 3), and feeds the
outcomes back into the completion-rate statistics that steer the next batch
(Phase 4). Ablation switches reproduce the degenerate variants: uniform
profile sampling, frozen difficulty statistics, and an adversarially trained
user side that picks initial states and may force outcomes.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .agent import (
    AgentContext,
    PolicyParams,
    StateEstimate,
    select_action,
    softmax,
    update_estimate,
)
from .behaviors import UserProfile, build_profile, consistent_trait_subsets
from .config import ArenaConfig
from .controller import (
    CompletionStats,
    classify,
    DifficultyClass,
    sample_batch,
)
from .grpo import (
    PolicyStep,
    RewardedGroup,
    apply_update,
    group_advantages,
    policy_gradient,
    task_reward,
)
from .metrics import MetricBundle, bundle
from .states import N_STATES, UserState, index_state, state_index
from .user_model import (
    ACTION_INDEX,
    AgentAction,
    DialogueOutcome,
    EffectTable,
    UserToken,
    default_effect_table,
    init_session,
    observe_state,
    step_user,
)

# Substream tags keeping profile-sampling, rollout, and evaluation random
# streams disjoint under one root seed.
_STREAM_BATCH = 1
_STREAM_ROLLOUT = 2
_STREAM_EVAL = 3

URM_NORMAL, URM_ACCEPT, URM_REJECT = 0, 1, 2


@dataclass
class TurnRecord:
    token: UserToken
    obs: tuple[int, int, int]
    action: AgentAction
    log_prob: float | None
    bucket: int
    flags: int
    hidden: UserState
    estimate: tuple[int, int, int]


@dataclass
class Trajectory:
    profile: UserProfile
    steps: list[TurnRecord]
    outcome: DialogueOutcome
    reward: float
    override: int | None = None          # URM forced decision, ablation only
    override_log_prob: float | None = None

    @property
    def final_state(self) -> UserState:
        return self.steps[-1].hidden if self.steps else self.profile.initial

    def policy_steps(self) -> list[PolicyStep]:
        return [
            PolicyStep(s.bucket, s.flags, ACTION_INDEX[s.action], s.log_prob)
            for s in self.steps
            if s.log_prob is not None
        ]


class TabularPolicy:
    """Learnable softmax policy over (estimate bucket, context flags)."""

    trainable = True

    def __init__(self, params: PolicyParams):
        self.params = params

    def act(self, sess, est, ctx, rng):
        sample = select_action(self.params, est.bucket(), ctx.flags(), rng)
        return sample.action, sample.log_prob


class ScriptedPolicy:
    """Wraps a scripted fn(session, rng) -> AgentAction; not trained."""

    trainable = False

    def __init__(self, fn):
        self.fn = fn

    def act(self, sess, est, ctx, rng):
        return self.fn(sess, rng), None


@dataclass
class AdversarialUrm:
    """Toy trainable user side for the reward-hacking ablation.

    Picks initial states via a softmax over the 120-state grid and, per
    dialogue, may force the outcome (accept / reject) regardless of agent
    play. Both heads are trained with the same group-relative machinery,
    rewarded by agent failure.
    """

    state_logits: np.ndarray = field(default_factory=lambda: np.zeros(N_STATES))
    accept_logits: np.ndarray = field(default_factory=lambda: np.zeros((N_STATES, 3)))

    def sample_state(self, rng) -> tuple[int, float, np.ndarray]:
        probs = softmax(self.state_logits)
        idx = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
        idx = min(idx, N_STATES - 1)
        return idx, float(np.log(probs[idx])), probs

    def sample_override(self, state_idx: int, rng) -> tuple[int, float]:
        probs = softmax(self.accept_logits[state_idx])
        d = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
        d = min(d, 2)
        return d, float(np.log(probs[d]))


def run_dialogue(
    policy,
    profile: UserProfile,
    rng: np.random.Generator,
    *,
    table: EffectTable | None = None,
    obs_epsilon: float = 0.2,
    deterministic: bool = False,
    lam: float = 0.0,
    urm: AdversarialUrm | None = None,
) -> Trajectory:
    """One full dialogue from init_session to a terminal outcome."""
    table = table or default_effect_table()
    override = None
    override_lp = None
    if urm is not None:
        override, override_lp = urm.sample_override(state_index(profile.initial), rng)

    sess = init_session(profile, table)
    eps = 0.0 if deterministic else obs_epsilon
    est = StateEstimate.from_observation(observe_state(sess.state, eps, rng))
    ctx = AgentContext()
    steps: list[TurnRecord] = []
    while True:
        action, log_prob = policy.act(sess, est, ctx, rng)
        bucket, flags = est.bucket(), ctx.flags()
        ctx.note_action(action)
        token, obs, outcome = step_user(
            sess, action, rng, table,
            deterministic=deterministic, obs_epsilon=obs_epsilon,
        )
        ctx.note_token(token)
        est = update_estimate(est, obs.levels())
        steps.append(TurnRecord(
            token=token, obs=obs.levels(), action=action, log_prob=log_prob,
            bucket=bucket, flags=flags, hidden=sess.state, estimate=est.levels(),
        ))
        if override == URM_ACCEPT:
            outcome = sess.outcome = DialogueOutcome.SUCCESS
        elif override == URM_REJECT:
            outcome = sess.outcome = DialogueOutcome.REFUSAL
        if outcome is not DialogueOutcome.ONGOING:
            break

    reward = float(task_reward(sess.outcome))
    if lam:
        final = steps[-1].hidden
        init = profile.initial
        gain = (final.c - init.c) + (final.e - init.e) + (final.tr - init.tr)
        reward += lam * gain
    return Trajectory(
        profile=profile, steps=steps, outcome=sess.outcome, reward=reward,
        override=override, override_log_prob=override_lp,
    )


@dataclass
class IterationReport:
    iteration: int
    mean_reward: float
    mean_abs_advantage: float
    grad_norm: float
    class_counts: dict[str, int]
    trajectories: list[Trajectory]


class Arena:
    """Holds the loop state: policy params, difficulty stats, optional URM."""

    def __init__(self, cfg: ArenaConfig, policy_params: PolicyParams | None = None,
                 table: EffectTable | None = None):
        self.cfg = cfg
        self.params = policy_params or PolicyParams()
        self.table = table or default_effect_table(cfg.t_max)
        self.stats = CompletionStats(window=cfg.stats_window)
        self.urm = AdversarialUrm() if cfg.train_urm else None

    # --- random substreams --------------------------------------------------

    def batch_rng(self, iteration: int) -> np.random.Generator:
        return np.random.default_rng([self.cfg.seed, _STREAM_BATCH, iteration])

    def rollout_rng(self, iteration: int, rollout: int) -> np.random.Generator:
        return np.random.default_rng([self.cfg.seed, _STREAM_ROLLOUT, iteration, rollout])

    def eval_rng(self, tag: int, idx: int, rep: int) -> np.random.Generator:
        return np.random.default_rng([self.cfg.seed, _STREAM_EVAL, tag, idx, rep])

    # --- phases -------------------------------------------------------------

    def sample_profiles(self, iteration: int) -> list[UserProfile]:
        rng = self.batch_rng(iteration)
        if self.urm is not None:
            # Configuration-1 path: the adversarial user side picks states.
            profiles = []
            self._urm_state_draws = []
            for _ in range(self.cfg.batch_size):
                idx, lp, _ = self.urm.sample_state(rng)
                subsets = consistent_trait_subsets(index_state(idx))
                traits = subsets[int(rng.integers(len(subsets)))]
                profiles.append(build_profile(index_state(idx), traits))
                self._urm_state_draws.append((idx, lp))
            return profiles
        uniform = self.cfg.disable_profile_sampling
        return sample_batch(
            self.stats, self.cfg.batch_size, rng,
            n_max=self.cfg.n_max, uniform=uniform,
        )

    def _rollout(self, iteration: int, rollout: int, profile: UserProfile) -> Trajectory:
        rng = self.rollout_rng(iteration, rollout)
        return run_dialogue(
            TabularPolicy(self.params), profile, rng,
            table=self.table, obs_epsilon=self.cfg.obs_epsilon,
            deterministic=self.cfg.deterministic_user, lam=self.cfg.lam,
            urm=self.urm,
        )

    def collect_groups(self, iteration: int, profiles: list[UserProfile]) -> list[list[Trajectory]]:
        G = self.cfg.group_size
        jobs = [
            (g * G + j, profile)
            for g, profile in enumerate(profiles)
            for j in range(G)
        ]
        if self.cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
                results = list(pool.map(
                    lambda job: self._rollout(iteration, job[0], job[1]), jobs
                ))
        else:
            results = [self._rollout(iteration, k, p) for k, p in jobs]
        return [results[g * G:(g + 1) * G] for g in range(len(profiles))]

    def _update_urm(self, groups: list[list[Trajectory]]) -> None:
        urm = self.urm
        user_rewards = np.array([
            [1.0 - task_reward(t.outcome) for t in grp] for grp in groups
        ])
        # Override head: group-relative advantages on the user's own rewards.
        accept_grad = np.zeros_like(urm.accept_logits)
        n = 0
        for grp, rewards in zip(groups, user_rewards):
            adv = group_advantages(rewards)
            for t, a in zip(grp, adv):
                idx = state_index(t.profile.initial)
                probs = softmax(urm.accept_logits[idx])
                accept_grad[idx] -= a * probs
                accept_grad[idx, t.override] += a
                n += 1
        accept_grad /= max(n, 1)
        # State-selection head: one draw per group, batch-mean baseline.
        state_grad = np.zeros_like(urm.state_logits)
        group_means = user_rewards.mean(axis=1)
        baseline = group_means.mean()
        probs = softmax(urm.state_logits)
        for (idx, _), gm in zip(self._urm_state_draws, group_means):
            adv = gm - baseline
            state_grad -= adv * probs
            state_grad[idx] += adv
        state_grad /= max(len(groups), 1)
        urm.accept_logits += self.cfg.lr * accept_grad
        urm.state_logits += self.cfg.lr * state_grad

    def train_iteration(self, iteration: int) -> IterationReport:
        profiles = self.sample_profiles(iteration)
        groups = self.collect_groups(iteration, profiles)

        rewarded = [
            RewardedGroup.from_rewards(
                [t.policy_steps() for t in grp], [t.reward for t in grp]
            )
            for grp in groups
        ]
        grad = policy_gradient(self.params, rewarded)
        self.params = apply_update(self.params, grad, self.cfg.lr)
        if self.urm is not None:
            self._update_urm(groups)

        if not self.cfg.disable_mistake_analysis:
            for grp in groups:
                for t in grp:
                    self.stats.update(state_index(t.profile.initial), t.outcome)

        all_adv = np.concatenate([g.advantages for g in rewarded])
        counts = {cls.value: 0 for cls in DifficultyClass}
        for profile in profiles:
            cr = self.stats.cr_smoothed(state_index(profile.initial))
            counts[classify(cr).value] += 1
        flat = [t for grp in groups for t in grp]
        return IterationReport(
            iteration=iteration,
            mean_reward=float(np.mean([t.reward for t in flat])),
            mean_abs_advantage=float(np.mean(np.abs(all_adv))),
            grad_norm=float(np.sqrt((grad ** 2).sum())),
            class_counts=counts,
            trajectories=flat,
        )

    # --- evaluation ---------------------------------------------------------

    def evaluate(self, policy, reps: int, *, tag: int = 0,
                 urm: AdversarialUrm | None = None) -> tuple[MetricBundle, np.ndarray]:
        """Frozen-policy metrics over the full state grid.

        Runs `reps` dialogues per initial state with uniformly drawn
        consistent trait subsets, on an evaluation stream disjoint from
        training. Returns the metric bundle and the per-state CR vector.
        """
        if reps < 1:
            raise ValueError("reps must be >= 1")
        trajectories = []
        per_state = np.zeros(N_STATES)
        for idx in range(N_STATES):
            state = index_state(idx)
            subsets = consistent_trait_subsets(state)
            wins = 0
            for rep in range(reps):
                rng = self.eval_rng(tag, idx, rep)
                traits = subsets[int(rng.integers(len(subsets)))]
                traj = run_dialogue(
                    policy, build_profile(state, traits), rng,
                    table=self.table, obs_epsilon=self.cfg.obs_epsilon,
                    deterministic=self.cfg.deterministic_user, urm=urm,
                )
                trajectories.append(traj)
                wins += int(traj.outcome is DialogueOutcome.SUCCESS)
            per_state[idx] = wins / reps
        return bundle(trajectories), per_state
