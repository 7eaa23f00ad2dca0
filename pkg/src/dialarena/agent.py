"""Service-agent side: noisy-state estimator, tabular softmax policy, baselines.

The trainable policy is a logit table over (estimated-state bucket, 4-bit
context flags, action). Scripted expert / mediocre / random agents provide
calibration opponents; the expert cheats by reading the true session state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .states import E_LEVELS, N_STATES, TR_LEVELS
from .user_model import (
    ACTIONS,
    N_ACTIONS,
    AgentAction,
    OBJECTION_TOKENS,
    UserSession,
    UserToken,
)

N_FLAG_COMBOS = 16
SMOOTHING_BETA = 0.6
LATE_TURN = 7  # flag bit 3: dialogue has run past this many turns

CHECKPOINT_VERSION = 1


def _round_level(x: float, hi: int) -> int:
    v = int(np.floor(x + 0.5))
    return 0 if v < 0 else (hi if v > hi else v)


@dataclass
class StateEstimate:
    """Per-dimension smoothed estimate of the hidden user state."""

    fc: float
    fe: float
    ftr: float
    conf: tuple[float, float, float] = (0.5, 0.5, 0.5)

    def levels(self) -> tuple[int, int, int]:
        return (
            _round_level(self.fc, 4),
            _round_level(self.fe, 3),
            _round_level(self.ftr, 5),
        )

    def bucket(self) -> int:
        c, e, tr = self.levels()
        return (c * E_LEVELS + e) * TR_LEVELS + tr

    @classmethod
    def from_observation(cls, obs_levels: tuple[int, int, int]) -> "StateEstimate":
        oc, oe, otr = obs_levels
        return cls(float(oc), float(oe), float(otr))


def update_estimate(
    est: StateEstimate,
    obs_levels: tuple[int, int, int],
    beta: float = SMOOTHING_BETA,
) -> StateEstimate:
    """Exponential smoothing toward the observation; confidence tracks agreement."""
    oc, oe, otr = obs_levels
    new = StateEstimate(
        fc=(1 - beta) * est.fc + beta * oc,
        fe=(1 - beta) * est.fe + beta * oe,
        ftr=(1 - beta) * est.ftr + beta * otr,
    )
    agree = tuple(
        1.0 if o == lvl else 0.0 for o, lvl in zip((oc, oe, otr), est.levels())
    )
    new.conf = tuple(0.8 * c + 0.2 * a for c, a in zip(est.conf, agree))
    return new


def flags_index(offer_presented: bool, objection_pending: bool,
                ai_question_pending: bool, late: bool) -> int:
    return (
        int(offer_presented)
        | (int(objection_pending) << 1)
        | (int(ai_question_pending) << 2)
        | (int(late) << 3)
    )


@dataclass
class PolicyParams:
    """Logit table (bucket x flag-combo x action) for the softmax policy."""

    logits: np.ndarray = field(
        default_factory=lambda: np.zeros((N_STATES, N_FLAG_COMBOS, N_ACTIONS))
    )

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.logits.copy())

    def save(self, path) -> None:
        np.savez(path, version=np.int64(CHECKPOINT_VERSION), logits=self.logits)

    @classmethod
    def load(cls, path) -> "PolicyParams":
        with np.load(path) as data:
            if int(data["version"]) != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {int(data['version'])}")
            return cls(np.array(data["logits"]))


@dataclass(frozen=True)
class ActionSample:
    action: AgentAction
    log_prob: float
    probs: np.ndarray


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def select_action(
    params: PolicyParams, bucket: int, flags: int, rng: np.random.Generator
) -> ActionSample:
    """Sample an action from the softmax over the (bucket, flags) logit row."""
    row = params.logits[bucket, flags]
    if not np.all(np.isfinite(row)):
        raise ValueError(f"non-finite logits at bucket={bucket} flags={flags}")
    probs = softmax(row)
    a = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
    a = min(a, N_ACTIONS - 1)  # guard the cumsum==1.0 edge
    return ActionSample(ACTIONS[a], float(np.log(probs[a])), probs)


# --- scripted calibration agents -------------------------------------------

def expert_action(sess: UserSession) -> AgentAction:
    """Effect-table-optimal move given oracle access to the true session."""
    s = sess.state
    if sess.turn == 0 and s.e <= 1:
        return AgentAction.GREET
    if sess.cost_pending:
        return AgentAction.ADDRESS_COST_CONCERN
    if sess.ai_pending:
        return AgentAction.IDENTITY_DEFENSE
    if sess.offer_presented and s.c >= 3 and s.tr >= 4:
        return AgentAction.CLOSE_DEAL
    if not sess.asked_needs:
        return AgentAction.ASK_NEEDS
    if not sess.offer_presented and s.c >= 2:
        return AgentAction.PRESENT_OFFER
    if s.e == 0:
        return AgentAction.APOLOGIZE
    if s.tr < 4 and s.e >= 1:
        return AgentAction.PROVIDE_EVIDENCE
    if sess.prev_token in OBJECTION_TOKENS:
        return AgentAction.HANDLE_OBJECTION
    return AgentAction.BUILD_RAPPORT


def scripted_agent(skill: str):
    """Scripted policy fn(session, rng) -> AgentAction.

    expert: always the oracle-optimal move; mediocre: optimal with
    probability 0.5, else uniform; random: uniform.
    """
    if skill == "expert":
        return lambda sess, rng: expert_action(sess)
    if skill == "mediocre":
        def mediocre(sess, rng):
            if rng.random() < 0.5:
                return expert_action(sess)
            return ACTIONS[int(rng.integers(N_ACTIONS))]
        return mediocre
    if skill == "random":
        return lambda sess, rng: ACTIONS[int(rng.integers(N_ACTIONS))]
    raise ValueError(f"unknown scripted skill {skill!r}")


class AgentContext:
    """Agent-visible dialogue features, tracked from its own action/token stream."""

    __slots__ = ("offer_presented", "objection_pending", "ai_question_pending", "turn")

    def __init__(self):
        self.offer_presented = False
        self.objection_pending = False
        self.ai_question_pending = False
        self.turn = 0

    def flags(self) -> int:
        return flags_index(
            self.offer_presented,
            self.objection_pending,
            self.ai_question_pending,
            self.turn > LATE_TURN,
        )

    def note_action(self, action: AgentAction) -> None:
        self.turn += 1
        if action is AgentAction.PRESENT_OFFER:
            self.offer_presented = True
        if action is AgentAction.IDENTITY_DEFENSE:
            self.ai_question_pending = False

    def note_token(self, token: UserToken) -> None:
        self.objection_pending = token in OBJECTION_TOKENS
        if token is UserToken.AI_QUESTION:
            self.ai_question_pending = True
