"""Frozen rule-based user role-play model.

The user keeps a hidden (cooperation, emotion, trust) state that evolves in
response to agent actions through a declarative effect table. Replies are
symbolic tokens, outcomes are Success / Refusal / Timeout, and the only path
to Success is a CloseDeal played when the hidden state actually supports it,
so task completion stays causally tied to agent behavior.

The effect table is data, not code: rows pair a guard expression with a
state delta, and the whole table round-trips through a JSON-able dict so
alternate dynamics can be loaded from a config file.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .behaviors import BehaviorTrait, UserProfile, check_consistency
from .states import StateDelta, UserState, apply_delta

DEFAULT_T_MAX = 15
DEFAULT_OBS_EPSILON = 0.2


class AgentAction(enum.Enum):
    GREET = "greet"
    ASK_NEEDS = "ask_needs"
    PRESENT_OFFER = "present_offer"
    BUILD_RAPPORT = "build_rapport"
    PROVIDE_EVIDENCE = "provide_evidence"
    ADDRESS_COST_CONCERN = "address_cost_concern"
    IDENTITY_DEFENSE = "identity_defense"
    HANDLE_OBJECTION = "handle_objection"
    APOLOGIZE = "apologize"
    CLOSE_DEAL = "close_deal"


ACTIONS: tuple[AgentAction, ...] = tuple(AgentAction)
N_ACTIONS = len(ACTIONS)  # 10
ACTION_INDEX = {a: i for i, a in enumerate(ACTIONS)}


class UserToken(enum.Enum):
    POSITIVE = "positive"
    NEUTRAL = "neutral"
    OBJECTION = "objection"
    COST_OBJECTION = "cost_objection"
    AI_QUESTION = "ai_question"
    DISTRACTED = "distracted"
    ANGRY = "angry"
    AGREE = "agree"
    REFUSE = "refuse"


OBJECTION_TOKENS = frozenset({UserToken.OBJECTION, UserToken.COST_OBJECTION})


class DialogueOutcome(enum.Enum):
    SUCCESS = "success"
    REFUSAL = "refusal"
    TIMEOUT = "timeout"
    ONGOING = "ongoing"


@dataclass(frozen=True)
class Observation:
    oc: int
    oe: int
    otr: int
    token: UserToken

    def levels(self) -> tuple[int, int, int]:
        return (self.oc, self.oe, self.otr)


# Rule kinds; direction fidelity is asserted over these tags.
HELPFUL = "helpful"
MISUSE = "misuse"
NEUTRAL = "neutral"


@dataclass(frozen=True)
class EffectRule:
    action: AgentAction
    when: str              # guard over the step context; "" means always
    delta: tuple[int, int, int]
    kind: str              # helpful | misuse | neutral
    sets_offer: bool = False
    clears_cost: bool = False
    clears_ai: bool = False
    marks_needs: bool = False

    def to_dict(self) -> dict:
        d = {
            "action": self.action.value,
            "when": self.when,
            "delta": list(self.delta),
            "kind": self.kind,
        }
        for flag in ("sets_offer", "clears_cost", "clears_ai", "marks_needs"):
            if getattr(self, flag):
                d[flag] = True
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EffectRule":
        return cls(
            action=AgentAction(d["action"]),
            when=d.get("when", ""),
            delta=tuple(d["delta"]),
            kind=d["kind"],
            sets_offer=d.get("sets_offer", False),
            clears_cost=d.get("clears_cost", False),
            clears_ai=d.get("clears_ai", False),
            marks_needs=d.get("marks_needs", False),
        )


def _compile(expr: str):
    return compile(expr, "<effect-rule>", "eval") if expr else None


_GUARD_VARS = (
    "c", "e", "tr", "turn", "offer_presented", "cost_pending", "ai_pending",
    "asked_needs", "prev_objection",
)


@dataclass
class EffectTable:
    """Dynamics parameters plus the per-action guarded delta rules.

    For each action the first rule whose guard holds is applied. CloseDeal is
    special-cased: `success_when` is checked before its rules.
    """

    rules: list[EffectRule]
    success_when: str = "offer_presented and c >= 3 and tr >= 4 and not cost_pending"
    refusal_when: str = "c == 0 and e == 0 and turn > 2"
    t_max: int = DEFAULT_T_MAX
    busy_t_max: int = 10
    lapse_prob: float = 0.15
    drift_prob: float = 0.1
    skeptic_question_turn: int = 2

    def __post_init__(self):
        self._by_action: dict[AgentAction, list[tuple]] = {a: [] for a in ACTIONS}
        for rule in self.rules:
            self._by_action[rule.action].append((_compile(rule.when), rule))
        self._success_code = _compile(self.success_when)
        self._refusal_code = _compile(self.refusal_when)

    def match(self, action: AgentAction, ctx: dict) -> EffectRule | None:
        for code, rule in self._by_action[action]:
            if code is None or eval(code, {"__builtins__": {}}, ctx):
                return rule
        return None

    def success(self, ctx: dict) -> bool:
        return bool(eval(self._success_code, {"__builtins__": {}}, ctx))

    def refusal(self, ctx: dict) -> bool:
        return bool(eval(self._refusal_code, {"__builtins__": {}}, ctx))

    def to_dict(self) -> dict:
        return {
            "rules": [r.to_dict() for r in self.rules],
            "success_when": self.success_when,
            "refusal_when": self.refusal_when,
            "t_max": self.t_max,
            "busy_t_max": self.busy_t_max,
            "lapse_prob": self.lapse_prob,
            "drift_prob": self.drift_prob,
            "skeptic_question_turn": self.skeptic_question_turn,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EffectTable":
        kwargs = {k: v for k, v in d.items() if k != "rules"}
        return cls(rules=[EffectRule.from_dict(r) for r in d["rules"]], **kwargs)


def default_effect_table(t_max: int = DEFAULT_T_MAX) -> EffectTable:
    A = AgentAction
    rules = [
        EffectRule(A.GREET, "turn == 1 and e <= 1", (0, 1, 0), HELPFUL),
        EffectRule(A.GREET, "turn == 1", (0, 0, 0), NEUTRAL),
        EffectRule(A.GREET, "", (-1, 0, 0), MISUSE),
        EffectRule(A.ASK_NEEDS, "not asked_needs", (1, 0, 0), HELPFUL, marks_needs=True),
        EffectRule(A.ASK_NEEDS, "", (0, 0, 0), NEUTRAL),
        EffectRule(A.BUILD_RAPPORT, "", (0, 1, 0), HELPFUL),
        # Evidence only lands on an engaged user; a pending AI-identity
        # challenge halves the trust gain (floor -> 0).
        EffectRule(A.PROVIDE_EVIDENCE, "e >= 1 and not ai_pending", (0, 0, 1), HELPFUL),
        EffectRule(A.PROVIDE_EVIDENCE, "", (0, 0, 0), NEUTRAL),
        EffectRule(A.PRESENT_OFFER, "c >= 2", (0, 0, 0), HELPFUL, sets_offer=True),
        EffectRule(A.PRESENT_OFFER, "", (-1, 0, 0), MISUSE),
        EffectRule(A.ADDRESS_COST_CONCERN, "cost_pending", (1, 0, 0), HELPFUL, clears_cost=True),
        EffectRule(A.ADDRESS_COST_CONCERN, "", (0, 0, 0), NEUTRAL),
        EffectRule(A.IDENTITY_DEFENSE, "ai_pending", (0, 0, 1), HELPFUL, clears_ai=True),
        EffectRule(A.IDENTITY_DEFENSE, "", (0, 0, -1), MISUSE),
        EffectRule(A.HANDLE_OBJECTION, "prev_objection", (1, 0, 0), HELPFUL),
        EffectRule(A.HANDLE_OBJECTION, "", (0, 0, 0), NEUTRAL),
        EffectRule(A.APOLOGIZE, "e == 0", (0, 1, 0), HELPFUL),
        EffectRule(A.APOLOGIZE, "", (0, 0, 0), NEUTRAL),
        # Reached only when success_when failed: a premature close annoys.
        EffectRule(A.CLOSE_DEAL, "", (-1, 0, 0), MISUSE),
    ]
    return EffectTable(rules=rules, t_max=t_max)


# Flag lifecycle: never raised -> raised (pending) -> cleared, monotone.
_FLAG_NONE = 0
_FLAG_RAISED = 1
_FLAG_CLEARED = 2


@dataclass
class UserSession:
    """Single-owner mutable dialogue state on the user side."""

    profile: UserProfile
    state: UserState
    turn: int = 0
    t_max: int = DEFAULT_T_MAX
    offer_presented: bool = False
    cost_flag: int = _FLAG_NONE
    ai_flag: int = _FLAG_NONE
    asked_needs: bool = False
    prev_token: UserToken | None = None
    outcome: DialogueOutcome = DialogueOutcome.ONGOING

    @property
    def cost_pending(self) -> bool:
        return self.cost_flag == _FLAG_RAISED

    @property
    def ai_pending(self) -> bool:
        return self.ai_flag == _FLAG_RAISED

    @property
    def closed(self) -> bool:
        return self.outcome is not DialogueOutcome.ONGOING

    def guard_context(self) -> dict:
        return {
            "c": self.state.c,
            "e": self.state.e,
            "tr": self.state.tr,
            "turn": self.turn,
            "offer_presented": self.offer_presented,
            "cost_pending": self.cost_pending,
            "ai_pending": self.ai_pending,
            "asked_needs": self.asked_needs,
            "prev_objection": self.prev_token in OBJECTION_TOKENS,
        }


def init_session(profile: UserProfile, table: EffectTable | None = None) -> UserSession:
    """Open a session at the profile's initial state with all flags unset."""
    violations = check_consistency(profile)
    if violations:
        raise ValueError(f"inconsistent profile: {'; '.join(violations)}")
    table = table or default_effect_table()
    t_max = table.busy_t_max if BehaviorTrait.BUSY in profile.traits else table.t_max
    return UserSession(profile=profile, state=profile.initial, t_max=t_max)


def observe_state(
    s: UserState, epsilon: float, rng: np.random.Generator
) -> tuple[int, int, int]:
    """Noisy readout: each dimension exact with prob 1-eps, else +-1, clamped."""
    if not (0.0 <= epsilon <= 1.0):
        raise ValueError(f"epsilon {epsilon} outside [0, 1]")
    out = []
    for value, hi in ((s.c, 4), (s.e, 3), (s.tr, 5)):
        if epsilon > 0.0 and rng.random() < epsilon:
            value += 1 if rng.random() < 0.5 else -1
            value = 0 if value < 0 else (hi if value > hi else value)
        out.append(value)
    return tuple(out)


def step_user(
    sess: UserSession,
    action: AgentAction,
    rng: np.random.Generator,
    table: EffectTable | None = None,
    *,
    deterministic: bool = False,
    obs_epsilon: float = DEFAULT_OBS_EPSILON,
) -> tuple[UserToken, Observation, DialogueOutcome]:
    """Advance the session one agent turn; returns (reply, observation, outcome)."""
    if sess.closed:
        raise RuntimeError("step_user called on a closed session")
    if sess.turn >= sess.t_max:
        raise RuntimeError("session already at its turn limit")
    table = table or default_effect_table()
    traits = sess.profile.traits
    sess.turn += 1
    ctx = sess.guard_context()

    token: UserToken | None = None
    lapsed = (
        BehaviorTrait.ATTENTION_LAPSE in traits
        and not deterministic
        and rng.random() < table.lapse_prob
    )
    delta = StateDelta()
    if lapsed:
        token = UserToken.DISTRACTED
    elif action is AgentAction.CLOSE_DEAL and table.success(ctx):
        sess.outcome = DialogueOutcome.SUCCESS
        token = UserToken.AGREE
    else:
        rule = table.match(action, ctx)
        if rule is not None:
            delta = StateDelta(*rule.delta)
            if BehaviorTrait.IRRITABLE in traits:
                delta = delta.scaled_negatives(2)
            sess.state = apply_delta(sess.state, delta)
            if rule.sets_offer:
                sess.offer_presented = True
            if rule.marks_needs:
                sess.asked_needs = True
            if rule.clears_cost and sess.cost_flag == _FLAG_RAISED:
                sess.cost_flag = _FLAG_CLEARED
            if rule.clears_ai and sess.ai_flag == _FLAG_RAISED:
                sess.ai_flag = _FLAG_CLEARED

    # Trait-driven events (flags raise even when the token slot is taken).
    if not lapsed and sess.outcome is DialogueOutcome.ONGOING:
        if (
            BehaviorTrait.COST_CONCERN in traits
            and action is AgentAction.PRESENT_OFFER
            and sess.cost_flag == _FLAG_NONE
        ):
            sess.cost_flag = _FLAG_RAISED
            token = UserToken.COST_OBJECTION
        if (
            BehaviorTrait.AI_SKEPTIC in traits
            and sess.turn == table.skeptic_question_turn
            and sess.ai_flag == _FLAG_NONE
        ):
            sess.ai_flag = _FLAG_RAISED
            token = UserToken.AI_QUESTION

    # Background mood drift: occasionally one dimension slips a level.
    if not deterministic and sess.outcome is DialogueOutcome.ONGOING:
        if rng.random() < table.drift_prob:
            dim = int(rng.integers(3))
            drift = StateDelta(*(-1 if i == dim else 0 for i in range(3)))
            sess.state = apply_delta(sess.state, drift)

    if sess.outcome is DialogueOutcome.ONGOING:
        if table.refusal(sess.guard_context()):
            sess.outcome = DialogueOutcome.REFUSAL
            token = UserToken.REFUSE
        elif sess.turn >= sess.t_max:
            sess.outcome = DialogueOutcome.TIMEOUT

    if token is None:
        if sess.state.e == 0:
            token = UserToken.ANGRY
        elif delta.dc < 0 or delta.de < 0 or delta.dtr < 0:
            token = UserToken.OBJECTION
        elif delta.dc > 0 or delta.de > 0 or delta.dtr > 0:
            token = UserToken.POSITIVE
        else:
            token = UserToken.NEUTRAL

    eps = 0.0 if deterministic else obs_epsilon
    oc, oe, otr = observe_state(sess.state, eps, rng)
    obs = Observation(oc, oe, otr, token)
    sess.prev_token = token
    return token, obs, sess.outcome
