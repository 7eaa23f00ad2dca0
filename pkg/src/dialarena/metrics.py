"""Service-agent evaluation metrics computed from trajectory sets.

CR: completion rate. ATT: mean turns over successful dialogues (None when
there are none). UPA: 1 - mean of range-normalized per-dimension MAEs of the
agent's state estimates, pooled over every turn of every dialogue. EI/TI/CI:
mean final-minus-initial level change per dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .user_model import DialogueOutcome

_RANGES = (4.0, 3.0, 5.0)  # c, e, tr level spans


@dataclass(frozen=True)
class MetricBundle:
    cr: float
    cr_std: float
    att: float | None
    att_std: float | None
    upa: float
    upa_std: float
    ei: float
    ei_std: float
    ti: float
    ti_std: float
    ci: float
    ci_std: float

    COLUMNS = ("cr", "att", "upa", "ei", "ti", "ci")

    def row(self) -> dict:
        return {
            "cr": self.cr, "cr_std": self.cr_std,
            "att": self.att, "att_std": self.att_std,
            "upa": self.upa, "upa_std": self.upa_std,
            "ei": self.ei, "ei_std": self.ei_std,
            "ti": self.ti, "ti_std": self.ti_std,
            "ci": self.ci, "ci_std": self.ci_std,
        }


def _mean(xs) -> float:
    return sum(xs) / len(xs)


def _std(xs) -> float:
    if len(xs) < 2:
        return 0.0
    m = _mean(xs)
    return math.sqrt(sum((x - m) ** 2 for x in xs) / len(xs))


def _require_terminal(trajectories):
    if not trajectories:
        raise ValueError("no trajectories")
    for t in trajectories:
        if t.outcome is DialogueOutcome.ONGOING:
            raise ValueError("trajectory is not terminal")


def completion_rate(trajectories) -> float:
    _require_terminal(trajectories)
    wins = sum(t.outcome is DialogueOutcome.SUCCESS for t in trajectories)
    return wins / len(trajectories)


def avg_turns_to_target(trajectories) -> float | None:
    """Mean dialogue length over successes only; None when nothing succeeded."""
    _require_terminal(trajectories)
    lengths = [len(t.steps) for t in trajectories if t.outcome is DialogueOutcome.SUCCESS]
    return _mean(lengths) if lengths else None


def upa(trajectories) -> float:
    """User portrait accuracy from per-turn estimate errors.

    MAE per dimension is pooled over all turns of all dialogues, normalized
    by the dimension's level span, and averaged: UPA = 1 - mean(nMAE).
    """
    _require_terminal(trajectories)
    err = [0.0, 0.0, 0.0]
    n = 0
    for t in trajectories:
        for step in t.steps:
            if step.estimate is None:
                raise ValueError("trajectory step is missing a state estimate")
            hidden = step.hidden.as_tuple()
            for d in range(3):
                err[d] += abs(step.estimate[d] - hidden[d])
            n += 1
    if n == 0:
        raise ValueError("no turns to score")
    return upa_from_maes(err[0] / n, err[1] / n, err[2] / n)


def upa_from_maes(mae_c: float, mae_e: float, mae_tr: float) -> float:
    return 1.0 - (mae_c / _RANGES[0] + mae_e / _RANGES[1] + mae_tr / _RANGES[2]) / 3.0


def _per_dialogue_upa(t) -> float:
    err = [0.0, 0.0, 0.0]
    for step in t.steps:
        hidden = step.hidden.as_tuple()
        for d in range(3):
            err[d] += abs(step.estimate[d] - hidden[d])
    n = len(t.steps)
    return upa_from_maes(err[0] / n, err[1] / n, err[2] / n)


def improvements(trajectories) -> tuple[float, float, float]:
    """(EI, TI, CI): mean emotion / trust / cooperation change, initial to final."""
    _require_terminal(trajectories)
    de = [t.final_state.e - t.profile.initial.e for t in trajectories]
    dtr = [t.final_state.tr - t.profile.initial.tr for t in trajectories]
    dc = [t.final_state.c - t.profile.initial.c for t in trajectories]
    return _mean(de), _mean(dtr), _mean(dc)


def bundle(trajectories) -> MetricBundle:
    """All six metrics with across-dialogue standard deviations."""
    _require_terminal(trajectories)
    wins = [float(t.outcome is DialogueOutcome.SUCCESS) for t in trajectories]
    lengths = [len(t.steps) for t in trajectories if t.outcome is DialogueOutcome.SUCCESS]
    per_upa = [_per_dialogue_upa(t) for t in trajectories if t.steps]
    de = [float(t.final_state.e - t.profile.initial.e) for t in trajectories]
    dtr = [float(t.final_state.tr - t.profile.initial.tr) for t in trajectories]
    dc = [float(t.final_state.c - t.profile.initial.c) for t in trajectories]
    return MetricBundle(
        cr=_mean(wins), cr_std=_std(wins),
        att=_mean(lengths) if lengths else None,
        att_std=_std([float(x) for x in lengths]) if lengths else None,
        upa=upa(trajectories), upa_std=_std(per_upa),
        ei=_mean(de), ei_std=_std(de),
        ti=_mean(dtr), ti_std=_std(dtr),
        ci=_mean(dc), ci_std=_std(dc),
    )
