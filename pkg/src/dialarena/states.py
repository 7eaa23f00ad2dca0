"""Discrete user-state grid: levels, indexing, and clamped deltas.

The hidden user state has three ordinal dimensions: cooperation (5 levels),
emotion (4 levels), trust (6 levels), giving 120 distinct states. All state
arithmetic is clamped so a state can never leave the grid.
"""

from __future__ import annotations

from dataclasses import dataclass

C_LEVELS = 5
E_LEVELS = 4
TR_LEVELS = 6
N_STATES = C_LEVELS * E_LEVELS * TR_LEVELS  # 120


@dataclass(frozen=True)
class UserState:
    c: int   # cooperation, 0..4
    e: int   # emotion, 0..3
    tr: int  # trust, 0..5

    def __post_init__(self):
        if not (0 <= self.c < C_LEVELS):
            raise ValueError(f"cooperation level {self.c} out of range 0..{C_LEVELS - 1}")
        if not (0 <= self.e < E_LEVELS):
            raise ValueError(f"emotion level {self.e} out of range 0..{E_LEVELS - 1}")
        if not (0 <= self.tr < TR_LEVELS):
            raise ValueError(f"trust level {self.tr} out of range 0..{TR_LEVELS - 1}")

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.c, self.e, self.tr)

    def serialize(self) -> str:
        """Log form: three comma-separated integers "c,e,tr"."""
        return f"{self.c},{self.e},{self.tr}"

    @classmethod
    def parse(cls, text: str) -> "UserState":
        c, e, tr = (int(x) for x in text.split(","))
        return cls(c, e, tr)


@dataclass(frozen=True)
class StateDelta:
    dc: int = 0
    de: int = 0
    dtr: int = 0

    def scaled_negatives(self, factor: int) -> "StateDelta":
        """Multiply only the negative components (irritable users punish harder)."""
        return StateDelta(
            self.dc * factor if self.dc < 0 else self.dc,
            self.de * factor if self.de < 0 else self.de,
            self.dtr * factor if self.dtr < 0 else self.dtr,
        )

    @property
    def is_zero(self) -> bool:
        return self.dc == 0 and self.de == 0 and self.dtr == 0


def _clamp(v: int, hi: int) -> int:
    return 0 if v < 0 else (hi if v > hi else v)


def apply_delta(s: UserState, d: StateDelta) -> UserState:
    """Add a delta to a state, clamping each dimension into its range."""
    return UserState(
        _clamp(s.c + d.dc, C_LEVELS - 1),
        _clamp(s.e + d.de, E_LEVELS - 1),
        _clamp(s.tr + d.dtr, TR_LEVELS - 1),
    )


def enumerate_states() -> list[UserState]:
    """All 120 states in lexicographic (c, e, tr) order, trust varying fastest."""
    return [
        UserState(c, e, tr)
        for c in range(C_LEVELS)
        for e in range(E_LEVELS)
        for tr in range(TR_LEVELS)
    ]


def state_index(s: UserState) -> int:
    """Bijective index 0..119 matching enumerate_states order."""
    return (s.c * E_LEVELS + s.e) * TR_LEVELS + s.tr


def index_state(i: int) -> UserState:
    if not (0 <= i < N_STATES):
        raise ValueError(f"state index {i} out of range 0..{N_STATES - 1}")
    c, rem = divmod(i, E_LEVELS * TR_LEVELS)
    e, tr = divmod(rem, TR_LEVELS)
    return UserState(c, e, tr)
