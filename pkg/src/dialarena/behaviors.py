"""Behavior-trait catalog, user profiles, consistency rules, and dedup.

A profile is an initial hidden state plus a set of persona traits. Profiles
carry a stable content hash so batches can be deduplicated reproducibly
across platforms and runs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from itertools import combinations

from .states import UserState


class BehaviorTrait(enum.Enum):
    AI_SKEPTIC = "ai_skeptic"
    COST_CONCERN = "cost_concern"
    ATTENTION_LAPSE = "attention_lapse"
    IRRITABLE = "irritable"
    BUSY = "busy"


# Definition order is the canonical catalog order used for hashing.
TRAIT_CATALOG: tuple[BehaviorTrait, ...] = tuple(BehaviorTrait)


def _fnv1a_64(data: bytes) -> int:
    """FNV-1a 64-bit: stable, non-cryptographic, platform independent."""
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def _canonical_traits(traits) -> tuple[BehaviorTrait, ...]:
    order = {t: i for i, t in enumerate(TRAIT_CATALOG)}
    return tuple(sorted(set(traits), key=order.__getitem__))


@dataclass(frozen=True)
class UserProfile:
    initial: UserState
    traits: frozenset[BehaviorTrait]
    profile_id: int = field(compare=False)

    def serialize_traits(self) -> list[str]:
        return [t.value for t in _canonical_traits(self.traits)]


def build_profile(initial: UserState, traits=()) -> UserProfile:
    """Construct a profile with a canonical content-derived id."""
    canon = _canonical_traits(traits)
    key = initial.serialize() + "|" + ",".join(t.value for t in canon)
    return UserProfile(
        initial=initial,
        traits=frozenset(canon),
        profile_id=_fnv1a_64(key.encode("ascii")),
    )


# Consistency rule table: (trait, predicate on initial state, violation message).
# The rules exclude self-contradictory personas.
_CONSISTENCY_RULES = (
    (BehaviorTrait.AI_SKEPTIC, lambda s: s.tr == 5, "max-trust contradicts skepticism"),
    (BehaviorTrait.IRRITABLE, lambda s: s.e == 3, "max-emotion contradicts irritability"),
    (BehaviorTrait.BUSY, lambda s: s.c == 4, "max-cooperation contradicts busyness"),
)


def check_consistency(profile: UserProfile) -> list[str]:
    """Return violation messages from the fixed rule table; empty means ok."""
    return [
        message
        for trait, conflicts, message in _CONSISTENCY_RULES
        if trait in profile.traits and conflicts(profile.initial)
    ]


def is_consistent(profile: UserProfile) -> bool:
    return not check_consistency(profile)


def consistent_trait_subsets(initial: UserState) -> list[tuple[BehaviorTrait, ...]]:
    """All trait subsets (as canonical tuples) that are consistent with a state."""
    allowed = [
        t for t in TRAIT_CATALOG
        if not any(t is rt and conflicts(initial) for rt, conflicts, _ in _CONSISTENCY_RULES)
    ]
    subsets: list[tuple[BehaviorTrait, ...]] = []
    for k in range(len(allowed) + 1):
        subsets.extend(combinations(allowed, k))
    return subsets


def dedup(batch: list[UserProfile]) -> list[UserProfile]:
    """Drop repeated profile ids, keeping first-occurrence order."""
    seen: set[int] = set()
    out: list[UserProfile] = []
    for p in batch:
        if p.profile_id not in seen:
            seen.add(p.profile_id)
            out.append(p)
    return out
