"""Run configuration: dataclass defaults and strict JSON loading."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path


@dataclass
class ArenaConfig:
    batch_size: int = 60
    group_size: int = 8
    iterations: int = 50
    seed: int = 0
    t_max: int = 15
    obs_epsilon: float = 0.2
    lr: float = 0.3
    lam: float = 0.0          # shaped-reward weight on final-initial state change
    n_max: int = 200          # per-state cap on distinct trait combinations
    stats_window: int = 200
    workers: int = 1
    eval_reps: int = 3
    deterministic_user: bool = False
    train_urm: bool = False
    disable_mistake_analysis: bool = False
    disable_profile_sampling: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.group_size < 1:
            raise ValueError("group_size must be >= 1")
        if not (0.0 <= self.obs_epsilon <= 1.0):
            raise ValueError("obs_epsilon must be in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path) -> ArenaConfig:
    """Load an ArenaConfig from a JSON file.

    An empty file yields all defaults; missing keys take their defaults;
    unknown keys are an error so typos cannot silently revert to defaults.
    """
    text = Path(path).read_text()
    if not text.strip():
        data = {}
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as err:
            raise ValueError(
                f"{path}: parse error at line {err.lineno}, column {err.colno}: {err.msg}"
            ) from err
    if not isinstance(data, dict):
        raise ValueError(f"{path}: top-level value must be an object")
    known = {f.name for f in fields(ArenaConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"{path}: unknown config keys: {', '.join(unknown)}")
    return ArenaConfig(**data)
