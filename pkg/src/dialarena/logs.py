"""Run persistence: trajectory logs, stat/metric tables, checkpoints, replay.

Trajectories go to a line-delimited log (one JSON record per dialogue,
preceded by a schema header line); iteration metrics and the per-state stats
table are comma-separated. Together with the per-iteration checkpoints and
the manifest these fully determine a re-run, which `verify_log` exploits by
re-simulating every logged dialogue and comparing records.
"""

from __future__ import annotations

import csv
import json
import time
from pathlib import Path

import numpy as np

from . import __version__
from .agent import PolicyParams
from .arena import Arena, Trajectory, TurnRecord
from .behaviors import BehaviorTrait, build_profile
from .config import ArenaConfig
from .controller import CompletionStats, stats_table
from .states import UserState
from .user_model import AgentAction, DialogueOutcome, UserToken

SCHEMA_VERSION = 1

METRIC_COLUMNS = (
    "iteration", "mean_reward", "mean_abs_advantage", "grad_norm",
    "too_easy", "ideal", "too_difficult",
)
STATS_COLUMNS = ("index", "state", "attempts", "successes", "cr", "class", "weight")


def trajectory_to_dict(traj: Trajectory, iteration: int, rollout: int) -> dict:
    d = {
        "iteration": iteration,
        "rollout": rollout,
        "profile": {
            "state": traj.profile.initial.serialize(),
            "traits": traj.profile.serialize_traits(),
        },
        "turns": [
            [
                s.token.value, list(s.obs), s.action.value, s.log_prob,
                s.hidden.serialize(), list(s.estimate), s.bucket, s.flags,
            ]
            for s in traj.steps
        ],
        "outcome": traj.outcome.value,
        "reward": traj.reward,
    }
    if traj.override is not None:
        d["override"] = traj.override
        d["override_log_prob"] = traj.override_log_prob
    return d


def dict_to_trajectory(d: dict) -> Trajectory:
    profile = build_profile(
        UserState.parse(d["profile"]["state"]),
        [BehaviorTrait(t) for t in d["profile"]["traits"]],
    )
    steps = [
        TurnRecord(
            token=UserToken(t[0]), obs=tuple(t[1]), action=AgentAction(t[2]),
            log_prob=t[3], hidden=UserState.parse(t[4]), estimate=tuple(t[5]),
            bucket=t[6], flags=t[7],
        )
        for t in d["turns"]
    ]
    return Trajectory(
        profile=profile, steps=steps, outcome=DialogueOutcome(d["outcome"]),
        reward=d["reward"], override=d.get("override"),
        override_log_prob=d.get("override_log_prob"),
    )


class TrajectoryWriter:
    """Single-writer append-only JSONL log with a schema header line."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = self.path.open("w")
        self._fh.write(json.dumps({"schema": SCHEMA_VERSION, "kind": "trajectories"}) + "\n")

    def write(self, traj: Trajectory, iteration: int, rollout: int) -> None:
        self._fh.write(json.dumps(trajectory_to_dict(traj, iteration, rollout)) + "\n")

    def flush(self) -> None:
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def read_trajectory_log(path) -> list[dict]:
    with Path(path).open() as fh:
        header = json.loads(fh.readline())
        if header.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"unsupported log schema {header.get('schema')}")
        return [json.loads(line) for line in fh if line.strip()]


def write_csv(path, columns, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k) for k in columns})


def read_stats_csv(path, window: int = 200) -> CompletionStats:
    """Rebuild sampling-ready stats from an exported per-state table."""
    stats = CompletionStats(window=window)
    with Path(path).open() as fh:
        for row in csv.DictReader(fh):
            idx = int(row["index"])
            stats.seed_window(idx, int(row["attempts"]), int(row["successes"]))
    return stats


class TrainingRun:
    """Drives Arena over N iterations and persists everything reproducibly."""

    def __init__(self, cfg: ArenaConfig, out_dir):
        self.cfg = cfg
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "checkpoints").mkdir(exist_ok=True)
        self.arena = Arena(cfg)

    def checkpoint_path(self, iteration: int) -> Path:
        return self.out / "checkpoints" / f"iter_{iteration:04d}.npz"

    def _save_checkpoint(self, iteration: int) -> None:
        arrays = {"version": np.int64(1), "logits": self.arena.params.logits}
        if self.arena.urm is not None:
            arrays["urm_state_logits"] = self.arena.urm.state_logits
            arrays["urm_accept_logits"] = self.arena.urm.accept_logits
        np.savez(self.checkpoint_path(iteration), **arrays)

    def run(self) -> list[dict]:
        start = time.time()
        writer = TrajectoryWriter(self.out / "trajectories.jsonl")
        metric_rows = []
        try:
            for i in range(self.cfg.iterations):
                self._save_checkpoint(i)  # params used by this iteration's rollouts
                report = self.arena.train_iteration(i)
                for k, traj in enumerate(report.trajectories):
                    writer.write(traj, i, k)
                writer.flush()
                metric_rows.append({
                    "iteration": i,
                    "mean_reward": report.mean_reward,
                    "mean_abs_advantage": report.mean_abs_advantage,
                    "grad_norm": report.grad_norm,
                    "too_easy": report.class_counts["too_easy"],
                    "ideal": report.class_counts["ideal"],
                    "too_difficult": report.class_counts["too_difficult"],
                })
        finally:
            writer.close()
        self._save_checkpoint(self.cfg.iterations)  # final params
        write_csv(self.out / "metrics.csv", METRIC_COLUMNS, metric_rows)
        write_csv(self.out / "stats.csv", STATS_COLUMNS, stats_table(self.arena.stats))
        manifest = {
            "package_version": __version__,
            "schema": SCHEMA_VERSION,
            "config": self.cfg.to_dict(),
            "paths": {
                "trajectories": "trajectories.jsonl",
                "metrics": "metrics.csv",
                "stats": "stats.csv",
                "checkpoints": "checkpoints",
            },
            "wall_clock_s": time.time() - start,
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        return metric_rows


def load_run_arena(run_dir, iteration: int) -> Arena:
    """Arena with the exact params in force at the start of `iteration`."""
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text())
    cfg = ArenaConfig(**manifest["config"])
    arena = Arena(cfg)
    path = run_dir / "checkpoints" / f"iter_{iteration:04d}.npz"
    with np.load(path) as data:
        arena.params = PolicyParams(np.array(data["logits"]))
        if arena.urm is not None:
            arena.urm.state_logits = np.array(data["urm_state_logits"])
            arena.urm.accept_logits = np.array(data["urm_accept_logits"])
    return arena


def replay_record(run_dir, record: dict) -> tuple[bool, str]:
    """Re-simulate one logged dialogue; returns (match, detail)."""
    arena = load_run_arena(run_dir, record["iteration"])
    logged = dict_to_trajectory(record)
    traj = arena._rollout(record["iteration"], record["rollout"], logged.profile)
    fresh = trajectory_to_dict(traj, record["iteration"], record["rollout"])
    if fresh == record:
        return True, "ok"
    return False, f"mismatch: logged {json.dumps(record)} vs replayed {json.dumps(fresh)}"


def verify_log(run_dir) -> tuple[int, int]:
    """Replay every record in a run's trajectory log; returns (checked, failed)."""
    run_dir = Path(run_dir)
    records = read_trajectory_log(run_dir / "trajectories.jsonl")
    arenas: dict[int, Arena] = {}
    failed = 0
    for record in records:
        it = record["iteration"]
        arena = arenas.get(it)
        if arena is None:
            arena = arenas[it] = load_run_arena(run_dir, it)
        traj = arena._rollout(it, record["rollout"], dict_to_trajectory(record).profile)
        if trajectory_to_dict(traj, it, record["rollout"]) != record:
            failed += 1
    return len(records), failed
