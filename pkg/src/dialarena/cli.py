"""Command-line surface: train, evaluate, sample-profiles, replay, stats."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .agent import PolicyParams
from .arena import Arena, TabularPolicy
from .config import ArenaConfig, load_config
from .controller import CompletionStats, sample_batch, stats_table
from .logs import (
    STATS_COLUMNS,
    TrainingRun,
    dict_to_trajectory,
    read_stats_csv,
    read_trajectory_log,
    replay_record,
    verify_log,
)
from .states import state_index


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dialarena",
        description="Self-play training arena for multi-turn service dialogue agents.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run the co-evolutionary training loop")
    p.add_argument("--config", type=Path, help="JSON config file (defaults when omitted)")
    p.add_argument("--seed", type=int, help="root seed (overrides config)")
    p.add_argument("--iterations", type=int, help="iteration count (overrides config)")
    p.add_argument("--workers", type=int, help="rollout worker count (overrides config)")
    p.add_argument("--out", type=Path, default=Path("run"), help="output directory")

    p = sub.add_parser("evaluate", help="evaluate a checkpoint over the full state grid")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--reps", type=int, default=3, help="dialogues per initial state")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("sample-profiles", help="print a sampled profile batch")
    p.add_argument("--stats", type=Path, help="stats CSV from a prior run")
    p.add_argument("--n", type=int, default=10, help="batch size")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("replay", help="re-simulate and verify logged trajectories")
    p.add_argument("--log", type=Path, required=True, help="trajectories.jsonl of a run")
    p.add_argument("--index", type=int, help="record index; all records when omitted")

    p = sub.add_parser("stats", help="emit the per-state table from a trajectory log")
    p.add_argument("--log", type=Path, required=True)
    return parser


def _cmd_train(args) -> int:
    cfg = load_config(args.config) if args.config else ArenaConfig()
    overrides = {
        k: getattr(args, k)
        for k in ("seed", "iterations", "workers")
        if getattr(args, k) is not None
    }
    cfg = replace(cfg, **overrides)
    run = TrainingRun(cfg, args.out)
    rows = run.run()
    final = rows[-1] if rows else {}
    print(f"trained {cfg.iterations} iterations -> {args.out}")
    if final:
        print(f"final mean reward {final['mean_reward']:.4f}")
    return 0


def _cmd_evaluate(args) -> int:
    params = PolicyParams.load(args.checkpoint)
    arena = Arena(replace(ArenaConfig(), seed=args.seed))
    result, _ = arena.evaluate(TabularPolicy(params), args.reps)
    row = result.row()
    print(",".join(str(row[k]) for k in sorted(row)))
    for key in ("cr", "att", "upa", "ei", "ti", "ci"):
        print(f"{key}: {row[key]}  (std {row[key + '_std']})")
    return 0


def _cmd_sample_profiles(args) -> int:
    stats = read_stats_csv(args.stats) if args.stats else CompletionStats()
    rng = np.random.default_rng(args.seed)
    batch = sample_batch(stats, args.n, rng)
    for p in batch:
        traits = ",".join(p.serialize_traits()) or "-"
        print(f"{p.initial.serialize()}  traits={traits}  id={p.profile_id:016x}")
    return 0


def _cmd_replay(args) -> int:
    run_dir = args.log.parent
    if args.index is not None:
        records = read_trajectory_log(args.log)
        if not (0 <= args.index < len(records)):
            print(f"index {args.index} out of range (log has {len(records)} records)",
                  file=sys.stderr)
            return 1
        ok, detail = replay_record(run_dir, records[args.index])
        print(f"record {args.index}: {'verified' if ok else detail}")
        return 0 if ok else 1
    checked, failed = verify_log(run_dir)
    print(f"replayed {checked} records, {failed} mismatches")
    return 0 if failed == 0 else 1


def _cmd_stats(args) -> int:
    stats = CompletionStats()
    for record in read_trajectory_log(args.log):
        traj = dict_to_trajectory(record)
        stats.update(state_index(traj.profile.initial), traj.outcome)
    writer = csv.DictWriter(sys.stdout, fieldnames=STATS_COLUMNS)
    writer.writeheader()
    for row in stats_table(stats):
        writer.writerow(row)
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "sample-profiles": _cmd_sample_profiles,
    "replay": _cmd_replay,
    "stats": _cmd_stats,
}


def cli(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("DIALARENA_LOG", "WARNING"))
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return int(err.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli())
