"""Command-line entry point: teach, repeat, experiment, dump-table, scenario."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .descriptor import load_memory, read_observations_csv, save_memory, write_observations_csv
from .harness import (
    Configs,
    ExperimentConfig,
    TaughtTrajectory,
    repeat,
    results_to_csv,
    run_experiment,
    summarize,
    teach,
)
from .relocalization import MemoryIndex, write_table_csv
from .simulator import RobotState, load_world


def _floats(text: str, n: int, what: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"{what} must be {n} comma-separated numbers") from None
    if len(vals) != n:
        raise argparse.ArgumentTypeError(f"{what} must be {n} comma-separated numbers")
    return vals


def _pose(text: str) -> RobotState:
    return RobotState(*_floats(text, 3, "pose"))


def _point(text: str) -> tuple[float, float]:
    return _floats(text, 2, "point")


def _configs(path) -> Configs:
    return Configs.load(path) if path else Configs()


def cmd_teach(args) -> int:
    world = load_world(args.world)
    traj = TaughtTrajectory.from_csv(args.trajectory)
    mem = teach(world, traj, _configs(args.config), seed=args.seed)
    save_memory(mem, args.out)
    print(f"{len(mem)} keyframes -> {args.out}")
    return 0


def cmd_repeat(args) -> int:
    world = load_world(args.world)
    mem = load_memory(args.memory)
    log = repeat(
        world, mem, args.start, _configs(args.config), seed=args.seed,
        goal=args.goal, timeout=args.timeout,
    )
    log.to_csv(args.log)
    if args.observations:
        write_observations_csv(log.observations, args.observations)
    msg = f"{log.outcome} after {log.elapsed_steps} steps"
    if args.goal is not None:
        msg += f", {log.final_distance:.3f} m from goal"
    print(msg)
    return 0


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    results = run_experiment(cfg)
    results_to_csv(results, args.out)
    s = summarize(results)
    print(
        f"completed {s['completed']}/{s['trials']} "
        f"(rate {s['success_rate']:.2f}); final distance mean {s['distance_mean']:.3f} m, "
        f"max {s['distance_max']:.3f} m; steps median {s['steps_median']:.1f}, "
        f"mean {s['steps_mean']:.1f}"
    )
    return 0


def cmd_dump_table(args) -> int:
    mem = load_memory(args.memory)
    scenes = read_observations_csv(args.log)
    if args.window:
        scenes = scenes[-args.window:]
    if not scenes:
        print("observation log is empty", file=sys.stderr)
        return 1
    cfg = _configs(args.config)
    table = MemoryIndex(mem, cfg.match).table(scenes)
    write_table_csv(table, args.out)
    print(f"{table.shape[0]} x {table.shape[1]} table -> {args.out}")
    return 0


def cmd_scenario(args) -> int:
    from .scenarios import export_scenario

    for path in export_scenario(args.name, args.out_dir):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="semvtr", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("teach", help="record a reference memory along a trajectory")
    t.add_argument("--world", required=True)
    t.add_argument("--trajectory", required=True, help="CSV of x,y,yaw waypoints")
    t.add_argument("--out", required=True, help="memory file to write")
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--config", help="YAML overrides for match/reloc/control/camera/noise")
    t.set_defaults(func=cmd_teach)

    r = sub.add_parser("repeat", help="closed-loop repeat run from a start pose")
    r.add_argument("--world", required=True)
    r.add_argument("--memory", required=True)
    r.add_argument("--start", required=True, type=_pose, help='"x,y,yaw"')
    r.add_argument("--log", required=True, help="per-step CSV log to write")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--goal", type=_point, default=None, help='"x,y" for the distance metric')
    r.add_argument("--timeout", type=int, default=None, help="step budget")
    r.add_argument("--observations", help="also write the sensed detections as CSV")
    r.add_argument("--config")
    r.set_defaults(func=cmd_repeat)

    e = sub.add_parser("experiment", help="seeded batch of repeat trials")
    e.add_argument("--config", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_experiment)

    d = sub.add_parser("dump-table", help="similarity table of logged observations vs memory")
    d.add_argument("--memory", required=True)
    d.add_argument("--log", required=True, help="observation CSV written by repeat")
    d.add_argument("--out", required=True)
    d.add_argument("--window", type=int, default=None, help="keep only the last N frames")
    d.add_argument("--config")
    d.set_defaults(func=cmd_dump_table)

    s = sub.add_parser("scenario", help="write a built-in world, route and configs to a directory")
    s.add_argument("name")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_scenario)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
