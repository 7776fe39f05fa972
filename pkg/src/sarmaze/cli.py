"""Command-line interface: ``sarmaze <command> [options]``.

Exit status is 0 on success, 1 when the simulation itself fails (target not
found, no relay) and 2 for bad arguments or unreadable input.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import sys
from pathlib import Path
from typing import Callable, Sequence, TextIO

from . import experiments
from .maze import MAZE_CLASSES, Cell, MazeError, complexity, generate_maze, load_maze, save_maze
from .maze import generate_with_complexity, GenerationError
from .relay import DEFAULT_TRANGE, RelayError, WallMode, stop_and_extend
from .signal import PropagationParams, beacon_field
from .swarm import PolicyKind, SearchResult, SwarmConfig, run_search

OK, FAILED, USAGE = 0, 1, 2

SEARCH_COLUMNS = ("found", "iterations", "total_steps", "total_energy", "coverage", "finder")
RELAY_COLUMNS = ("mode", "trange", "hops", "total_cost_m", "protocol_iterations", "path")


class UsageError(Exception):
    pass


def _ranged(kind: Callable[[str], float], low: float, inclusive: bool = True):
    def parse(text: str):
        try:
            value = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid {kind.__name__} value: {text!r}") from None
        if value < low or (not inclusive and value == low):
            bound = ">=" if inclusive else ">"
            raise argparse.ArgumentTypeError(f"must be {bound} {low}, got {text}")
        return value

    parse.__name__ = kind.__name__
    return parse


positive_int = _ranged(int, 1)
count = _ranged(int, 0)
positive_float = _ranged(float, 0.0, inclusive=False)
nonneg_float = _ranged(float, 0.0)


def _cell(text: str) -> Cell:
    try:
        x, y = (int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected X,Y but got {text!r}") from None
    return Cell(x, y)


def _subparser(sub, name: str, help_text: str) -> argparse.ArgumentParser:
    return sub.add_parser(name, help=help_text, description=help_text,
                          formatter_class=argparse.ArgumentDefaultsHelpFormatter)


def _swarm_options(p: argparse.ArgumentParser, maze_required: bool = True) -> None:
    d = SwarmConfig()
    p.add_argument("--maze", required=maze_required, help="maze file")
    p.add_argument("--policy", choices=[k.value for k in PolicyKind], default=d.policy.value,
                   help="movement policy")
    p.add_argument("--agents", type=positive_int, default=d.group_size, help="group size")
    p.add_argument("--c", type=positive_float, default=d.c, help="pheromone offset c")
    p.add_argument("--alpha", type=positive_float, default=d.alpha, help="pheromone exponent")
    p.add_argument("--region-radius", type=positive_int, default=d.region_radius,
                   help="iaa-r region radius in cells")
    p.add_argument("--comm-range", type=count, default=d.comm_range,
                   help="map sharing range in cells (Chebyshev)")
    p.add_argument("--max-iter", type=count, default=d.max_iterations,
                   help="Phase I tick budget")
    p.add_argument("--seed", type=count, default=0, help="random seed")
    p.add_argument("--trace", help="write a per-tick agent trace CSV here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sarmaze",
        description="Two-phase swarm search and relay simulation in grid mazes.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = _subparser(sub, "generate", "generate a maze")
    p.add_argument("--width", type=_ranged(int, 4), default=15, help="maze width in cells")
    p.add_argument("--height", type=_ranged(int, 4), default=15, help="maze height in cells")
    p.add_argument("--class", dest="maze_class", choices=sorted(MAZE_CLASSES),
                   help="draw from a complexity class, ignoring width and height")
    p.add_argument("--seed", type=count, default=0, help="random seed")
    p.add_argument("--out", help="output file (stdout when omitted)")

    p = _subparser(sub, "complexity", "print the turn count of a maze")
    p.add_argument("--maze", required=True, help="maze file")

    p = _subparser(sub, "field", "export the beacon path-loss field as CSV")
    p.add_argument("--maze", required=True, help="maze file")
    where = p.add_mutually_exclusive_group(required=True)
    where.add_argument("--beacon-at-target", action="store_true",
                       help="put the beacon on the maze target")
    where.add_argument("--beacon", type=_cell, help="beacon cell as X,Y")
    p.add_argument("--frequency", type=positive_float, default=2400.0, help="MHz")
    p.add_argument("--wall-db", type=nonneg_float, default=4.4349,
                   help="attenuation per wall in dB")
    p.add_argument("--out", help="output CSV (stdout when omitted)")

    p = _subparser(sub, "search", "run Phase I only")
    _swarm_options(p)
    p.add_argument("--csv", help="write the result row here (stdout when omitted)")
    p.add_argument("--phase1-json", help="also save the run description for rescue")

    p = _subparser(sub, "rescue", "run Phase I then build a relay")
    _swarm_options(p, maze_required=False)
    p.add_argument("--mode", choices=[m.value for m in WallMode],
                   default=WallMode.IMPENETRABLE.value, help="wall mode for links")
    p.add_argument("--trange", type=positive_float, default=DEFAULT_TRANGE,
                   help="transmission range in meters")
    p.add_argument("--budget", type=count,
                   help="protocol tick budget (ten times the Phase I budget if unset)")
    p.add_argument("--phase1-json",
                   help="replay a Phase I run saved by the search command")
    p.add_argument("--csv", help="write the relay row here (stdout when omitted)")

    p = _subparser(sub, "experiment", "run an experiment plan")
    which = p.add_mutually_exclusive_group(required=True)
    which.add_argument("--plan", help="plan file of 'key = value' lines")
    which.add_argument("--preset", choices=sorted(experiments.PRESETS), help="built-in plan")
    p.add_argument("--repetitions", type=positive_int, help="override the plan's repetitions")
    p.add_argument("--workers", type=positive_int, default=1, help="worker processes")
    p.add_argument("--csv", help="per-run records (stdout when omitted)")
    p.add_argument("--stats", help="aggregate statistics CSV")
    p.add_argument("--group-by", default="maze_class,policy,group_size,wall_mode",
                   help="comma-separated columns to aggregate over")
    p.add_argument("--long", help="long-format CSV, one metric per row")
    return parser


def _load_maze(path: str):
    try:
        return load_maze(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except MazeError as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _emit(text: str, path: str | None, stdout: TextIO) -> None:
    if path is None:
        stdout.write(text)
        return
    try:
        Path(path).write_text(text, encoding="utf-8", newline="")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _table(columns: Sequence[str], row: dict) -> str:
    out = [",".join(columns)]
    cells = []
    for c in columns:
        v = row[c]
        if v is None:
            cells.append("")
        elif isinstance(v, bool):
            cells.append(str(v).lower())
        elif isinstance(v, float):
            cells.append(f"{v:.6g}")
        else:
            cells.append(str(v))
    out.append(",".join(cells))
    return "\n".join(out) + "\n"


def _config(args) -> SwarmConfig:
    return SwarmConfig(policy=args.policy, group_size=args.agents, c=args.c, alpha=args.alpha,
                       region_radius=args.region_radius, comm_range=args.comm_range,
                       max_iterations=args.max_iter)


def _search(maze, config: SwarmConfig, seed: int, trace_path: str | None) -> SearchResult:
    if trace_path is None:
        return run_search(maze, config, seed)
    try:
        handle = open(trace_path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise UsageError(f"cannot write {trace_path}: {exc.strerror or exc}") from exc
    with handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["tick", "agent", "x", "y", "move", "energy"])

        def trace(tick, agent, x, y, move, energy):
            writer.writerow([tick, agent, x, y, move, f"{energy:.6g}"])

        return run_search(maze, config, seed, trace=trace)


def _search_row(res: SearchResult) -> dict:
    return {c: getattr(res, c) for c in SEARCH_COLUMNS}


def _phase1_record(args, maze, config: SwarmConfig, res: SearchResult) -> dict:
    return {
        "maze": save_maze(maze),
        "seed": args.seed,
        "config": {"policy": config.policy.value, "group_size": config.group_size,
                   "c": config.c, "alpha": config.alpha, "region_radius": config.region_radius,
                   "comm_range": config.comm_range, "max_iterations": config.max_iterations},
        "result": _search_row(res),
    }


def cmd_generate(args, out: TextIO, err: TextIO) -> int:
    if args.maze_class:
        maze = generate_with_complexity(MAZE_CLASSES[args.maze_class], args.seed)
    else:
        maze = generate_maze(args.width, args.height, args.seed)
    _emit(save_maze(maze), args.out, out)
    return OK


def cmd_complexity(args, out: TextIO, err: TextIO) -> int:
    out.write(f"{complexity(_load_maze(args.maze))}\n")
    return OK


def cmd_field(args, out: TextIO, err: TextIO) -> int:
    maze = _load_maze(args.maze)
    beacon = maze.target if args.beacon_at_target else args.beacon
    if not maze.is_free(beacon):
        raise UsageError(f"beacon {tuple(beacon)} is not a free cell")
    params = PropagationParams(frequency_mhz=args.frequency, wall_attenuation_db=args.wall_db)
    _emit(beacon_field(maze, beacon, params).to_csv(), args.out, out)
    return OK


def cmd_search(args, out: TextIO, err: TextIO) -> int:
    maze = _load_maze(args.maze)
    config = _config(args)
    res = _search(maze, config, args.seed, args.trace)
    _emit(_table(SEARCH_COLUMNS, _search_row(res)), args.csv, out)
    if args.phase1_json:
        _emit(json.dumps(_phase1_record(args, maze, config, res), indent=2) + "\n",
              args.phase1_json, out)
    if not res.found:
        err.write(f"target not found within {config.max_iterations} ticks\n")
        return FAILED
    return OK


def _replay(path: str):
    try:
        record = json.loads(Path(path).read_text(encoding="utf-8"))
        maze = load_maze(record["maze"])
        config = SwarmConfig(**record["config"])
        seed = int(record["seed"])
        expected = record["result"]
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"{path}: not a Phase I record ({exc})") from exc
    return maze, config, seed, expected


def cmd_rescue(args, out: TextIO, err: TextIO) -> int:
    if args.phase1_json:
        maze, config, seed, expected = _replay(args.phase1_json)
        res = _search(maze, config, seed, args.trace)
        if _search_row(res) != expected:
            raise UsageError(f"{args.phase1_json}: replay does not reproduce the stored run")
    else:
        maze = _load_maze(args.maze)
        config = _config(args)
        res = _search(maze, config, args.seed, args.trace)
    if not res.found:
        err.write(f"target not found within {config.max_iterations} ticks\n")
        return FAILED
    try:
        relay = stop_and_extend(res, maze, args.trange, WallMode(args.mode),
                                config.propagation, budget=args.budget)
    except RelayError as exc:
        err.write(f"no relay: {exc} (stopped agents: {exc.stopped})\n")
        return FAILED
    _emit(_table(RELAY_COLUMNS, relay.to_row()), args.csv, out)
    return OK


def cmd_experiment(args, out: TextIO, err: TextIO) -> int:
    try:
        plan = experiments.load_plan(args.plan) if args.plan else experiments.PRESETS[args.preset]()
    except OSError as exc:
        raise UsageError(f"cannot read {args.plan}: {exc.strerror or exc}") from exc
    except experiments.PlanError as exc:
        raise UsageError(f"{args.plan}: {exc}") from exc
    if args.repetitions:
        plan = experiments.with_repetitions(plan, args.repetitions)
    group_by = [c.strip() for c in args.group_by.split(",") if c.strip()]
    unknown = set(group_by) - set(experiments.RECORD_COLUMNS)
    if unknown:
        raise UsageError(f"unknown --group-by columns: {', '.join(sorted(unknown))}")
    records = experiments.run_plan(plan, workers=args.workers)
    try:
        experiments.write_csv(records, args.csv if args.csv else out)
        if args.stats:
            experiments.write_csv(experiments.aggregate(records, group_by), args.stats)
        if args.long:
            experiments.write_long_csv(records, args.long)
    except OSError as exc:
        raise UsageError(str(exc)) from exc
    failed = sum(not r.ok for r in records)
    err.write(f"{len(records)} runs, {failed} failed\n")
    return OK


COMMANDS = {
    "generate": cmd_generate,
    "complexity": cmd_complexity,
    "field": cmd_field,
    "search": cmd_search,
    "rescue": cmd_rescue,
    "experiment": cmd_experiment,
}


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "rescue" and not (args.maze or args.phase1_json):
        parser.error("rescue needs --maze or --phase1-json")
    return args


def main(argv: Sequence[str] | None = None, stdout: TextIO | None = None,
         stderr: TextIO | None = None) -> int:
    out = stdout or sys.stdout
    err = stderr or sys.stderr
    try:
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
            args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args, out, err)
    except UsageError as exc:
        err.write(f"sarmaze {args.command}: {exc}\n")
        return USAGE
    except GenerationError as exc:
        err.write(f"sarmaze {args.command}: {exc}\n")
        return FAILED


if __name__ == "__main__":
    sys.exit(main())
