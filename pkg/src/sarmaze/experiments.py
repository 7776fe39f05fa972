"""Batch runs: seeded sweeps, aggregation and CSV output.

Every run is fully determined by a seed hashed from its plan coordinates, so
any single row can be re-run on its own and the output does not depend on
how many workers executed the plan.
"""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

from .maze import MAZE_CLASSES, Maze, MazeClass, derive_seed, generate_with_complexity
from .relay import DEFAULT_TRANGE, RelayError, WallMode, stop_and_extend
from .swarm import PolicyKind, SwarmConfig, run_search

NOT_FOUND = "target not found"


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentPlan:
    maze_classes: tuple[MazeClass, ...]
    layouts_per_class: int = 10
    repetitions: int = 50
    group_sizes: tuple[int, ...] = (100, 200, 300, 400, 500, 600)
    policies: tuple[PolicyKind, ...] = (PolicyKind.IAA,)
    wall_modes: tuple[WallMode, ...] = ()
    trange: float = DEFAULT_TRANGE
    base_seed: int = 0
    swarm: SwarmConfig = field(default_factory=SwarmConfig)
    name: str = "plan"

    def __post_init__(self) -> None:
        set_ = object.__setattr__
        set_(self, "maze_classes", tuple(self.maze_classes))
        set_(self, "group_sizes", tuple(int(g) for g in self.group_sizes))
        set_(self, "policies", tuple(PolicyKind(p) for p in self.policies))
        set_(self, "wall_modes", tuple(WallMode(m) for m in self.wall_modes))
        for label, items in (("maze_classes", self.maze_classes), ("group_sizes", self.group_sizes),
                             ("policies", self.policies)):
            if not items:
                raise PlanError(f"{label} must not be empty")
        if self.layouts_per_class < 1 or self.repetitions < 1:
            raise PlanError("layouts_per_class and repetitions must be at least 1")
        if min(self.group_sizes) < 1:
            raise PlanError("group sizes must be at least 1")
        if not self.trange > 0:
            raise PlanError("trange must be positive")
        if len({c.name for c in self.maze_classes}) != len(self.maze_classes):
            raise PlanError("maze class names must be unique")

    def size(self) -> int:
        return (len(self.maze_classes) * self.layouts_per_class * len(self.policies)
                * len(self.group_sizes) * self.repetitions * max(1, len(self.wall_modes)))

    def layout_seed(self, cls: MazeClass, layout: int) -> int:
        return derive_seed("layout", self.base_seed, cls.name, layout)

    def run_seed(self, cls: MazeClass, layout: int, policy: PolicyKind, group: int, rep: int) -> int:
        # the wall mode is left out so every mode continues the same Phase I run
        return derive_seed("run", self.base_seed, cls.name, layout, policy.value, group, rep)


@dataclass
class RunRecord:
    maze_class: str
    layout: int
    policy: str
    group_size: int
    repetition: int
    wall_mode: str
    seed: int
    found: bool
    iterations: int
    total_steps: int
    total_energy: float
    coverage: float
    hops: int | None = None
    total_cost_m: float | None = None
    protocol_iterations: int | None = None
    path: str = ""
    failure: str = ""
    duration_s: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.failure


COORDINATES = ("maze_class", "layout", "policy", "group_size", "repetition", "wall_mode")
METRICS = ("iterations", "total_steps", "total_energy", "coverage",
           "hops", "total_cost_m", "protocol_iterations")
# wall-clock duration stays in memory only so repeated runs write identical bytes
RECORD_COLUMNS = tuple(f.name for f in fields(RunRecord) if f.name != "duration_s")


@dataclass(frozen=True)
class _Task:
    maze: Maze
    cls_name: str
    layout: int
    policy: PolicyKind
    group: int
    rep: int
    seed: int
    wall_modes: tuple[WallMode, ...]
    trange: float
    swarm: SwarmConfig


def _execute(task: _Task) -> list[RunRecord]:
    config = task.swarm.with_(policy=task.policy, group_size=task.group)
    coords = dict(maze_class=task.cls_name, layout=task.layout, policy=task.policy.value,
                  group_size=task.group, repetition=task.rep, seed=task.seed)
    out = []
    for mode in task.wall_modes or (None,):
        start = time.perf_counter()
        try:
            search = run_search(task.maze, config, task.seed)
        except Exception as exc:  # noqa: BLE001 - a broken run becomes a failed row
            out.append(RunRecord(**coords, wall_mode=mode.value if mode else "", found=False,
                                 iterations=0, total_steps=0, total_energy=0.0, coverage=0.0,
                                 failure=f"{type(exc).__name__}: {exc}"))
            continue
        rec = RunRecord(
            **coords,
            wall_mode=mode.value if mode else "",
            found=search.found,
            iterations=search.iterations,
            total_steps=search.total_steps,
            total_energy=search.total_energy,
            coverage=search.coverage,
            failure="" if search.found else NOT_FOUND,
        )
        if mode is not None and search.found:
            try:
                relay = stop_and_extend(search, task.maze, task.trange, mode,
                                        config.propagation)
            except RelayError as exc:
                rec.failure = f"relay: {exc}"
                rec.protocol_iterations = exc.iterations
            else:
                rec.hops = relay.hops
                rec.total_cost_m = relay.total_cost
                rec.protocol_iterations = relay.protocol_iterations
                rec.path = relay.path_text()
        rec.duration_s = time.perf_counter() - start
        out.append(rec)
    return out


def _tasks(plan: ExperimentPlan) -> list[_Task]:
    tasks = []
    for cls in plan.maze_classes:
        for layout in range(plan.layouts_per_class):
            maze = generate_with_complexity(cls, plan.layout_seed(cls, layout))
            for policy in plan.policies:
                for group in plan.group_sizes:
                    for rep in range(plan.repetitions):
                        seed = plan.run_seed(cls, layout, policy, group, rep)
                        tasks.append(_Task(maze, cls.name, layout, policy, group, rep, seed,
                                           plan.wall_modes, plan.trange, plan.swarm))
    return tasks


def run_plan(plan: ExperimentPlan, workers: int = 1) -> list[RunRecord]:
    """Execute every plan coordinate; rows come back in coordinate order."""
    tasks = _tasks(plan)
    if workers <= 1:
        batches = map(_execute, tasks)
        return [r for batch in batches for r in batch]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        chunk = max(1, len(tasks) // (4 * workers))
        return [r for batch in pool.map(_execute, tasks, chunksize=chunk) for r in batch]


@dataclass
class AggregateStats:
    key: dict[str, object]
    count: int
    failures: int
    mean: dict[str, float]
    std: dict[str, float]
    min: dict[str, float]
    max: dict[str, float]


def aggregate(
    records: Iterable[RunRecord],
    group_by: Sequence[str] = ("maze_class", "policy", "group_size"),
    metrics: Sequence[str] = METRICS,
) -> list[AggregateStats]:
    """Per-group statistics over successful rows, with population std.

    ``count`` is the number of successful rows; failed rows only add to
    ``failures``. Metrics with no values in a group are NaN.
    """
    groups: dict[tuple, list[RunRecord]] = {}
    for rec in records:
        groups.setdefault(tuple(getattr(rec, k) for k in group_by), []).append(rec)
    out = []
    for key, rows in groups.items():
        good = [r for r in rows if r.ok]
        stats: dict[str, dict[str, float]] = {"mean": {}, "std": {}, "min": {}, "max": {}}
        for m in metrics:
            values = [float(getattr(r, m)) for r in good if getattr(r, m) is not None]
            if values:
                mu = math.fsum(values) / len(values)
                var = math.fsum((v - mu) ** 2 for v in values) / len(values)
                row = {"mean": mu, "std": math.sqrt(var), "min": min(values), "max": max(values)}
            else:
                row = dict.fromkeys(stats, math.nan)
            for s in stats:
                stats[s][m] = row[s]
        out.append(AggregateStats(dict(zip(group_by, key)), len(good), len(rows) - len(good),
                                  **stats))
    return out


def _fmt(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return "nan" if math.isnan(value) else f"{value:.6g}"
    return str(value)


def _write(rows: Iterable[Sequence[object]], header: Sequence[str], destination) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    text = buf.getvalue()
    if hasattr(destination, "write"):
        destination.write(text)
        return
    path = Path(destination)
    try:
        path.write_text(text, encoding="utf-8", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def stats_columns(stats: Sequence[AggregateStats]) -> list[str]:
    if not stats:
        return ["count", "failures"]
    metrics = list(stats[0].mean)
    return [*stats[0].key, "count", "failures",
            *(f"{m}_{s}" for m in metrics for s in ("mean", "std", "min", "max"))]


def write_csv(items: Sequence[RunRecord] | Sequence[AggregateStats], destination) -> None:
    """Write records or aggregates as CSV to a path or text stream.

    Records use the column order of ``RECORD_COLUMNS``. Aggregates list the
    group keys, then ``count`` and ``failures``, then ``<metric>_mean``,
    ``_std``, ``_min`` and ``_max`` for each metric. Floats carry six
    significant digits.
    """
    items = list(items)
    if items and isinstance(items[0], AggregateStats):
        header = stats_columns(items)
        rows = ([*s.key.values(), s.count, s.failures,
                 *(getattr(s, k)[m] for m in s.mean for k in ("mean", "std", "min", "max"))]
                for s in items)
    else:
        header = list(RECORD_COLUMNS)
        rows = ([getattr(r, c) for c in RECORD_COLUMNS] for r in items)
    _write(rows, header, destination)


def write_long_csv(records: Sequence[RunRecord], destination) -> None:
    """One metric value per row, for plotting tools that expect long format."""
    rows = ([*(getattr(r, c) for c in COORDINATES), r.seed, m, getattr(r, m)]
            for r in records if r.ok for m in METRICS if getattr(r, m) is not None)
    _write(rows, [*COORDINATES, "seed", "metric", "value"], destination)


def read_records(source) -> list[RunRecord]:
    """Parse a record CSV written by ``write_csv``."""
    text = source.read() if hasattr(source, "read") else Path(source).read_text(encoding="utf-8")
    types = {f.name: f.type for f in fields(RunRecord)}
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        values: dict[str, object] = {}
        for name, raw in row.items():
            kind = types[name]
            if raw == "" and "None" in kind:
                values[name] = None
            elif kind == "bool":
                values[name] = raw == "true"
            elif kind.startswith("int"):
                values[name] = int(raw)
            elif kind.startswith("float"):
                values[name] = float(raw)
            else:
                values[name] = raw
        out.append(RunRecord(**values))
    return out


# plan files

def _parse_class(token: str) -> MazeClass:
    if token in MAZE_CLASSES:
        return MAZE_CLASSES[token]
    w, sep, h = token.lower().partition("x")
    if sep and w.isdigit() and h.isdigit():
        return MazeClass(token, int(w), int(h))
    raise PlanError(f"unknown maze class {token!r} (use M1..M5 or WIDTHxHEIGHT)")


def _ints(text: str) -> tuple[int, ...]:
    out = []
    for part in text.split(","):
        lo, sep, hi = part.strip().partition("..")
        if sep:
            step = 1
            if ":" in hi:
                hi, step_text = hi.split(":")
                step = int(step_text)
            out.extend(range(int(lo), int(hi) + 1, step))
        else:
            out.append(int(lo))
    return tuple(out)


def _list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


_PLAN_KEYS = {
    "name": lambda v: ("name", v.strip()),
    "classes": lambda v: ("maze_classes", tuple(_parse_class(t) for t in _list(v))),
    "layouts": lambda v: ("layouts_per_class", int(v)),
    "repetitions": lambda v: ("repetitions", int(v)),
    "groups": lambda v: ("group_sizes", _ints(v)),
    "policies": lambda v: ("policies", tuple(PolicyKind(t) for t in _list(v))),
    "wall_modes": lambda v: ("wall_modes", tuple(WallMode(t) for t in _list(v))),
    "trange": lambda v: ("trange", float(v)),
    "seed": lambda v: ("base_seed", int(v)),
}
_SWARM_KEYS = {
    "max_iterations": int, "c": float, "alpha": float, "comm_range": int,
    "region_radius": int, "deposit": float, "beacon_scale": float,
}


def parse_plan(text: str) -> ExperimentPlan:
    """Read a plan from ``key = value`` lines.

    Blank lines and ``#`` comments are ignored. List values are comma
    separated; integer lists also accept ``lo..hi`` and ``lo..hi:step``.
    Keys: name, classes, layouts, repetitions, groups, policies, wall_modes,
    trange, seed, and the swarm settings max_iterations, c, alpha,
    comm_range, region_radius, deposit, beacon_scale.
    """
    plan_args: dict[str, object] = {}
    swarm_args: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise PlanError(f"line {lineno}: expected 'key = value'")
        try:
            if key in _PLAN_KEYS:
                name, parsed = _PLAN_KEYS[key](value)
                plan_args[name] = parsed
            elif key in _SWARM_KEYS:
                swarm_args[key] = _SWARM_KEYS[key](value.strip())
            else:
                raise PlanError(f"unknown key {key!r}")
        except (ValueError, KeyError) as exc:
            raise PlanError(f"line {lineno}: {exc}") from exc
    if "maze_classes" not in plan_args:
        raise PlanError("plan needs a 'classes' line")
    try:
        return ExperimentPlan(swarm=SwarmConfig(**swarm_args), **plan_args)
    except ValueError as exc:
        raise PlanError(str(exc)) from exc


def load_plan(path: str | Path) -> ExperimentPlan:
    return parse_plan(Path(path).read_text(encoding="utf-8"))


# presets

def benchmark_plan(repetitions: int = 50, base_seed: int = 0) -> ExperimentPlan:
    """Small-group runs on the two benchmark maze sizes, any complexity."""
    return ExperimentPlan(
        maze_classes=(MazeClass("8x8", 8, 8), MazeClass("15x15", 15, 15)),
        layouts_per_class=1,
        repetitions=repetitions,
        group_sizes=(2, 5, 10),
        policies=(PolicyKind.IAA, PolicyKind.IAA_B),
        base_seed=base_seed,
        name="benchmark",
    )


def policies_plan(base_seed: int = 0) -> ExperimentPlan:
    """All five policies on one M1 layout, 100 agents, 30 repetitions."""
    return ExperimentPlan(
        maze_classes=(MAZE_CLASSES["M1"],),
        layouts_per_class=1,
        repetitions=30,
        group_sizes=(100,),
        policies=tuple(PolicyKind),
        base_seed=base_seed,
        name="policies",
    )


def group_sizes_plan(base_seed: int = 0) -> ExperimentPlan:
    """iAA on every class with 100 to 600 agents (the full sweep)."""
    return ExperimentPlan(maze_classes=tuple(MAZE_CLASSES.values()), base_seed=base_seed,
                          name="group-sizes")


def relay_plan(base_seed: int = 0) -> ExperimentPlan:
    """Phase I plus both relay modes on M1 with sparse groups."""
    return ExperimentPlan(
        maze_classes=(MAZE_CLASSES["M1"],),
        layouts_per_class=5,
        repetitions=10,
        group_sizes=(40, 60, 100),
        wall_modes=tuple(WallMode),
        base_seed=base_seed,
        name="relay",
    )


PRESETS = {
    "benchmark": benchmark_plan,
    "policies": policies_plan,
    "group-sizes": group_sizes_plan,
    "relay": relay_plan,
}


def records_as_dicts(records: Iterable[RunRecord]) -> list[dict]:
    return [asdict(r) for r in records]


def with_repetitions(plan: ExperimentPlan, repetitions: int) -> ExperimentPlan:
    return replace(plan, repetitions=repetitions)
