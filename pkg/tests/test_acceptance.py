"""Acceptance criteria 1-10, one test each.

Every test prints a single ``CRITERION n: PASS|FAIL`` line with the measured
numbers, then asserts. Tolerances and thresholds are the published ones.
"""

from __future__ import annotations

import io
import itertools
import math

import numpy as np
import pytest

from sarmaze.cli import main
from sarmaze.experiments import ExperimentPlan, aggregate, run_plan
from sarmaze.maze import MAZE_CLASSES, Cell, Maze, MazeClass, generate_with_complexity
from sarmaze.relay import (
    SOURCE,
    TARGET,
    NodeKind,
    RelayError,
    RelayGraph,
    RelayNode,
    WallMode,
    dijkstra,
    route,
    stop_and_extend,
)
from sarmaze.signal import effective_distance, euclid, path_loss, wall_count
from sarmaze.swarm import PolicyKind, SwarmConfig, aco_fork_probability, move_probabilities, run_search

SEEDS = range(30)
M1 = MAZE_CLASSES["M1"]
TRANGE = 6.0


@pytest.fixture
def verdict(capsys):
    def emit(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\nCRITERION {number}: {'PASS' if ok else 'FAIL'} | {detail}")
        assert ok, detail

    return emit


def mean_std(values) -> tuple[float, float]:
    a = np.asarray(values, dtype=float)
    return float(a.mean()), float(a.std())


def clearly_below(low: list[float], high: list[float]) -> bool:
    """Non-overlapping mean +/- std intervals, or a gap of at least 10% of the larger mean."""
    (ml, sl), (mh, sh) = mean_std(low), mean_std(high)
    return ml + sl < mh - sh or (mh - ml) >= 0.10 * mh


# 1 ---------------------------------------------------------------------------

def test_criterion_1_formula_exactness(verdict):
    values = [(path_loss(1, 0), 39.6042), (path_loss(10, 0), 67.6042), (path_loss(1, 1), 44.0391)]
    pl_err = max(abs(got - want) for got, want in values)
    d = np.random.default_rng(1).uniform(0.5, 100, 1000)
    rt_err = max(abs(effective_distance(path_loss(x, 0)) - x) for x in d)
    ok = pl_err <= 1e-4 and rt_err <= 1e-9
    verdict(1, ok, f"max |PL error| {pl_err:.2e} (tol 1e-4), max round-trip error {rt_err:.2e} (tol 1e-9)")


# 2 ---------------------------------------------------------------------------

def test_criterion_2_probability_exactness(verdict):
    fork = aco_fork_probability(10, 0, 20, 2)
    cfg = SwarmConfig(c=20, alpha=2)
    p = move_probabilities(PolicyKind.IAA, [80, 0, 0, 0, 0], [True] * 5, cfg)
    # hand values: 100^-2 against 20^-2 for the four untouched options
    pn = 100.0 ** -2 / (100.0 ** -2 + 4 * 20.0 ** -2)
    po = 20.0 ** -2 / (100.0 ** -2 + 4 * 20.0 ** -2)
    iaa_err = max(abs(p[0] - pn), *(abs(v - po) for v in p[1:]))
    hand_err = max(abs(pn - 0.009901), abs(po - 0.247525))

    rng = np.random.default_rng(2)
    policies = list(PolicyKind)
    worst = 0.0
    for _ in range(10_000):
        policy = policies[rng.integers(len(policies))]
        view = rng.uniform(0, rng.choice([1, 100, 1e4]), 5)
        adm = rng.random(5) < 0.6
        adm[4] = True
        probs = move_probabilities(policy, view, adm, cfg)
        worst = max(worst, abs(float(np.sum(probs)) - 1.0))
        assert np.all(probs[~adm] == 0)
    ok = abs(fork - 0.69231) <= 1e-5 and iaa_err <= 1e-6 and hand_err <= 1e-6 and worst <= 1e-9
    verdict(2, ok, f"fork {fork:.6f} (want 0.69231), iAA error {iaa_err:.1e}, "
                   f"worst sum error {worst:.1e} over 10000 cases")


# 3 ---------------------------------------------------------------------------

def brute_force_cost(cost: np.ndarray, s: int, t: int) -> float:
    if s == t:
        return 0.0
    others = [v for v in range(len(cost)) if v not in (s, t)]
    best = math.inf
    for k in range(len(others) + 1):
        for middle in itertools.permutations(others, k):
            walk = (s, *middle, t)
            total = 0.0
            for u, v in zip(walk, walk[1:]):
                total += cost[u, v]
            best = min(best, total)
    return best


def test_criterion_3_dijkstra_oracle(verdict):
    rng = np.random.default_rng(3)
    matches = 0
    for _ in range(500):
        n = int(rng.integers(2, 9))
        w = np.triu(rng.integers(1, 20, (n, n)).astype(float), 1)
        gone = np.triu(rng.random((n, n)) < rng.uniform(0.2, 0.8), 1)
        w[gone] = np.inf
        w = w + w.T
        np.fill_diagonal(w, np.inf)
        nodes = [RelayNode(i, Cell(i, 0), NodeKind.AGENT) for i in range(n)]
        graph = RelayGraph(nodes, w, math.inf, WallMode.IMPENETRABLE)
        s, t = (int(v) for v in rng.integers(n, size=2))
        want = brute_force_cost(w, s, t)
        got = dijkstra(graph, s, t)
        matches += (got is None and math.isinf(want)) or (got is not None and got.cost == want)
    verdict(3, matches == 500, f"{matches}/500 graphs match brute-force minimum exactly")


# 4 ---------------------------------------------------------------------------

def test_criterion_4_policy_ordering(verdict):
    maze = generate_with_complexity(M1, seed=0)
    steps = {}
    for policy in (PolicyKind.IAA, PolicyKind.AA, PolicyKind.RANDOM):
        cfg = SwarmConfig(policy=policy, group_size=100)
        steps[policy] = [run_search(maze, cfg, s).iterations for s in SEEDS]
    iaa = steps[PolicyKind.IAA]
    ok = clearly_below(iaa, steps[PolicyKind.AA]) and clearly_below(iaa, steps[PolicyKind.RANDOM])
    detail = ", ".join(f"{p.value} {mean_std(v)[0]:.0f}+/-{mean_std(v)[1]:.0f}" for p, v in steps.items())
    verdict(4, ok, f"mean ticks to find the target: {detail}")


# 5 ---------------------------------------------------------------------------

PERFECT_M1 = MazeClass("M1-perfect", M1.width, M1.height, M1.target_complexity, M1.tolerance)


def centre_cell(maze: Maze) -> Cell:
    cx, cy = (maze.width - 1) / 2, (maze.height - 1) / 2
    return min(maze.free_cells(), key=lambda c: ((c.x - cx) ** 2 + (c.y - cy) ** 2, c.y, c.x))


def test_criterion_5_coverage(verdict):
    far, mid = [], []
    cfg = SwarmConfig(policy=PolicyKind.IAA, group_size=100)
    corner = Cell(M1.width - 1, M1.height - 1)
    for s in SEEDS:
        perfect = generate_with_complexity(PERFECT_M1, seed=s, loop_fraction=0.0)
        far_maze = Maze(perfect.walls, Cell(0, 0), corner)
        mid_maze = Maze(perfect.walls, Cell(0, 0), centre_cell(perfect))
        far.append(run_search(far_maze, cfg, s).coverage)
        mid.append(run_search(mid_maze, cfg, s).coverage)
    f, m = float(np.mean(far)), float(np.mean(mid))
    verdict(5, f > 0.70 and m > 0.50,
            f"far-corner coverage {f:.4f} (need > 0.70), mid-maze coverage {m:.4f} (need > 0.50)")


# 6 ---------------------------------------------------------------------------

def test_criterion_6_group_size_trends(verdict):
    plan = ExperimentPlan(
        maze_classes=tuple(MAZE_CLASSES.values()),
        layouts_per_class=2,
        repetitions=5,
        group_sizes=(100, 200, 300, 400, 500, 600),
        policies=(PolicyKind.IAA,),
        name="acceptance-6",
    )
    stats = {(s.key["maze_class"], s.key["group_size"]): s
             for s in aggregate(run_plan(plan), ["maze_class", "group_size"])}
    names = [c.name for c in plan.maze_classes]
    largest = names[-1]
    t100 = stats[(largest, 100)].mean["iterations"]
    t600 = stats[(largest, 600)].mean["iterations"]
    drop = 1 - t600 / t100
    monotone = all(
        stats[(c, a)].mean["total_energy"] < stats[(c, b)].mean["total_energy"]
        for c in names for a, b in zip(plan.group_sizes, plan.group_sizes[1:])
    )
    gaps = [stats[(names[-1], g)].mean["total_energy"] / stats[(names[0], g)].mean["total_energy"] - 1
            for g in plan.group_sizes]
    failures = sum(s.failures for s in stats.values())
    ok = drop >= 0.15 and monotone and min(gaps) >= 0.15 and failures == 0
    verdict(6, ok, f"{largest} ticks {t100:.0f} -> {t600:.0f} ({drop:.1%} drop, need >= 15%); "
                   f"energy monotone in group size: {monotone}; "
                   f"least-to-most complex energy gap min {min(gaps):.0%} (need >= 15%); "
                   f"failed runs {failures}")


# 7 ---------------------------------------------------------------------------

def test_criterion_7_penetrable_vs_impenetrable(verdict):
    pairs = []
    seed = 0
    while len(pairs) < 20:
        maze = generate_with_complexity(M1, seed=seed)
        search = run_search(maze, SwarmConfig(group_size=60), seed)
        seed += 1
        if not search.found:
            continue
        try:
            stop_and_extend(search, maze, TRANGE, WallMode.IMPENETRABLE)
        except RelayError:
            continue
        layout = search.state.positions()
        hard = route(maze, layout, TRANGE, WallMode.IMPENETRABLE)
        soft = route(maze, layout, TRANGE, WallMode.PENETRABLE)
        if hard is not None and soft is not None:
            pairs.append((hard.total_cost, soft.total_cost))
    le = sum(s <= h for h, s in pairs)
    lt = sum(s < h for h, s in pairs)
    ratio = np.mean([s / h for h, s in pairs])
    verdict(7, le == 20 and lt >= 10,
            f"penetrable <= impenetrable in {le}/20, strictly lower in {lt}/20 (need 20 and >= 10); "
            f"mean cost ratio {ratio:.3f}; {seed} layouts tried")


# 8 ---------------------------------------------------------------------------

def edge_ok(maze: Maze, a: Cell, b: Cell, mode: WallMode) -> float | None:
    """Independent re-derivation of one link's weight, or None if it is not a link."""
    d = euclid(a, b)
    walls = wall_count(maze, a, b)
    if walls and mode is WallMode.IMPENETRABLE:
        return None
    w = d if walls == 0 else d * 10 ** (4.4349 * walls / 28)
    return w if w <= TRANGE else None


def test_criterion_8_stop_and_extend(verdict):
    scenarios = terminated = valid = bounded = 0
    seed = 0
    while scenarios < 50:
        maze = generate_with_complexity(M1, seed=seed)
        search = run_search(maze, SwarmConfig(group_size=50), seed)
        seed += 1
        if not search.found or route(maze, search.final_positions, TRANGE) is not None:
            continue
        scenarios += 1
        try:
            res = stop_and_extend(search, maze, TRANGE, WallMode.IMPENETRABLE)
        except RelayError:
            continue
        terminated += 1
        cells = [n.position for n in res.path]
        weights = [edge_ok(maze, a, b, res.mode) for a, b in zip(cells, cells[1:])]
        valid += (res.path[0].id == SOURCE and res.path[-1].id == TARGET
                  and None not in weights
                  and math.isclose(sum(weights), res.total_cost, rel_tol=1e-9, abs_tol=1e-12))
        bounded += res.total_cost <= res.chain_cost + 1e-12
    ok = terminated >= 45 and valid == terminated and bounded == terminated
    verdict(8, ok, f"terminated {terminated}/50 (need >= 45), edge-valid {valid}/{terminated}, "
                   f"final cost <= stop-order chain cost {bounded}/{terminated}; "
                   f"{seed} seeds tried")


# 9 ---------------------------------------------------------------------------

def u_pocket() -> Maze:
    """Agents start deep inside a pocket whose closed end faces the beacon."""
    walls = np.zeros((20, 15), dtype=bool)
    walls[15, 3:12] = True   # bottom, between the start and the beacon
    walls[2:16, 3] = True    # left side
    walls[2:16, 11] = True   # right side
    return Maze(walls, Cell(7, 12), Cell(7, 18))


def test_criterion_9_beacon_trap(verdict):
    maze = u_pocket()
    steps = {
        policy: [run_search(maze, SwarmConfig(policy=policy, group_size=30), s).iterations
                 for s in SEEDS]
        for policy in (PolicyKind.IAA_B, PolicyKind.IAA)
    }
    b, plain = (mean_std(steps[p]) for p in (PolicyKind.IAA_B, PolicyKind.IAA))
    verdict(9, b[0] > plain[0],
            f"mean ticks iaa-b {b[0]:.1f}+/-{b[1]:.1f} vs iaa {plain[0]:.1f}+/-{plain[1]:.1f}")


# 10 --------------------------------------------------------------------------

def test_criterion_10_determinism(verdict, tmp_path):
    outputs = []
    for run in range(2):
        path = tmp_path / f"benchmark-{run}.csv"
        code = main(["experiment", "--preset", "benchmark", "--csv", str(path)],
                    stdout=io.StringIO(), stderr=io.StringIO())
        assert code == 0
        outputs.append(path.read_bytes())
    rows = outputs[0].count(b"\n") - 1
    verdict(10, outputs[0] == outputs[1] and rows == 600,
            f"two benchmark runs byte-identical: {outputs[0] == outputs[1]}, {rows} rows each")
