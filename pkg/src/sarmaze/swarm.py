"""Phase I: ant-algorithm swarm exploration.

Each agent carries its own pheromone map. Every tick each agent scores its
five options (N, E, S, W, stay) from the map, draws one by roulette wheel,
moves and deposits. Agents within communication range then merge maps.

The tick loop is vectorised over agents. That is exact rather than an
approximation because during the move phase an agent only reads and writes
its own map, so the outcome does not depend on the order agents act in;
the uniform variates are drawn as one vector in ascending id order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from typing import Callable, Sequence

import numpy as np

from .maze import Cell, Maze, MazeError
from .signal import DEFAULT_PARAMS, PowerField, PropagationParams, beacon_field


class Move(IntEnum):
    N = 0
    E = 1
    S = 2
    W = 3
    STAY = 4


MOVE_DX = np.array([0, 1, 0, -1, 0])
MOVE_DY = np.array([-1, 0, 1, 0, 0])


class PolicyKind(str, Enum):
    RANDOM = "random"
    AA = "aa"
    IAA = "iaa"
    IAA_B = "iaa-b"
    IAA_R = "iaa-r"

    @property
    def inverted(self) -> bool:
        return self in (PolicyKind.IAA, PolicyKind.IAA_B, PolicyKind.IAA_R)


@dataclass(frozen=True)
class MoveCostTable:
    """Energy per action, as multiples of one forward step."""

    forward: float = 1.0
    turn_90: float = 1.5
    backward: float = 2.0
    stay: float = 0.1

    def __post_init__(self) -> None:
        costs = (self.forward, self.turn_90, self.backward, self.stay)
        if min(costs) < 0:
            raise ValueError("move costs must be non-negative")
        if self.backward < max(costs):
            raise ValueError("backward must be the most expensive move")

    def matrix(self) -> np.ndarray:
        """Cost indexed by [heading, move]."""
        out = np.empty((4, 5))
        for h in range(4):
            for m in range(5):
                out[h, m] = energy_of_transition(h, m, self)
        return out


@dataclass(frozen=True)
class SwarmConfig:
    policy: PolicyKind = PolicyKind.IAA
    group_size: int = 100
    c: float = 20.0
    alpha: float = 2.0
    deposit: float = 1.0
    comm_range: int = 1
    region_radius: int = 3
    energy_costs: MoveCostTable = field(default_factory=MoveCostTable)
    max_iterations: int = 10_000
    beacon_scale: float = 0.5
    propagation: PropagationParams = DEFAULT_PARAMS

    def __post_init__(self) -> None:
        object.__setattr__(self, "policy", PolicyKind(self.policy))
        if not self.c > 0:
            raise ValueError("c must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.deposit > 0:
            raise ValueError("deposit must be positive")
        if self.group_size < 1:
            raise ValueError("group_size must be at least 1")
        if self.comm_range < 0:
            raise ValueError("comm_range must be non-negative")
        if self.region_radius < 1:
            raise ValueError("region_radius must be at least 1")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        if self.beacon_scale < 0:
            raise ValueError("beacon_scale must be non-negative")

    def with_(self, **changes) -> SwarmConfig:
        return replace(self, **changes)


@dataclass(eq=False)
class PheromoneMap:
    intensity: np.ndarray
    visited: np.ndarray

    @classmethod
    def blank(cls, maze: Maze) -> PheromoneMap:
        shape = maze.walls.shape
        return cls(np.zeros(shape), np.zeros(shape, dtype=bool))

    @property
    def shape(self) -> tuple[int, int]:
        return self.intensity.shape

    def copy(self) -> PheromoneMap:
        return PheromoneMap(self.intensity.copy(), self.visited.copy())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PheromoneMap):
            return NotImplemented
        return np.array_equal(self.intensity, other.intensity) and np.array_equal(
            self.visited, other.visited
        )


def aco_fork_probability(n_a: float, n_b: float, c: float = 20.0, alpha: float = 2.0) -> float:
    """Probability of taking branch A at a two-way fork."""
    wa = (c + n_a) ** alpha
    wb = (c + n_b) ** alpha
    return wa / (wa + wb)


def _weights(policy: PolicyKind, views: np.ndarray, c: float, alpha: float) -> np.ndarray:
    if policy is PolicyKind.RANDOM:
        return np.ones_like(views)
    exponent = -alpha if policy.inverted else alpha
    return (c + views) ** exponent


def _distribution(
    policy: PolicyKind, views: np.ndarray, admissible: np.ndarray, c: float, alpha: float
) -> np.ndarray:
    weights = np.where(admissible, _weights(policy, views, c, alpha), 0.0)
    return weights / weights.sum(axis=-1, keepdims=True)


def move_probabilities(
    policy: PolicyKind | str,
    pheromone_view: Sequence[float],
    admissible: Sequence[bool],
    config: SwarmConfig,
) -> np.ndarray:
    """Distribution over (N, E, S, W, stay).

    ``pheromone_view`` holds the intensity each option is scored with (for
    iAA-R these are already region means). Inadmissible options get zero
    weight and the rest is renormalised.
    """
    policy = PolicyKind(policy)
    views = np.asarray(pheromone_view, dtype=float)
    adm = np.asarray(admissible, dtype=bool)
    if views.shape != (5,) or adm.shape != (5,):
        raise ValueError("expected five pheromone values and five admissibility flags")
    if np.any(views < 0) or not np.all(np.isfinite(views)):
        raise ValueError("pheromone intensities must be finite and non-negative")
    if not adm[Move.STAY]:
        raise ValueError("staying put must always be admissible")
    return _distribution(policy, views, adm, config.c, config.alpha)


def _check_distribution(distribution: np.ndarray) -> np.ndarray:
    p = np.asarray(distribution, dtype=float)
    if p.ndim != 1 or p.size == 0 or np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("malformed distribution")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"distribution sums to {p.sum()!r}, not 1")
    return p


def _roulette(cumulative: np.ndarray, u: np.ndarray, last_positive: np.ndarray) -> np.ndarray:
    hit = u[:, None] < cumulative
    # rounding can leave the final cumulative sum a hair below u
    return np.where(hit.any(axis=1), hit.argmax(axis=1), last_positive)


def sample_move(distribution: Sequence[float], rng: np.random.Generator) -> int:
    """Roulette-wheel draw using exactly one uniform variate."""
    p = _check_distribution(np.asarray(distribution))
    u = rng.random()
    last = int(np.flatnonzero(p > 0)[-1])
    return int(_roulette(np.cumsum(p)[None, :], np.array([u]), np.array([last]))[0])


def deposit(pmap: PheromoneMap, cell: Cell, config: SwarmConfig, maze: Maze | None = None) -> PheromoneMap:
    """Return a copy of ``pmap`` with one deposit at ``cell``."""
    x, y = cell
    h, w = pmap.shape
    if not (0 <= x < w and 0 <= y < h) or (maze is not None and maze.walls[y, x]):
        raise MazeError(f"cannot deposit on {tuple(cell)}: wall or out of bounds")
    out = pmap.copy()
    out.intensity[y, x] += config.deposit
    out.visited[y, x] = True
    return out


def exchange_maps(map_a: PheromoneMap, map_b: PheromoneMap) -> tuple[PheromoneMap, PheromoneMap]:
    """Both parties leave with the cell-wise max / logical-or of the two maps."""
    if map_a.shape != map_b.shape:
        raise ValueError(f"map shapes differ: {map_a.shape} vs {map_b.shape}")
    merged = PheromoneMap(
        np.maximum(map_a.intensity, map_b.intensity), map_a.visited | map_b.visited
    )
    return merged, merged.copy()


def init_beacon_pheromone(maze: Maze, field: PowerField, scale: float = 0.5) -> PheromoneMap:
    """Pheromone proportional to path loss above its minimum.

    Under the repulsive policies agents then drift down the loss gradient,
    i.e. towards the beacon.
    """
    if field.values.shape != maze.walls.shape:
        raise ValueError("field does not match maze dimensions")
    values = np.where(maze.walls, np.nan, field.values)
    intensity = scale * (values - np.nanmin(values))
    intensity = np.where(maze.walls, 0.0, intensity)
    return PheromoneMap(intensity, np.zeros(maze.walls.shape, dtype=bool))


def energy_of_transition(prev_heading: int, move: int, table: MoveCostTable) -> float:
    if move == Move.STAY:
        return table.stay
    turn = (int(move) - int(prev_heading)) % 4
    if turn == 0:
        return table.forward
    if turn == 2:
        return table.backward
    return table.turn_90


def _half_plane_offsets(radius: int) -> list[np.ndarray]:
    """Offsets strictly inside each direction's half-plane, Chebyshev <= radius."""
    rng = range(-radius, radius + 1)
    tests = (
        lambda dx, dy: dy < 0,
        lambda dx, dy: dx > 0,
        lambda dx, dy: dy > 0,
        lambda dx, dy: dx < 0,
    )
    return [np.array([(dx, dy) for dy in rng for dx in rng if test(dx, dy)]) for test in tests]


TraceFn = Callable[[int, int, int, int, int, float], None]


# above this many occupied cells a loop over neighbour offsets is cheaper
_PAIRWISE_LIMIT = 32


class Swarm:
    """Mutable state of one simulation run.

    Agents standing on the same cell after an exchange hold identical maps,
    so maps are stored once per distinct copy: agent ``a`` owns
    ``base[map_id[a]]`` plus, when ``pending[a]`` is set, one deposit at its
    current cell that the next exchange folds in.
    """

    def __init__(
        self,
        maze: Maze,
        config: SwarmConfig,
        rng: np.random.Generator,
        field: PowerField | None = None,
    ) -> None:
        self.maze = maze
        self.config = config
        self.rng = rng
        n = config.group_size
        h, w = maze.walls.shape
        self.free = ~maze.walls
        self.x = np.full(n, maze.source.x, dtype=np.int64)
        self.y = np.full(n, maze.source.y, dtype=np.int64)
        self.heading = np.zeros(n, dtype=np.int64)
        self.energy = np.zeros(n)
        self.steps = np.zeros(n, dtype=np.int64)
        self.tick = 0
        if config.policy is PolicyKind.IAA_B:
            if field is None:
                field = beacon_field(maze, maze.target, config.propagation)
            start = init_beacon_pheromone(maze, field, config.beacon_scale).intensity
        else:
            start = np.zeros((h, w))
        self.base_i = start[None].copy()
        self.base_v = np.zeros((1, h, w), dtype=bool)
        self.map_id = np.zeros(n, dtype=np.int64)
        self.pending = np.ones(n, dtype=bool)
        self.covered = np.zeros((h, w), dtype=bool)
        self.covered[maze.source.y, maze.source.x] = True
        self._cost = config.energy_costs.matrix()
        self._regions = _half_plane_offsets(config.region_radius)
        self._settle()

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def intensity(self) -> np.ndarray:
        """Per-agent intensity maps, shape (agents, height, width)."""
        out = self.base_i[self.map_id]
        a = np.flatnonzero(self.pending)
        out[a, self.y[a], self.x[a]] += self.config.deposit
        return out

    @intensity.setter
    def intensity(self, value: np.ndarray) -> None:
        visited = self.visited
        self.base_i = np.array(value, dtype=float)
        self.base_v = visited
        self.map_id = np.arange(self.n)
        self.pending = np.zeros(self.n, dtype=bool)

    @property
    def visited(self) -> np.ndarray:
        out = self.base_v[self.map_id]
        a = np.flatnonzero(self.pending)
        out[a, self.y[a], self.x[a]] = True
        return out

    @visited.setter
    def visited(self, value: np.ndarray) -> None:
        intensity = self.intensity
        self.base_i = intensity
        self.base_v = np.array(value, dtype=bool)
        self.map_id = np.arange(self.n)
        self.pending = np.zeros(self.n, dtype=bool)

    def positions(self) -> list[Cell]:
        return [Cell(int(x), int(y)) for x, y in zip(self.x, self.y)]

    def coverage(self) -> float:
        return float(self.covered.sum() / self.free.sum())

    def agents_at(self, cell: Cell) -> np.ndarray:
        return np.flatnonzero((self.x == cell[0]) & (self.y == cell[1]))

    def map_of(self, agent: int) -> PheromoneMap:
        i = self.base_i[self.map_id[agent]].copy()
        v = self.base_v[self.map_id[agent]].copy()
        if self.pending[agent]:
            i[self.y[agent], self.x[agent]] += self.config.deposit
            v[self.y[agent], self.x[agent]] = True
        return PheromoneMap(i, v)

    def merged_map(self) -> PheromoneMap:
        return PheromoneMap(self.intensity.max(axis=0), self.visited.any(axis=0))

    def admissible(self, idx: np.ndarray) -> np.ndarray:
        h, w = self.free.shape
        nx = self.x[idx, None] + MOVE_DX
        ny = self.y[idx, None] + MOVE_DY
        inside = (nx >= 0) & (nx < w) & (ny >= 0) & (ny < h)
        ok = np.zeros(inside.shape, dtype=bool)
        ok[inside] = self.free[ny[inside], nx[inside]]
        return ok

    def views(self, idx: np.ndarray) -> np.ndarray:
        """Pheromone value each agent scores its five options with."""
        h, w = self.free.shape
        xs, ys = self.x[idx], self.y[idx]
        mid = self.map_id[idx]
        nx = np.clip(xs[:, None] + MOVE_DX, 0, w - 1)
        ny = np.clip(ys[:, None] + MOVE_DY, 0, h - 1)
        views = self.base_i[mid[:, None], ny, nx]
        views[:, Move.STAY] += self.pending[idx] * self.config.deposit
        if self.config.policy is PolicyKind.IAA_R:
            for d, offsets in enumerate(self._regions):
                rx = xs[:, None] + offsets[:, 0]
                ry = ys[:, None] + offsets[:, 1]
                inside = (rx >= 0) & (rx < w) & (ry >= 0) & (ry < h)
                rxc, ryc = np.clip(rx, 0, w - 1), np.clip(ry, 0, h - 1)
                mask = inside & self.free[ryc, rxc]
                total = np.where(mask, self.base_i[mid[:, None], ryc, rxc], 0.0).sum(axis=1)
                count = mask.sum(axis=1)
                views[:, d] = np.where(count > 0, total / np.maximum(count, 1), views[:, d])
        return views

    def step(self, frozen: np.ndarray | None = None, trace: TraceFn | None = None) -> None:
        """Advance one tick. Agents flagged in ``frozen`` neither move nor deposit."""
        self.tick += 1
        idx = np.arange(self.n) if frozen is None else np.flatnonzero(~frozen)
        if idx.size:
            cfg = self.config
            adm = self.admissible(idx)
            probs = _distribution(cfg.policy, self.views(idx), adm, cfg.c, cfg.alpha)
            u = self.rng.random(idx.size)
            last = 4 - (probs[:, ::-1] > 0).argmax(axis=1)
            moves = _roulette(np.cumsum(probs, axis=1), u, last)

            cost = self._cost[self.heading[idx], moves]
            self.energy[idx] += cost
            moving = moves != Move.STAY
            self.steps[idx] += moving
            self.x[idx] += MOVE_DX[moves]
            self.y[idx] += MOVE_DY[moves]
            self.heading[idx] = np.where(moving, moves, self.heading[idx])
            self.pending[idx] = True
            self.covered[self.y[idx], self.x[idx]] = True
            if trace is not None:
                for a, m in zip(idx.tolist(), moves.tolist()):
                    trace(self.tick, a, int(self.x[a]), int(self.y[a]), m, float(self.energy[a]))
        self.exchange()

    def _settle(self) -> None:
        """Fold pending deposits into the stored maps without any sharing."""
        if self.pending.any():
            self.exchange(comm_range=-1)

    def exchange(self, comm_range: int | None = None) -> None:
        """One synchronous round of map sharing.

        Each agent ends with the merge of its own map and the maps of every
        agent within ``comm_range`` (Chebyshev), all taken from before the
        round. Agents on one cell always end up with the same map, so the
        result is stored once per occupied cell.
        """
        r = self.config.comm_range if comm_range is None else comm_range
        h, w = self.free.shape
        cell_id = self.y * w + self.x
        occupied, inverse = np.unique(cell_id, return_inverse=True)
        k = occupied.size

        # distinct (cell, stored map, pending deposit) combinations
        key = (inverse * (self.base_i.shape[0] + 1) + self.map_id) * 2 + self.pending
        combos, first = np.unique(key, return_index=True)
        c_cell = inverse[first]
        c_i = self.base_i[self.map_id[first]]
        c_v = self.base_v[self.map_id[first]]
        dep = np.flatnonzero(self.pending[first])
        ya, xa = self.y[first[dep]], self.x[first[dep]]
        c_i[dep, ya, xa] += self.config.deposit
        c_v[dep, ya, xa] = True

        if r < 0:
            # settle only: every agent keeps its own map
            _, back = np.unique(key, return_inverse=True)
            self.base_i, self.base_v = c_i, c_v
            self.map_id = back.reshape(-1)
            self.pending[:] = False
            return

        # combos are sorted by cell, so reduceat groups them per cell
        starts = np.flatnonzero(np.r_[True, np.diff(c_cell) != 0])
        agg_i = np.maximum.reduceat(c_i, starts, axis=0)
        agg_v = np.logical_or.reduceat(c_v, starts, axis=0)

        merged_i, merged_v = agg_i, agg_v
        oy, ox = np.divmod(occupied, w)
        if r > 0 and 1 < k <= _PAIRWISE_LIMIT:
            near = (np.abs(ox[:, None] - ox) <= r) & (np.abs(oy[:, None] - oy) <= r)
            # row-major pairs, so each cell's neighbours (itself included) are contiguous
            rows, cols = np.nonzero(near)
            if cols.size > k:
                bounds = np.searchsorted(rows, np.arange(k))
                merged_i = np.maximum.reduceat(agg_i[cols], bounds, axis=0)
                merged_v = np.logical_or.reduceat(agg_v[cols], bounds, axis=0)
        elif r > 0 and k > 1:
            merged_i = agg_i.copy()
            merged_v = agg_v.copy()
            lookup = np.full((h + 2 * r, w + 2 * r), -1, dtype=np.int64)
            lookup[oy + r, ox + r] = np.arange(k)
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    if dx == 0 and dy == 0:
                        continue
                    nb = lookup[oy + r + dy, ox + r + dx]
                    has = np.flatnonzero(nb >= 0)
                    if has.size:
                        src = nb[has]
                        merged_i[has] = np.maximum(merged_i[has], agg_i[src])
                        merged_v[has] |= agg_v[src]
        self.base_i, self.base_v = merged_i, merged_v
        self.map_id = inverse.reshape(-1)
        self.pending[:] = False

    def at_target(self, idx: np.ndarray | None = None) -> np.ndarray:
        t = self.maze.target
        hit = (self.x == t.x) & (self.y == t.y)
        return np.flatnonzero(hit) if idx is None else idx[hit[idx]]


@dataclass(eq=False)
class SearchResult:
    found: bool
    iterations: int
    total_steps: int
    total_energy: float
    coverage: float
    final_positions: list[Cell]
    merged_map: PheromoneMap
    finder: int | None = None
    state: Swarm | None = field(default=None, repr=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SearchResult):
            return NotImplemented
        return (
            self.found == other.found
            and self.iterations == other.iterations
            and self.total_steps == other.total_steps
            and self.total_energy == other.total_energy
            and self.coverage == other.coverage
            and self.final_positions == other.final_positions
            and self.merged_map == other.merged_map
            and self.finder == other.finder
        )


def summarize(swarm: Swarm) -> SearchResult:
    finders = swarm.at_target()
    return SearchResult(
        found=bool(finders.size),
        iterations=swarm.tick,
        total_steps=int(swarm.steps.sum()),
        total_energy=float(swarm.energy.sum()),
        coverage=swarm.coverage(),
        final_positions=swarm.positions(),
        merged_map=swarm.merged_map(),
        finder=int(finders[0]) if finders.size else None,
        state=swarm,
    )


def run_search(
    maze: Maze,
    config: SwarmConfig,
    seed: int | np.random.Generator | None = 0,
    *,
    field: PowerField | None = None,
    trace: TraceFn | None = None,
    on_tick: Callable[[Swarm], None] | None = None,
) -> SearchResult:
    """Run Phase I until an agent stands on the target or the budget runs out."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    swarm = Swarm(maze, config, rng, field)
    while swarm.tick < config.max_iterations:
        swarm.step(trace=trace)
        if on_tick is not None:
            on_tick(swarm)
        if swarm.at_target().size:
            break
    return summarize(swarm)
