"""Phase II: connect the source to the target through a chain of agents.

Node ids are fixed: the source is node 0, the target node 1 and agent ``a``
is node ``a + 2``. Edge costs live in a dense symmetric matrix with
``inf`` marking a missing link.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .maze import Cell, Maze, MazeError
from .signal import DEFAULT_PARAMS, PropagationParams, effective_distance, path_loss, wall_count
from .swarm import SearchResult

SOURCE = 0
TARGET = 1
DEFAULT_TRANGE = 6.0


class WallMode(str, Enum):
    IMPENETRABLE = "impenetrable"
    PENETRABLE = "penetrable"


class NodeKind(str, Enum):
    SOURCE = "source"
    AGENT = "agent"
    TARGET = "target"


class RelayError(RuntimeError):
    """Stop-and-extend gave up. ``stopped`` holds the partial chain."""

    def __init__(self, message: str, stopped: Sequence[int], iterations: int) -> None:
        super().__init__(message)
        self.stopped = list(stopped)
        self.iterations = iterations


@dataclass(frozen=True)
class RelayNode:
    id: int
    position: Cell
    kind: NodeKind
    depth: int | None = None

    @property
    def agent(self) -> int | None:
        return self.id - 2 if self.kind is NodeKind.AGENT else None


def agent_node(agent: int) -> int:
    return agent + 2


def layout_nodes(maze: Maze, agents: Iterable[Cell]) -> list[RelayNode]:
    nodes = [
        RelayNode(SOURCE, Cell(*maze.source), NodeKind.SOURCE),
        RelayNode(TARGET, Cell(*maze.target), NodeKind.TARGET),
    ]
    nodes += [RelayNode(agent_node(a), Cell(*c), NodeKind.AGENT) for a, c in enumerate(agents)]
    return nodes


@dataclass(eq=False)
class RelayGraph:
    nodes: list[RelayNode]
    cost: np.ndarray
    trange: float
    mode: WallMode

    @property
    def size(self) -> int:
        return len(self.nodes)

    def has_edge(self, u: int, v: int) -> bool:
        return bool(np.isfinite(self.cost[u, v]))

    def neighbors(self, u: int) -> np.ndarray:
        return np.flatnonzero(np.isfinite(self.cost[u]))

    def restricted(self, keep: Iterable[int]) -> RelayGraph:
        """Same nodes, but only edges among ``keep`` survive."""
        mask = np.zeros(self.size, dtype=bool)
        mask[list(keep)] = True
        cost = np.where(mask[:, None] & mask[None, :], self.cost, np.inf)
        return RelayGraph(self.nodes, cost, self.trange, self.mode)


class WallCache:
    """Memoised wall counts for one maze, keyed by unordered cell pair."""

    def __init__(self, maze: Maze) -> None:
        self.maze = maze
        self._counts: dict[tuple[Cell, Cell], int] = {}

    def __call__(self, a: Cell, b: Cell) -> int:
        key = (a, b) if a <= b else (b, a)
        hit = self._counts.get(key)
        if hit is None:
            hit = self._counts[key] = wall_count(self.maze, a, b)
        return hit


def link_cost(
    distance: float, walls: int, mode: WallMode, params: PropagationParams = DEFAULT_PARAMS
) -> float:
    """Weight of a link, or ``inf`` when the mode forbids it regardless of range."""
    if walls == 0:
        return distance
    if mode is WallMode.IMPENETRABLE:
        return np.inf
    return effective_distance(path_loss(distance, walls, params), params)


def build_graph(
    nodes: Sequence[RelayNode],
    maze: Maze,
    trange: float = DEFAULT_TRANGE,
    mode: WallMode = WallMode.IMPENETRABLE,
    params: PropagationParams = DEFAULT_PARAMS,
    walls: WallCache | None = None,
) -> RelayGraph:
    """Connectivity graph of ``nodes`` under the given wall mode.

    Nodes sharing a cell are joined by a zero-cost link.
    """
    if trange <= 0:
        raise ValueError("trange must be positive")
    mode = WallMode(mode)
    for node in nodes:
        if not maze.is_free(node.position):
            raise MazeError(f"node {node.id} at {tuple(node.position)} is not a free cell")
    walls = walls or WallCache(maze)

    cells, inverse = np.unique(
        np.array([[n.position.x, n.position.y] for n in nodes], dtype=np.int64),
        axis=0,
        return_inverse=True,
    )
    inverse = inverse.reshape(-1)
    diff = cells[:, None, :] - cells[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1]) * params.cell_size_m
    cell_cost = np.full(dist.shape, np.inf)
    np.fill_diagonal(cell_cost, 0.0)
    # wall crossings only stretch a link, so Euclidean range is a safe prefilter
    for i, j in zip(*np.nonzero(np.triu(dist <= trange, k=1))):
        a, b = Cell(*cells[i]), Cell(*cells[j])
        w = link_cost(float(dist[i, j]), walls(a, b), mode, params)
        if w <= trange:
            cell_cost[i, j] = cell_cost[j, i] = w

    cost = cell_cost[inverse[:, None], inverse[None, :]]
    np.fill_diagonal(cost, np.inf)
    return RelayGraph(list(nodes), cost, trange, mode)


class Route(NamedTuple):
    nodes: list[int]
    cost: float


def dijkstra(graph: RelayGraph, start: int, goal: int) -> Route | None:
    """Cheapest route from ``start`` to ``goal``, or ``None`` when unreachable.

    Settles the lowest tentative distance first, the lower id on ties, and
    only relaxes on strict improvement.
    """
    n = graph.size
    for v in (start, goal):
        if not 0 <= v < n:
            raise ValueError(f"unknown node id {v}")
    if np.any(graph.cost < 0):
        raise ValueError("edge weights must be non-negative")
    dist = np.full(n, np.inf)
    prev = np.full(n, -1, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    dist[start] = 0.0
    while True:
        u = int(np.argmin(np.where(done, np.inf, dist)))
        if done[u] or not np.isfinite(dist[u]):
            return None
        if u == goal:
            break
        done[u] = True
        cand = dist[u] + graph.cost[u]
        better = (cand < dist) & ~done
        dist[better] = cand[better]
        prev[better] = u
    path = [goal]
    while path[-1] != start:
        path.append(int(prev[path[-1]]))
    return Route(path[::-1], float(dist[goal]))


def path_cost(graph: RelayGraph, path: Sequence[int]) -> float:
    total = 0.0
    for u, v in zip(path, path[1:]):
        if not graph.has_edge(u, v):
            raise ValueError(f"no edge between nodes {u} and {v}")
        total += float(graph.cost[u, v])
    return total


def compute_depths(graph: RelayGraph, source: int = SOURCE) -> list[int | None]:
    """Hops from the source minus one; ``None`` for the source and unreachable nodes."""
    hops = [-1] * graph.size
    hops[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in graph.neighbors(u).tolist():
            if hops[v] < 0:
                hops[v] = hops[u] + 1
                queue.append(v)
    return [h - 1 if h > 0 else None for h in hops]


@dataclass(eq=False)
class RelayResult:
    path: list[RelayNode]
    total_cost: float
    mode: WallMode
    trange: float
    protocol_iterations: int = 0
    stopped_ids: list[int] = field(default_factory=list)
    chain_cost: float | None = None

    @property
    def hops(self) -> int:
        return len(self.path) - 1

    def path_text(self) -> str:
        return ";".join(f"{n.position.x}:{n.position.y}" for n in self.path)

    def to_row(self) -> dict[str, object]:
        return {
            "mode": self.mode.value,
            "trange": self.trange,
            "hops": self.hops,
            "total_cost_m": self.total_cost,
            "protocol_iterations": self.protocol_iterations,
            "path": self.path_text(),
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RelayResult):
            return NotImplemented
        return self.to_row() == other.to_row() and self.stopped_ids == other.stopped_ids


def route(
    maze: Maze,
    agents: Iterable[Cell],
    trange: float = DEFAULT_TRANGE,
    mode: WallMode = WallMode.IMPENETRABLE,
    params: PropagationParams = DEFAULT_PARAMS,
) -> RelayResult | None:
    """Plain Dijkstra relay over a fixed layout, without moving anyone."""
    graph = build_graph(layout_nodes(maze, agents), maze, trange, mode, params)
    found = dijkstra(graph, SOURCE, TARGET)
    if found is None:
        return None
    return RelayResult([graph.nodes[i] for i in found.nodes], found.cost, graph.mode, trange,
                       stopped_ids=[i - 2 for i in found.nodes if i >= 2], chain_cost=found.cost)


def stop_and_extend(
    search: SearchResult,
    maze: Maze,
    trange: float = DEFAULT_TRANGE,
    mode: WallMode = WallMode.IMPENETRABLE,
    params: PropagationParams = DEFAULT_PARAMS,
    rng: np.random.Generator | None = None,
    *,
    budget: int | None = None,
) -> RelayResult:
    """Freeze agents into a chain from the target back towards the source.

    Continues the Phase I swarm in place. When the agents already link the
    source to the target no one moves. Otherwise the finder stops first, and
    each round the most recently stopped agent recruits the linked moving
    agent of lowest depth (lower id on ties). With nobody in reach the moving
    agents take one more search tick. Once the stopped chain reaches the
    source, the route is recomputed over every node.
    """
    swarm = search.state
    if swarm is None or not search.found or search.finder is None:
        raise ValueError("stop-and-extend needs a Phase I run that found the target")
    if rng is not None:
        swarm.rng = rng
    mode = WallMode(mode)
    budget = 10 * swarm.config.max_iterations if budget is None else budget
    walls = WallCache(maze)

    def current_graph() -> RelayGraph:
        return build_graph(layout_nodes(maze, swarm.positions()), maze, trange, mode, params, walls)

    graph = current_graph()
    direct = dijkstra(graph, SOURCE, TARGET)
    if direct is not None:
        return RelayResult([graph.nodes[i] for i in direct.nodes], direct.cost, mode, trange,
                           stopped_ids=[i - 2 for i in direct.nodes if i >= 2],
                           chain_cost=direct.cost)

    frozen = np.zeros(swarm.n, dtype=bool)
    stopped = [search.finder]
    frozen[search.finder] = True
    ticks = 0
    while True:
        chain = graph.restricted([SOURCE, TARGET, *(agent_node(a) for a in stopped)])
        if dijkstra(chain, SOURCE, TARGET) is not None:
            break
        last = agent_node(stopped[-1])
        linked = [v - 2 for v in graph.neighbors(last).tolist() if v >= 2 and not frozen[v - 2]]
        if linked:
            depths = compute_depths(graph)
            pick = min(linked, key=lambda a: (
                np.inf if depths[agent_node(a)] is None else depths[agent_node(a)], a))
            stopped.append(pick)
            frozen[pick] = True
            continue
        if frozen.all():
            raise RelayError("every agent is stopped but the chain is incomplete", stopped, ticks)
        if ticks >= budget:
            raise RelayError(f"no relay within {budget} protocol ticks", stopped, ticks)
        swarm.step(frozen=frozen)
        ticks += 1
        graph = current_graph()

    # only the newest stopped agent can be the one linked to the source
    chain_nodes = [TARGET, *(agent_node(a) for a in stopped), SOURCE]
    final = dijkstra(graph, SOURCE, TARGET)
    assert final is not None
    return RelayResult([graph.nodes[i] for i in final.nodes], final.cost, mode, trange,
                       protocol_iterations=ticks, stopped_ids=stopped,
                       chain_cost=path_cost(graph, chain_nodes))
