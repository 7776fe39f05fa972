"""Block mazes on a square grid.

Walls occupy whole cells. A cell is one agent-sized unit, and everything
outside the grid is treated as wall.
"""

from __future__ import annotations

import hashlib
import math
from collections import deque
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

import numpy as np

MIN_SIDE = 4
DEFAULT_LOOP_FRACTION = 0.05
DEFAULT_ATTEMPT_BUDGET = 10_000


class MazeError(ValueError):
    """Invalid maze arguments or unparseable maze text."""


class GenerationError(RuntimeError):
    """No maze of the requested complexity within the attempt budget."""


class Cell(NamedTuple):
    x: int
    y: int


class Direction(IntEnum):
    N = 0
    E = 1
    S = 2
    W = 3

    @property
    def dx(self) -> int:
        return _OFFSETS[self][0]

    @property
    def dy(self) -> int:
        return _OFFSETS[self][1]

    def opposite(self) -> Direction:
        return Direction((self + 2) % 4)

    def step(self, cell: Cell) -> Cell:
        return Cell(cell.x + self.dx, cell.y + self.dy)


# y grows downwards (row index), so north is y - 1
_OFFSETS = {0: (0, -1), 1: (1, 0), 2: (0, 1), 3: (-1, 0)}


@dataclass(frozen=True, eq=False)
class Maze:
    """Occupancy grid plus source and target cells.

    ``walls[y, x]`` is True for wall cells. The array is made read-only on
    construction so a maze can be shared between simulations.
    """

    walls: np.ndarray
    source: Cell
    target: Cell

    def __post_init__(self) -> None:
        walls = np.array(self.walls, dtype=bool)
        walls.setflags(write=False)
        object.__setattr__(self, "walls", walls)
        object.__setattr__(self, "source", Cell(*self.source))
        object.__setattr__(self, "target", Cell(*self.target))
        if walls.ndim != 2:
            raise MazeError("occupancy grid must be two-dimensional")
        for name, cell in (("source", self.source), ("target", self.target)):
            if not self.is_free(cell):
                raise MazeError(f"{name} {tuple(cell)} is not a free cell")
        if self.source == self.target:
            raise MazeError("source and target must be distinct")
        if bfs_distances(walls, self.source)[self.target.y, self.target.x] < 0:
            raise MazeError("unsolvable: target unreachable from source")

    @property
    def width(self) -> int:
        return self.walls.shape[1]

    @property
    def height(self) -> int:
        return self.walls.shape[0]

    @property
    def free(self) -> np.ndarray:
        return ~self.walls

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and not self.walls[cell[1], cell[0]]

    def free_cells(self) -> list[Cell]:
        ys, xs = np.nonzero(~self.walls)
        return [Cell(int(x), int(y)) for y, x in zip(ys, xs)]

    def with_target(self, target: Cell) -> Maze:
        return Maze(self.walls, self.source, target)

    def with_source(self, source: Cell) -> Maze:
        return Maze(self.walls, source, self.target)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Maze):
            return NotImplemented
        return (
            self.source == other.source
            and self.target == other.target
            and np.array_equal(self.walls, other.walls)
        )

    def __hash__(self) -> int:
        return hash((self.walls.tobytes(), self.walls.shape, self.source, self.target))

    def __str__(self) -> str:
        return save_maze(self)


@dataclass(frozen=True)
class MazeClass:
    """A named size/complexity bucket such as M1..M5.

    ``target_complexity`` of None means any complexity is accepted.
    """

    name: str
    width: int
    height: int
    target_complexity: int | None = None
    tolerance: int = 0

    def __post_init__(self) -> None:
        if self.width < MIN_SIDE or self.height < MIN_SIDE:
            raise MazeError(f"maze class {self.name}: dimensions below {MIN_SIDE}")
        if self.target_complexity is not None and self.target_complexity < 0:
            raise MazeError(f"maze class {self.name}: negative target complexity")
        if self.tolerance < 0:
            raise MazeError(f"maze class {self.name}: negative tolerance")

    def accepts(self, turns: int) -> bool:
        if self.target_complexity is None:
            return True
        return abs(turns - self.target_complexity) <= self.tolerance


def _class(name: str, side: int, target: int) -> MazeClass:
    return MazeClass(name, side, side, target, math.ceil(0.05 * target))


# Complexity targets are the published ones; the side lengths are our own
# choice, picked so each target sits inside what the generator produces.
MAZE_CLASSES: dict[str, MazeClass] = {
    c.name: c
    for c in (
        _class("M1", 11, 22),
        _class("M2", 15, 47),
        _class("M3", 19, 81),
        _class("M4", 25, 129),
        _class("M5", 31, 210),
    )
}


def bfs_distances(walls: np.ndarray, start: Cell) -> np.ndarray:
    """Shortest 4-connected path length from ``start``; -1 where unreachable."""
    height, width = walls.shape
    dist = np.full((height, width), -1, dtype=np.int64)
    if walls[start[1], start[0]]:
        return dist
    dist[start[1], start[0]] = 0
    queue = deque([(start[0], start[1])])
    while queue:
        x, y = queue.popleft()
        d = dist[y, x] + 1
        for dx, dy in _OFFSETS.values():
            nx, ny = x + dx, y + dy
            if 0 <= nx < width and 0 <= ny < height and not walls[ny, nx] and dist[ny, nx] < 0:
                dist[ny, nx] = d
                queue.append((nx, ny))
    return dist


def farthest_cell(walls: np.ndarray, start: Cell) -> Cell:
    """Free cell at maximal BFS distance, lowest (y, x) on ties."""
    dist = bfs_distances(walls, start)
    # argmax over the row-major flattening returns the lowest (y, x)
    flat = int(np.argmax(dist))
    y, x = divmod(flat, walls.shape[1])
    return Cell(x, y)


def generate_maze(
    width: int,
    height: int,
    seed: int | None = 0,
    loop_fraction: float = DEFAULT_LOOP_FRACTION,
) -> Maze:
    """Recursive-backtracker block maze with a few extra loops.

    Lattice cells sit on even coordinates and passages between them are
    carved through the odd cells. After the perfect maze is built,
    ``loop_fraction`` of the remaining removable walls (walls separating two
    lattice cells) are opened. The source is a random lattice cell on the
    grid border, the target the free cell farthest from it.
    """
    if width < MIN_SIDE or height < MIN_SIDE:
        raise MazeError(f"maze must be at least {MIN_SIDE}x{MIN_SIDE}, got {width}x{height}")
    if not 0.0 <= loop_fraction <= 1.0:
        raise MazeError("loop_fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    walls = np.ones((height, width), dtype=bool)
    cols = (width + 1) // 2
    rows = (height + 1) // 2

    seen = np.zeros((rows, cols), dtype=bool)
    start = (int(rng.integers(cols)), int(rng.integers(rows)))
    seen[start[1], start[0]] = True
    walls[2 * start[1], 2 * start[0]] = False
    stack = [start]
    while stack:
        cx, cy = stack[-1]
        options = [
            (cx + dx, cy + dy)
            for dx, dy in _OFFSETS.values()
            if 0 <= cx + dx < cols and 0 <= cy + dy < rows and not seen[cy + dy, cx + dx]
        ]
        if not options:
            stack.pop()
            continue
        nx, ny = options[int(rng.integers(len(options)))]
        seen[ny, nx] = True
        walls[2 * ny, 2 * nx] = False
        walls[cy + ny, cx + nx] = False
        stack.append((nx, ny))

    if loop_fraction > 0:
        removable = [
            (x, y)
            for y in range(height)
            for x in range(width)
            if walls[y, x] and _separates_lattice_cells(x, y, width, height)
        ]
        n_open = int(round(loop_fraction * len(removable)))
        if n_open:
            for i in rng.choice(len(removable), size=n_open, replace=False):
                x, y = removable[int(i)]
                walls[y, x] = False

    border = [
        (2 * i, 2 * j)
        for j in range(rows)
        for i in range(cols)
        if 2 * i == 0 or 2 * j == 0 or 2 * i + 1 >= width - 1 or 2 * j + 1 >= height - 1
    ]
    sx, sy = border[int(rng.integers(len(border)))]
    source = Cell(sx, sy)
    return Maze(walls, source, farthest_cell(walls, source))


def _separates_lattice_cells(x: int, y: int, width: int, height: int) -> bool:
    if x % 2 == 1 and y % 2 == 0:
        return x + 1 < width
    if x % 2 == 0 and y % 2 == 1:
        return y + 1 < height
    return False


def complexity(maze: Maze) -> int:
    """Number of 90 degree turns available in the maze.

    Each free cell contributes one for every perpendicular pair of free
    neighbours among (N, E), (E, S), (S, W), (W, N).
    """
    free = np.pad(~maze.walls, 1, constant_values=False)
    core = free[1:-1, 1:-1]
    north = free[:-2, 1:-1]
    south = free[2:, 1:-1]
    west = free[1:-1, :-2]
    east = free[1:-1, 2:]
    pairs = (
        (north & east).astype(np.int64)
        + (east & south)
        + (south & west)
        + (west & north)
    )
    return int(pairs[core].sum())


def derive_seed(*parts: object) -> int:
    """Stable 64-bit seed from arbitrary hashable parts."""
    digest = hashlib.blake2b(repr(parts).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def generate_with_complexity(
    maze_class: MazeClass,
    seed: int = 0,
    *,
    budget: int = DEFAULT_ATTEMPT_BUDGET,
    loop_fraction: float = DEFAULT_LOOP_FRACTION,
) -> Maze:
    """First maze in a seeded sequence whose complexity is within tolerance."""
    for attempt in range(budget):
        maze = generate_maze(
            maze_class.width,
            maze_class.height,
            derive_seed("maze", seed, attempt),
            loop_fraction,
        )
        if maze_class.accepts(complexity(maze)):
            return maze
    raise GenerationError(
        f"no maze for class {maze_class.name} with complexity "
        f"{maze_class.target_complexity}±{maze_class.tolerance} in {budget} attempts"
    )


def free_neighbors(maze: Maze, cell: Cell) -> list[tuple[Direction, Cell]]:
    """Free 4-neighbours of a free cell, in N, E, S, W order."""
    if not maze.is_free(cell):
        raise MazeError(f"cell {tuple(cell)} is a wall or out of bounds")
    out = []
    for d in Direction:
        nb = d.step(Cell(*cell))
        if maze.is_free(nb):
            out.append((d, nb))
    return out


def save_maze(maze: Maze) -> str:
    lines = [f"{maze.width} {maze.height}"]
    for y in range(maze.height):
        row = []
        for x in range(maze.width):
            if (x, y) == maze.source:
                row.append("S")
            elif (x, y) == maze.target:
                row.append("T")
            else:
                row.append("#" if maze.walls[y, x] else ".")
        lines.append("".join(row))
    return "\n".join(lines) + "\n"


def load_maze(text: str) -> Maze:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise MazeError("line 1: missing header")
    try:
        width, height = (int(v) for v in lines[0].split())
    except ValueError:
        raise MazeError(f"line 1: expected 'width height', got {lines[0]!r}") from None
    if width < 1 or height < 1:
        raise MazeError("line 1: dimensions must be positive")
    rows = lines[1:]
    if len(rows) != height:
        raise MazeError(f"expected {height} rows, found {len(rows)}")
    walls = np.zeros((height, width), dtype=bool)
    source = target = None
    for y, row in enumerate(rows):
        lineno = y + 2
        if len(row) != width:
            raise MazeError(f"line {lineno}: ragged row of length {len(row)}, expected {width}")
        for x, glyph in enumerate(row):
            if glyph == "#":
                walls[y, x] = True
            elif glyph == "S":
                if source is not None:
                    raise MazeError(f"line {lineno}, column {x + 1}: duplicate source")
                source = Cell(x, y)
            elif glyph == "T":
                if target is not None:
                    raise MazeError(f"line {lineno}, column {x + 1}: duplicate target")
                target = Cell(x, y)
            elif glyph != ".":
                raise MazeError(f"line {lineno}, column {x + 1}: unknown glyph {glyph!r}")
    if source is None:
        raise MazeError("missing source")
    if target is None:
        raise MazeError("missing target")
    if bfs_distances(walls, source)[target.y, target.x] < 0:
        raise MazeError("unsolvable: target unreachable from source")
    return Maze(walls, source, target)
