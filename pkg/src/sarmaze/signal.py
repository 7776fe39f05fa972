"""Indoor radio propagation over a block maze.

Path loss follows the ITU indoor model with an extra per-wall term::

    PL = 20 log10(f) + 28 log10(d) - 28 + w * c

with f in MHz, d in meters and c the number of wall cells crossed.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .maze import Cell, Maze, MazeError

CONSISTENT = "consistent"
PAPER_LITERAL = "paper-literal"
INVERSION_MODES = (CONSISTENT, PAPER_LITERAL)


@dataclass(frozen=True)
class PropagationParams:
    frequency_mhz: float = 2400.0
    wall_attenuation_db: float = 4.4349
    cell_size_m: float = 1.0

    def __post_init__(self) -> None:
        if not self.frequency_mhz > 0:
            raise ValueError("frequency_mhz must be positive")
        if not self.wall_attenuation_db >= 0:
            raise ValueError("wall_attenuation_db must be non-negative")
        if not self.cell_size_m > 0:
            raise ValueError("cell_size_m must be positive")


DEFAULT_PARAMS = PropagationParams()


@dataclass(frozen=True, eq=False)
class PowerField:
    """Path loss in dB per cell; NaN on wall cells."""

    values: np.ndarray
    beacon: Cell

    def to_csv(self) -> str:
        buf = io.StringIO()
        for row in self.values:
            buf.write(",".join("" if math.isnan(v) else f"{v:.6g}" for v in row))
            buf.write("\n")
        return buf.getvalue()


def supercover(a: Cell, b: Cell) -> Iterator[Cell]:
    """Every cell touched by the segment joining the centres of ``a`` and ``b``.

    Integer supercover walk: when the segment passes exactly through a grid
    corner both side cells are emitted, so a diagonal link cannot slip
    between two wall cells that only meet at a corner. Endpoints included.
    """
    x, y = a
    x1, y1 = b
    dx, dy = x1 - x, y1 - y
    xstep = 1 if dx >= 0 else -1
    ystep = 1 if dy >= 0 else -1
    dx, dy = abs(dx), abs(dy)
    ddx, ddy = 2 * dx, 2 * dy
    yield Cell(x, y)
    if ddx >= ddy:
        error = prev = dx
        for _ in range(dx):
            x += xstep
            error += ddy
            if error > ddx:
                y += ystep
                error -= ddx
                if error + prev < ddx:
                    yield Cell(x, y - ystep)
                elif error + prev > ddx:
                    yield Cell(x - xstep, y)
                else:
                    yield Cell(x, y - ystep)
                    yield Cell(x - xstep, y)
            yield Cell(x, y)
            prev = error
    else:
        error = prev = dy
        for _ in range(dy):
            y += ystep
            error += ddx
            if error > ddy:
                x += xstep
                error -= ddy
                if error + prev < ddy:
                    yield Cell(x - xstep, y)
                elif error + prev > ddy:
                    yield Cell(x, y - ystep)
                else:
                    yield Cell(x - xstep, y)
                    yield Cell(x, y - ystep)
            yield Cell(x, y)
            prev = error


def _check_free(maze: Maze, *cells: Cell) -> None:
    for cell in cells:
        if not maze.is_free(cell):
            raise MazeError(f"cell {tuple(cell)} is a wall or out of bounds")


def wall_count(maze: Maze, a: Cell, b: Cell) -> int:
    """Wall cells crossed by the straight link between two free cells."""
    _check_free(maze, a, b)
    walls = maze.walls
    return sum(1 for x, y in supercover(a, b) if walls[y, x])


def line_of_sight(maze: Maze, a: Cell, b: Cell) -> bool:
    return wall_count(maze, a, b) == 0


def path_loss(distance_m: float, walls: int, params: PropagationParams = DEFAULT_PARAMS) -> float:
    if not distance_m > 0:
        raise ValueError(f"path loss undefined at distance {distance_m} m")
    if walls < 0:
        raise ValueError("wall count must be non-negative")
    return (
        20.0 * math.log10(params.frequency_mhz)
        + 28.0 * math.log10(distance_m)
        - 28.0
        + params.wall_attenuation_db * walls
    )


def effective_distance(
    pl: float, params: PropagationParams = DEFAULT_PARAMS, mode: str = CONSISTENT
) -> float:
    """Link length implied by a path loss.

    ``consistent`` inverts the 28 log10(d) term exactly. ``paper-literal``
    divides by 20 instead, which does not round-trip.
    """
    if mode == CONSISTENT:
        divisor = 28.0
    elif mode == PAPER_LITERAL:
        divisor = 20.0
    else:
        raise ValueError(f"unknown inversion mode {mode!r}")
    return 10.0 ** ((pl + 28.0 - 20.0 * math.log10(params.frequency_mhz)) / divisor)


def euclid(u: Cell, v: Cell, cell_size_m: float = 1.0) -> float:
    return math.hypot(u[0] - v[0], u[1] - v[1]) * cell_size_m


def beacon_field(maze: Maze, beacon: Cell, params: PropagationParams = DEFAULT_PARAMS) -> PowerField:
    """Path loss from ``beacon`` to every free cell.

    The beacon's own cell is evaluated at half a cell so the log stays finite.
    """
    _check_free(maze, beacon)
    beacon = Cell(*beacon)
    values = np.full(maze.walls.shape, np.nan)
    for cell in maze.free_cells():
        d = max(0.5 * params.cell_size_m, euclid(cell, beacon, params.cell_size_m))
        values[cell.y, cell.x] = path_loss(d, wall_count(maze, cell, beacon), params)
    values.setflags(write=False)
    return PowerField(values, beacon)
