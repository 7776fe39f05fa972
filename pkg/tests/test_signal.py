from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sarmaze.maze import Cell, MazeError, generate_maze
from sarmaze.signal import (
    PAPER_LITERAL,
    PropagationParams,
    beacon_field,
    effective_distance,
    line_of_sight,
    path_loss,
    supercover,
    wall_count,
)
from conftest import maze_from_rows, open_room

W = 4.4349


def touches(a: Cell, b: Cell, cell: Cell) -> bool:
    """Exact test: does the closed segment between centres meet the closed cell square?"""
    x0, y0 = Fraction(a[0]) + Fraction(1, 2), Fraction(a[1]) + Fraction(1, 2)
    x1, y1 = Fraction(b[0]) + Fraction(1, 2), Fraction(b[1]) + Fraction(1, 2)
    lo, hi = Fraction(0), Fraction(1)
    for p0, dp, cmin in ((x0, x1 - x0, cell[0]), (y0, y1 - y0, cell[1])):
        cmax = cmin + 1
        if dp == 0:
            if not cmin <= p0 <= cmax:
                return False
            continue
        t0, t1 = (cmin - p0) / dp, (cmax - p0) / dp
        if t0 > t1:
            t0, t1 = t1, t0
        lo, hi = max(lo, t0), min(hi, t1)
        if lo > hi:
            return False
    return True


def oracle_cover(a: Cell, b: Cell) -> set[Cell]:
    xs = range(min(a[0], b[0]) - 1, max(a[0], b[0]) + 2)
    ys = range(min(a[1], b[1]) - 1, max(a[1], b[1]) + 2)
    return {Cell(x, y) for x in xs for y in ys if touches(a, b, Cell(x, y))}


coords = st.tuples(st.integers(-6, 6), st.integers(-6, 6))


@settings(max_examples=400, deadline=None)
@given(coords, coords)
def test_supercover_matches_geometry(a, b):
    cells = list(supercover(Cell(*a), Cell(*b)))
    assert len(cells) == len(set(cells))
    assert set(cells) == oracle_cover(a, b)


def test_supercover_diagonal_includes_corner_cells():
    assert set(supercover(Cell(0, 0), Cell(1, 1))) == {(0, 0), (1, 0), (0, 1), (1, 1)}


def test_wall_count_examples(room5):
    m = maze_from_rows("S#.", "..T")
    assert wall_count(m, Cell(0, 0), Cell(2, 0)) == 1
    assert wall_count(m, Cell(0, 0), Cell(0, 0)) == 0
    assert wall_count(room5, Cell(0, 0), Cell(4, 4)) == 0


def test_wall_count_corner_grazing():
    m = maze_from_rows("S.#", ".#.", "..T")
    # the diagonal passes exactly through the shared corner of two walls
    assert wall_count(m, Cell(1, 0), Cell(2, 1)) == 2
    assert not line_of_sight(m, Cell(1, 0), Cell(2, 1))


def test_wall_count_rejects_wall_endpoint():
    m = maze_from_rows("S#T", "...")
    with pytest.raises(MazeError):
        wall_count(m, Cell(0, 0), Cell(1, 0))


def test_wall_count_symmetric():
    m = generate_maze(15, 15, seed=5)
    free = m.free_cells()
    rng = np.random.default_rng(0)
    for _ in range(1000):
        a, b = (free[i] for i in rng.integers(len(free), size=2))
        assert wall_count(m, a, b) == wall_count(m, b, a)


def test_line_of_sight():
    m = maze_from_rows("S#.", "..T")
    assert line_of_sight(m, Cell(0, 0), Cell(0, 1))
    assert not line_of_sight(m, Cell(0, 0), Cell(2, 0))
    for cell in m.free_cells():
        assert line_of_sight(m, cell, cell)


@pytest.mark.parametrize(
    "d,c,expected",
    [
        (1.0, 0, 20 * math.log10(2400) - 28),
        (10.0, 0, 20 * math.log10(2400)),
        (1.0, 1, 20 * math.log10(2400) - 28 + W),
    ],
)
def test_path_loss_hand_values(d, c, expected):
    assert path_loss(d, c) == pytest.approx(expected, abs=1e-12)


def test_path_loss_frozen_values():
    assert path_loss(1, 0) == pytest.approx(39.6042, abs=1e-4)
    assert path_loss(10, 0) == pytest.approx(67.6042, abs=1e-4)
    assert path_loss(1, 1) == pytest.approx(44.0391, abs=1e-4)


@pytest.mark.parametrize("d", [0.0, -1.0])
def test_path_loss_domain(d):
    with pytest.raises(ValueError):
        path_loss(d, 0)


@settings(max_examples=200)
@given(st.floats(0.5, 100), st.floats(0.5, 100), st.integers(0, 5))
def test_path_loss_monotone(d1, d2, c):
    if d1 < d2:
        assert path_loss(d1, c) < path_loss(d2, c)
    assert path_loss(d1, c) < path_loss(d1, c + 1)


def test_effective_distance_examples():
    assert effective_distance(path_loss(7.5, 0)) == pytest.approx(7.5, abs=1e-9)
    assert effective_distance(path_loss(1, 1)) == pytest.approx(10 ** (W / 28), abs=1e-12)
    assert effective_distance(path_loss(1, 1)) == pytest.approx(1.4403, abs=1e-3)
    assert effective_distance(67.6042, mode=PAPER_LITERAL) == pytest.approx(25.119, abs=1e-2)


def test_effective_distance_unknown_mode():
    with pytest.raises(ValueError):
        effective_distance(50.0, mode="other")


@settings(max_examples=300)
@given(st.floats(0.5, 100))
def test_round_trip(d):
    assert abs(effective_distance(path_loss(d, 0)) - d) < 1e-9


@pytest.mark.parametrize("c", [0, 1, 2, 3])
@pytest.mark.parametrize("d", [0.5, 1.0, 3.3, 42.0])
def test_wall_stretch(c, d):
    assert effective_distance(path_loss(d, c)) / d == pytest.approx(10 ** (W * c / 28), rel=1e-12)


def test_params_validation():
    with pytest.raises(ValueError):
        PropagationParams(frequency_mhz=0)
    with pytest.raises(ValueError):
        PropagationParams(wall_attenuation_db=-1)
    with pytest.raises(ValueError):
        PropagationParams(cell_size_m=0)


def test_beacon_field_open_room():
    room = open_room(7, 7)
    beacon = Cell(3, 3)
    field = beacon_field(room, beacon)
    dist = {c: math.hypot(c.x - 3, c.y - 3) for c in room.free_cells()}
    for a in room.free_cells():
        for b in room.free_cells():
            if dist[a] < dist[b]:
                assert field.values[a.y, a.x] < field.values[b.y, b.x]
    assert field.values[3, 3] == np.nanmin(field.values)
    assert field.values[3, 3] == pytest.approx(path_loss(0.5, 0))


def test_beacon_field_wall_adds_w():
    m = maze_from_rows(
        "S....",
        "..#..",
        "....T",
    )
    field = beacon_field(m, Cell(2, 2))
    # (2, 0) is behind the wall at (2, 1); (0, 2) is equally far with a clear view
    assert field.values[0, 2] - field.values[2, 0] == pytest.approx(W, abs=1e-12)
    assert np.isnan(field.values[1, 2])


def test_beacon_field_minimum_at_beacon():
    m = generate_maze(15, 15, seed=2)
    field = beacon_field(m, m.target)
    assert field.values[m.target.y, m.target.x] == np.nanmin(field.values)
    assert np.array_equal(np.isnan(field.values), m.walls)


def test_beacon_on_wall_rejected():
    m = maze_from_rows("S#T", "...")
    with pytest.raises(MazeError):
        beacon_field(m, Cell(1, 0))


def test_field_csv():
    m = maze_from_rows("S#T", "...")
    rows = beacon_field(m, Cell(0, 0)).to_csv().splitlines()
    assert len(rows) == 2
    cells = rows[0].split(",")
    assert cells[1] == "" and float(cells[0]) == pytest.approx(path_loss(0.5, 0), rel=1e-5)
