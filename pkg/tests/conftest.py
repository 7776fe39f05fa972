from __future__ import annotations

import numpy as np
import pytest

from sarmaze.maze import Maze, load_maze


def maze_from_rows(*rows: str) -> Maze:
    return load_maze(f"{len(rows[0])} {len(rows)}\n" + "\n".join(rows) + "\n")


def open_room(width: int, height: int, source=(0, 0), target=None) -> Maze:
    target = target or (width - 1, height - 1)
    return Maze(np.zeros((height, width), dtype=bool), source, target)


@pytest.fixture
def room5() -> Maze:
    return open_room(5, 5)
