import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pipebench.grids import GridGeometry, GroundTruthGrid, ObservedGrid, PredictedGrid
from pipebench.grids import CellState


@pytest.fixture
def empty_world():
    """41x41 world with only the forced border walls."""
    geom = GridGeometry(41, 41, 10.0)
    return GroundTruthGrid(geom, np.zeros((41, 41), dtype=bool))


@pytest.fixture
def empty_predicted(empty_world):
    return PredictedGrid(empty_world.geometry, np.zeros(empty_world.geometry.shape))


@pytest.fixture
def open_observed():
    """Fully observed free 30x30 grid (walls on the border)."""
    geom = GridGeometry(30, 30, 10.0)
    obs = ObservedGrid(geom)
    obs.cells[:, :] = CellState.FREE
    obs.cells[0, :] = CellState.OCCUPIED
    obs.cells[-1, :] = CellState.OCCUPIED
    obs.cells[:, 0] = CellState.OCCUPIED
    obs.cells[:, -1] = CellState.OCCUPIED
    return obs
