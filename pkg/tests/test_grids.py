import numpy as np
import pytest

from pipebench.grids import (
    CellState,
    GridGeometry,
    GroundTruthGrid,
    ObservedGrid,
    Pose,
    PredictedGrid,
    RayTrace,
    UncertaintyGrid,
    known_fraction,
    update_from_scan,
)
from pipebench.geometry import raycast_ground_truth
from pipebench import pgmio


def test_geometry_invariants():
    with pytest.raises(ValueError):
        GridGeometry(0, 5)
    with pytest.raises(ValueError):
        GridGeometry(5, 5, resolution=0)
    g = GridGeometry(7, 3)
    assert g.shape == (3, 7)
    assert g.contains(6, 2) and not g.contains(7, 0)


def test_ground_truth_border_forced():
    world = GroundTruthGrid(GridGeometry(5, 5), np.zeros((5, 5), bool))
    assert world.occupied[0].all() and world.occupied[-1].all()
    assert world.occupied[:, 0].all() and world.occupied[:, -1].all()
    assert not world.occupied[2, 2]


def test_scan_marks_free_disc(empty_world):
    obs = ObservedGrid(empty_world.geometry)
    scan = raycast_ground_truth(Pose(20, 20), 4.0, empty_world, 90)
    update_from_scan(obs, Pose(20, 20), scan.traces)
    assert (obs.cells == CellState.OCCUPIED).sum() == 0
    assert obs.cells[20, 20] == CellState.FREE
    assert obs.cells[20, 24] == CellState.FREE  # range-4 cardinal reach
    assert obs.cells[20, 25] == CellState.UNKNOWN


def test_scan_stops_on_wall(empty_world):
    empty_world.occupied[20, 23] = True  # 3 east of pose
    obs = ObservedGrid(empty_world.geometry)
    scan = raycast_ground_truth(Pose(20, 20), 6.0, empty_world, 360)
    update_from_scan(obs, Pose(20, 20), scan.traces)
    assert obs.cells[20, 21] == CellState.FREE
    assert obs.cells[20, 22] == CellState.FREE
    assert obs.cells[20, 23] == CellState.OCCUPIED
    assert obs.cells[20, 24] == CellState.UNKNOWN  # shadowed


def test_rescan_idempotent(empty_world):
    obs = ObservedGrid(empty_world.geometry)
    scan = raycast_ground_truth(Pose(20, 20), 5.0, empty_world, 120)
    update_from_scan(obs, Pose(20, 20), scan.traces)
    before = obs.cells.copy()
    update_from_scan(obs, Pose(20, 20), scan.traces)
    assert np.array_equal(before, obs.cells)


def test_scan_rejects_out_of_bounds(empty_world):
    obs = ObservedGrid(empty_world.geometry)
    bad = [RayTrace(np.array([[100, 100]]), False)]
    with pytest.raises(ValueError):
        update_from_scan(obs, Pose(20, 20), bad)


def test_monotone_knowledge(empty_world):
    empty_world.occupied[15:18, 22] = True
    obs = ObservedGrid(empty_world.geometry)
    known_before = 0
    for pose in (Pose(20, 20), Pose(10, 10), Pose(30, 28)):
        scan = raycast_ground_truth(pose, 6.0, empty_world, 90)
        update_from_scan(obs, pose, scan.traces)
        known_now = int(obs.known.sum())
        assert known_now >= known_before
        known_before = known_now
    # fidelity: every known cell matches the world
    known = obs.known
    occ = obs.cells == CellState.OCCUPIED
    assert np.array_equal(occ[known], empty_world.occupied[known])


def test_known_fraction():
    obs = ObservedGrid(GridGeometry(10, 10))
    assert known_fraction(obs) == 0.0
    obs.cells[:, :] = CellState.FREE
    assert known_fraction(obs) == 1.0
    obs2 = ObservedGrid(GridGeometry(10, 10))
    obs2.cells[:5, :5] = CellState.FREE  # 25 of 100
    assert known_fraction(obs2) == 0.25


def test_predicted_grid_bounds():
    geom = GridGeometry(4, 4)
    with pytest.raises(ValueError):
        PredictedGrid(geom, np.full((4, 4), 1.5))
    with pytest.raises(ValueError):
        UncertaintyGrid(geom, np.full((4, 4), -0.5))


def test_observed_pgm_roundtrip():
    geom = GridGeometry(6, 5)
    obs = ObservedGrid(geom)
    obs.cells[1, 2] = CellState.FREE
    obs.cells[3, 4] = CellState.OCCUPIED
    data = pgmio.observed_to_pgm(obs)
    back = pgmio.observed_from_pgm(data)
    assert np.array_equal(back.cells, obs.cells)


def test_predicted_pgm_roundtrip():
    geom = GridGeometry(8, 3)
    rng = np.random.default_rng(0)
    grid = PredictedGrid(geom, rng.random((3, 8)))
    back = pgmio.predicted_from_pgm(pgmio.predicted_to_pgm(grid))
    assert np.abs(back.probs - grid.probs).max() <= 0.5 / 65535
