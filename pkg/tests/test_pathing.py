import math

import numpy as np
import pytest

from pipebench.grids import CellState, GridGeometry, ObservedGrid, Pose
from pipebench.pathing import GridPath, SQRT2, astar, sample_indices, sample_path

from oracles import ucs_oracle


def _observed_from(occ_or_unknown: np.ndarray, unknown_mask=None) -> ObservedGrid:
    h, w = occ_or_unknown.shape
    obs = ObservedGrid(GridGeometry(w, h))
    obs.cells[:, :] = CellState.FREE
    obs.cells[occ_or_unknown] = CellState.OCCUPIED
    if unknown_mask is not None:
        obs.cells[unknown_mask] = CellState.UNKNOWN
    return obs


def test_trivial_path(open_observed):
    p = astar(Pose(5, 5), Pose(5, 5), open_observed)
    assert p.length == 0.0 and p.poses == (Pose(5, 5),)


def test_straight_corridor(open_observed):
    p = astar(Pose(3, 10), Pose(7, 10), open_observed)
    assert p.length == 4.0
    assert len(p.poses) == 5


def test_diagonal_is_octile(open_observed):
    p = astar(Pose(5, 5), Pose(10, 8), open_observed)
    assert p.length == pytest.approx(2 + 3 * SQRT2)


def test_unknown_blocks():
    occ = np.zeros((10, 10), bool)
    unk = np.zeros((10, 10), bool)
    unk[:, 5] = True  # unknown column wall
    obs = _observed_from(occ, unk)
    assert astar(Pose(2, 2), Pose(8, 2), obs) is None


def test_start_must_be_free():
    occ = np.zeros((6, 6), bool)
    occ[2, 2] = True
    obs = _observed_from(occ)
    with pytest.raises(ValueError):
        astar(Pose(2, 2), Pose(4, 4), obs)


def test_no_corner_cutting():
    occ = np.zeros((6, 6), bool)
    occ[1, 2] = True  # walls meeting at a corner between (1,1) and (2,2)
    occ[2, 1] = True
    obs = _observed_from(occ)
    p = astar(Pose(1, 1), Pose(2, 2), obs)
    assert p is not None
    assert p.length > SQRT2 + 1e-9  # must go around, not squeeze through


def test_costs_match_ucs_oracle():
    rng = np.random.default_rng(13)
    for trial in range(40):
        size = int(rng.integers(8, 21))
        occ = rng.random((size, size)) < 0.25
        obs = _observed_from(occ)
        free = np.argwhere(obs.free)
        if len(free) < 2:
            continue
        a = free[int(rng.integers(len(free)))]
        b = free[int(rng.integers(len(free)))]
        start, goal = Pose(int(a[1]), int(a[0])), Pose(int(b[1]), int(b[0]))
        got = astar(start, goal, obs)
        expect = ucs_oracle(obs.free, (start.x, start.y), (goal.x, goal.y))
        if expect is None:
            assert got is None
        else:
            nc, nd = expect
            assert got is not None
            assert got.length == nc + nd * SQRT2  # exact float equality


def test_symmetry(open_observed):
    a, b = Pose(3, 4), Pose(20, 17)
    assert astar(a, b, open_observed).length == astar(b, a, open_observed).length


def test_determinism(open_observed):
    p1 = astar(Pose(3, 3), Pose(25, 20), open_observed)
    p2 = astar(Pose(3, 3), Pose(25, 20), open_observed)
    assert p1.poses == p2.poses


def test_gridpath_validation():
    with pytest.raises(ValueError):
        GridPath((Pose(0, 0), Pose(2, 0)), 2.0)  # gap
    with pytest.raises(ValueError):
        GridPath((Pose(0, 0), Pose(1, 0)), 5.0)  # wrong length
    GridPath((Pose(0, 0), Pose(1, 1)), SQRT2)


def test_sample_indices_rules():
    assert sample_indices(10, 4) == [0, 4, 8, 9]
    assert sample_indices(1, 3) == [0]
    assert sample_indices(5, 1) == [0, 1, 2, 3, 4]
    assert sample_indices(9, 4) == [0, 4, 8]
    with pytest.raises(ValueError):
        sample_indices(0, 1)
    with pytest.raises(ValueError):
        sample_indices(5, 0)


def test_sample_path(open_observed):
    p = astar(Pose(3, 10), Pose(12, 10), open_observed)
    pts = sample_path(p, 4)
    assert pts[0] == Pose(3, 10) and pts[-1] == Pose(12, 10)
    assert len(pts) == 4
