import math

import numpy as np
import pytest

from pipebench.geometry import (
    DegeneratePolygonError,
    RayFan,
    VisPolygon,
    draw_polygon,
    extract_holes,
    path_visibility_mask,
    path_visibility_mask_oracle,
    point_visibility_mask,
    polygon_union,
    rasterize_mask,
    raycast_ground_truth,
    raycast_observed,
    raycast_probabilistic,
    rasterize_mask,
    ring_raster,
)
from pipebench.grids import CellState, GridGeometry, GroundTruthGrid, ObservedGrid, Pose, PredictedGrid

from oracles import pip_mask_oracle, ray_stop_distance, ray_touched_cells


# ---------------------------------------------------------------- raycasting

def test_ground_truth_full_range(empty_world):
    scan = raycast_ground_truth(Pose(20, 20), 10.0, empty_world, 48)
    d = np.hypot(scan.fan.vertices[:, 0] - 20, scan.fan.vertices[:, 1] - 20)
    assert np.allclose(d, 10.0)


def test_ground_truth_wall_stop(empty_world):
    empty_world.occupied[20, 23] = True
    scan = raycast_ground_truth(Pose(20, 20), 10.0, empty_world, 8)
    assert tuple(scan.fan.vertices[0]) == (23.0, 20.0)  # ray 0 is due east


def test_ground_truth_pose_in_wall(empty_world):
    empty_world.occupied[5, 5] = True
    with pytest.raises(ValueError):
        raycast_ground_truth(Pose(5, 5), 5.0, empty_world, 36)


def test_ground_truth_matches_march_oracle():
    rng = np.random.default_rng(7)
    occ = rng.random((32, 32)) < 0.2
    world = GroundTruthGrid(GridGeometry(32, 32), occ)
    free = np.argwhere(~world.occupied)
    y0, x0 = free[len(free) // 2]
    pose = Pose(int(x0), int(y0))
    lam, samples = 9.0, 64
    scan = raycast_ground_truth(pose, lam, world, samples)
    for i in range(samples):
        theta = 2 * math.pi * i / samples
        expected = ray_stop_distance(pose.x, pose.y, theta, lam, world.occupied)
        got = math.hypot(scan.fan.vertices[i, 0] - pose.x, scan.fan.vertices[i, 1] - pose.y)
        assert got == pytest.approx(expected, abs=1e-9), f"ray {i}"


def test_supercover_corner_blocking(empty_world):
    # Both diagonal side cells occupied: the 45-degree ray must not leak through.
    empty_world.occupied[20, 21] = True
    empty_world.occupied[21, 20] = True
    scan = raycast_ground_truth(Pose(20, 20), 6.0, empty_world, 8)
    v = scan.fan.vertices[1]  # 45 degrees
    assert math.hypot(v[0] - 20, v[1] - 20) <= math.sqrt(2.0) + 1e-9


def test_probabilistic_zero_map(empty_predicted):
    fan = raycast_probabilistic(Pose(20, 20), 10.0, empty_predicted, 0.8, 36)
    d = np.hypot(fan.vertices[:, 0] - 20, fan.vertices[:, 1] - 20)
    assert np.allclose(d, 10.0)


def test_probabilistic_unit_wall(empty_predicted):
    empty_predicted.probs[20, 23] = 1.0
    fan = raycast_probabilistic(Pose(20, 20), 10.0, empty_predicted, 0.8, 8)
    assert tuple(fan.vertices[0]) == (23.0, 20.0)


def test_probabilistic_accumulation(empty_predicted):
    empty_predicted.probs[20, 21:40] = 0.3  # uniform along east ray
    fan = raycast_probabilistic(Pose(20, 20), 10.0, empty_predicted, 0.8, 8)
    assert tuple(fan.vertices[0]) == (23.0, 20.0)  # 0.9 >= 0.8 entering 3rd cell


def test_probabilistic_epsilon_validation(empty_predicted):
    with pytest.raises(ValueError):
        raycast_probabilistic(Pose(20, 20), 5.0, empty_predicted, 0.0, 36)
    with pytest.raises(ValueError):
        raycast_probabilistic(Pose(20, 20), 5.0, empty_predicted, 1.5, 36)


def test_probabilistic_monotone_in_epsilon():
    rng = np.random.default_rng(3)
    geom = GridGeometry(48, 48)
    probs = rng.random((48, 48)) * 0.6
    grid = PredictedGrid(geom, probs)
    pose = Pose(24, 24)
    f1 = raycast_probabilistic(pose, 15.0, grid, 0.3, 90)
    f2 = raycast_probabilistic(pose, 15.0, grid, 0.9, 90)
    d1 = np.hypot(f1.vertices[:, 0] - 24, f1.vertices[:, 1] - 24)
    d2 = np.hypot(f2.vertices[:, 0] - 24, f2.vertices[:, 1] - 24)
    assert (d1 <= d2 + 1e-9).all()


def test_probabilistic_degenerates_to_deterministic():
    rng = np.random.default_rng(11)
    occ = rng.random((32, 32)) < 0.25
    world = GroundTruthGrid(GridGeometry(32, 32), occ)
    binary = PredictedGrid(world.geometry, world.occupied.astype(float))
    free = np.argwhere(~world.occupied)
    y0, x0 = free[0]
    pose = Pose(int(x0), int(y0))
    for eps in (0.2, 0.8, 1.0):
        fan_p = raycast_probabilistic(pose, 8.0, binary, eps, 72)
        fan_d = raycast_ground_truth(pose, 8.0, world, 72).fan
        assert np.array_equal(fan_p.vertices, fan_d.vertices)


def test_observed_raycast_passes_unknown():
    geom = GridGeometry(21, 21)
    obs = ObservedGrid(geom)  # everything unknown
    obs.cells[10, 10] = CellState.FREE
    obs.cells[10, 14] = CellState.OCCUPIED
    fan = raycast_observed(Pose(10, 10), 8.0, obs, 8)
    assert tuple(fan.vertices[0]) == (14.0, 10.0)  # stopped by the occupied cell
    d_north = math.hypot(*(fan.vertices[6] - (10, 10)))
    assert d_north == pytest.approx(8.0)  # unknown does not stop rays


# ------------------------------------------------------------- fan polygons

def test_draw_polygon_quad():
    verts = np.array([[5.0, 0.0], [0.0, 5.0], [-5.0, 0.0], [0.0, -5.0]])
    poly = draw_polygon(RayFan(Pose(0, 0), verts))
    assert len(poly.outers) == 1 and not poly.holes
    ring = poly.outers[0]
    assert np.array_equal(ring[0], ring[-1])
    assert len(ring) == 5


def test_draw_polygon_regular_fan(empty_predicted):
    fan = raycast_probabilistic(Pose(20, 20), 10.0, empty_predicted, 0.8, 90)
    ring = draw_polygon(fan).outers[0]
    d = np.hypot(ring[:, 0] - 20, ring[:, 1] - 20)
    assert np.allclose(d, 10.0)
    assert len(ring) == 91


def test_draw_polygon_shortened_ray(empty_predicted):
    empty_predicted.probs[20, 24] = 1.0  # east ray stops at distance 4
    fan = raycast_probabilistic(Pose(20, 20), 10.0, empty_predicted, 0.8, 90)
    ring = draw_polygon(fan).outers[0]
    d = np.hypot(ring[:-1, 0] - 20, ring[:-1, 1] - 20)  # open part of the ring
    assert (np.abs(d - 4.0) < 1e-9).sum() == 1
    assert (np.abs(d - 10.0) < 1e-9).sum() == len(d) - 1


def test_draw_polygon_degenerate():
    verts = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(DegeneratePolygonError):
        draw_polygon(RayFan(Pose(0, 0), verts))


# ------------------------------------------------------------ rasterization

def test_rasterize_square_block():
    # ring through the outermost cell centers of a 5x5 block
    ring = np.array([[1.0, 1.0], [5.0, 1.0], [5.0, 5.0], [1.0, 5.0], [1.0, 1.0]])
    mask = rasterize_mask(VisPolygon([ring], []), GridGeometry(8, 8))
    assert mask.count() == 25
    ys, xs = np.nonzero(mask.cells)
    assert xs.min() == 1 and xs.max() == 5 and ys.min() == 1 and ys.max() == 5


def test_rasterize_square_with_hole():
    outer = np.array([[1.0, 1.0], [7.0, 1.0], [7.0, 7.0], [1.0, 7.0], [1.0, 1.0]])
    hole = np.array([[3.0, 3.0], [5.0, 3.0], [5.0, 5.0], [3.0, 5.0], [3.0, 3.0]])
    mask = rasterize_mask(VisPolygon([outer], [hole]), GridGeometry(10, 10))
    # 7x7 block minus the hole INTERIOR; cells on the hole ring stay covered
    assert mask.cells[4, 4] == False  # noqa: E712 - strict interior of hole
    assert mask.cells[3, 3] == True  # noqa: E712 - on the hole ring
    assert mask.count() == 49 - 1


def test_rasterize_degenerate_ring_empty():
    point_ring = np.array([[2.0, 2.0], [2.0, 2.0], [2.0, 2.0]])
    mask = rasterize_mask(VisPolygon([point_ring], []), GridGeometry(5, 5))
    assert mask.count() == 0
    thin = np.array([[1.0, 1.2], [3.0, 1.2], [1.0, 1.2]])  # zero area, off-center
    mask = rasterize_mask(VisPolygon([thin], []), GridGeometry(5, 5))
    assert mask.count() == 0


def test_rasterize_outside_grid_empty():
    ring = np.array([[50.0, 50.0], [60.0, 50.0], [55.0, 60.0], [50.0, 50.0]])
    mask = rasterize_mask(VisPolygon([ring], []), GridGeometry(10, 10))
    assert mask.count() == 0


def test_rasterize_matches_pip_oracle():
    rng = np.random.default_rng(5)
    geom = GridGeometry(30, 30)
    probs = PredictedGrid(geom, (rng.random((30, 30)) < 0.15) * 1.0)
    fan = raycast_probabilistic(Pose(15, 15), 9.0, probs, 0.8, 48)
    poly = draw_polygon(fan)
    mask = rasterize_mask(poly, geom)
    oracle = pip_mask_oracle(list(poly.outers) + list(poly.holes), geom.shape)
    assert np.array_equal(mask.cells, oracle)


# ------------------------------------------------------- boolean operations

def _square(x0, y0, x1, y1):
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]], dtype=float)


def test_union_identity():
    poly = VisPolygon([_square(1, 1, 6, 6)], [])
    out = polygon_union([poly])
    geom = GridGeometry(10, 10)
    assert np.array_equal(rasterize_mask(out, geom).cells, rasterize_mask(poly, geom).cells)


def test_union_disjoint_squares():
    a = VisPolygon([_square(1, 1, 3, 3)], [])
    b = VisPolygon([_square(6, 6, 9, 9)], [])
    out = polygon_union([a, b])
    assert len(out.outers) == 2 and not out.holes
    geom = GridGeometry(12, 12)
    expect = rasterize_mask(a, geom).cells | rasterize_mask(b, geom).cells
    assert np.array_equal(rasterize_mask(out, geom).cells, expect)


def test_union_overlapping_squares():
    a = VisPolygon([_square(1, 1, 5, 5)], [])
    b = VisPolygon([_square(3, 3, 8, 8)], [])
    out = polygon_union([a, b])
    assert len(out.outers) == 1
    geom = GridGeometry(12, 12)
    expect = rasterize_mask(a, geom).cells | rasterize_mask(b, geom).cells
    assert np.array_equal(rasterize_mask(out, geom).cells, expect)


def test_union_empty_error():
    with pytest.raises(ValueError):
        polygon_union([])


def test_extract_holes_convex_none():
    poly = VisPolygon([_square(1, 1, 7, 7)], [])
    union = polygon_union([poly])
    assert extract_holes([poly], union) == []


def test_extract_holes_frame():
    # four rectangles forming a closed frame around an uncovered center
    top = VisPolygon([_square(0, 0, 10, 2)], [])
    bottom = VisPolygon([_square(0, 8, 10, 10)], [])
    left = VisPolygon([_square(0, 0, 2, 10)], [])
    right = VisPolygon([_square(8, 0, 10, 10)], [])
    polys = [top, bottom, left, right]
    union = polygon_union(polys)
    holes = extract_holes(polys, union)
    assert len(holes) == 1
    geom = GridGeometry(12, 12)
    merged = rasterize_mask(VisPolygon(union.outers, holes), geom)
    raster_or = np.zeros(geom.shape, bool)
    for p in polys:
        raster_or |= rasterize_mask(p, geom).cells
    assert np.array_equal(merged.cells, raster_or)
    assert not merged.cells[5, 5]  # trapped center excluded


def test_extract_holes_matches_symmetric_difference_construction():
    """The hole set equals the union-of-symmetric-differences construction
    (filled union vs point-set union), checked on rasters."""
    import shapely

    top = VisPolygon([_square(0, 0, 10, 2)], [])
    bottom = VisPolygon([_square(0, 8, 10, 10)], [])
    left = VisPolygon([_square(0, 0, 2, 10)], [])
    right = VisPolygon([_square(8, 0, 10, 10)], [])
    polys = [top, bottom, left, right]
    union = polygon_union(polys)
    holes = extract_holes(polys, union)

    shapely_polys = [shapely.Polygon(p.outers[0]) for p in polys]
    filled = shapely.union_all([shapely.Polygon(g.exterior) for g in
                                [shapely.union_all(shapely_polys)]])
    sym = shapely.union_all([g.symmetric_difference(filled) for g in shapely_polys])
    trapped = sym.difference(shapely.union_all(shapely_polys))

    geom = GridGeometry(12, 12)
    hole_raster = rasterize_mask(VisPolygon(holes, []), geom).cells
    ys, xs = np.nonzero(hole_raster)
    for x, y in zip(xs, ys):
        assert trapped.distance(shapely.Point(x, y)) < 1.0


# ----------------------------------------------------------- path masks

def test_point_mask_empty_disc(empty_predicted):
    mask = point_visibility_mask(Pose(20, 20), 10.0, empty_predicted, 0.8, 360)
    assert abs(mask.count() - math.pi * 100) < 12


def test_point_mask_closed_room():
    geom = GridGeometry(15, 15)
    occ = np.zeros((15, 15), bool)
    occ[4, 4:11] = True
    occ[10, 4:11] = True
    occ[4:11, 4] = True
    occ[4:11, 10] = True
    world = GroundTruthGrid(geom, occ)
    probs = PredictedGrid(geom, world.occupied.astype(float))
    mask = point_visibility_mask(Pose(7, 7), 12.0, probs, 0.8, 360)
    # interior 5x5 plus the room walls; nothing outside
    assert mask.cells[5:10, 5:10].all()
    assert not mask.cells[2, 2] and not mask.cells[12, 12]
    oracle = pip_mask_oracle(
        [draw_polygon(raycast_probabilistic(Pose(7, 7), 12.0, probs, 0.8, 360)).outers[0]],
        geom.shape,
    )
    assert np.array_equal(mask.cells, oracle)


def test_single_pose_path_equals_point_mask(empty_predicted):
    p = Pose(20, 20)
    a = path_visibility_mask([p], empty_predicted, 8.0, 0.8, 120, 1)
    b = point_visibility_mask(p, 8.0, empty_predicted, 0.8, 120)
    assert np.array_equal(a.cells, b.cells)


def test_duplicate_pose_path_idempotent(empty_predicted):
    p = Pose(20, 20)
    a = path_visibility_mask_oracle([p, p], empty_predicted, 8.0, 0.8, 90, 1)
    b = point_visibility_mask(p, 8.0, empty_predicted, 0.8, 90)
    assert np.array_equal(a.cells, b.cells)


def test_straight_path_mask_matches_oracle():
    geom = GridGeometry(60, 30)
    probs = PredictedGrid(geom, np.zeros((30, 60)))
    poses = [Pose(10 + i, 15) for i in range(20)]
    opt = path_visibility_mask(poses, probs, 8.0, 0.8, 120, 1)
    orc = path_visibility_mask_oracle(poses, probs, 8.0, 0.8, 120, 1)
    diff = int((opt.cells ^ orc.cells).sum())
    assert diff <= 8


def test_path_mask_containment_and_range():
    rng = np.random.default_rng(9)
    geom = GridGeometry(50, 50)
    probs = PredictedGrid(geom, rng.random((50, 50)) * 0.3)
    poses = [Pose(10 + i, 10 + i // 2) for i in range(12)]
    lam = 9.0
    orc = path_visibility_mask_oracle(poses, probs, lam, 0.8, 90, 3)
    from pipebench.pathing import sample_indices

    for i in sample_indices(len(poses), 3):
        pm = point_visibility_mask(poses[i], lam, probs, 0.8, 90)
        assert (pm.cells & ~orc.cells).sum() == 0  # containment (oracle exact)
    ys, xs = np.nonzero(orc.cells)
    dmin = np.full(len(xs), np.inf)
    for i in sample_indices(len(poses), 3):
        d = np.hypot(xs - poses[i].x, ys - poses[i].y)
        dmin = np.minimum(dmin, d)
    assert (dmin <= lam + 1.0).all()


def _pillar_loop_setup():
    geom = GridGeometry(40, 40)
    occ = np.zeros((40, 40), bool)
    occ[18:23, 18:23] = True  # 5x5 pillar
    world = GroundTruthGrid(geom, occ)
    probs = PredictedGrid(geom, world.occupied.astype(float))
    ring = []
    for x in range(12, 29):
        ring.append(Pose(x, 12))
    for y in range(13, 29):
        ring.append(Pose(28, y))
    for x in range(27, 11, -1):
        ring.append(Pose(x, 28))
    for y in range(27, 12, -1):
        ring.append(Pose(12, y))
    return probs, ring


def test_loop_around_pillar_excludes_trapped_region():
    probs, ring = _pillar_loop_setup()
    lam, rays = 10.0, 180
    opt = path_visibility_mask(ring, probs, lam, 0.8, rays, 2)
    orc = path_visibility_mask_oracle(ring, probs, lam, 0.8, rays, 2)
    # trapped pillar interior is excluded by both routes
    assert not opt.cells[19:22, 19:22].any()
    assert not orc.cells[19:22, 19:22].any()
    diff = int((opt.cells ^ orc.cells).sum())
    assert diff <= max(8, int(0.01 * orc.count()) + 1)


def test_hole_extraction_mutation_check():
    """Dropping the hole rings must wrongly flood the trapped region."""
    from pipebench.geometry import _cast_fan
    from pipebench.pathing import sample_indices

    probs, ring = _pillar_loop_setup()
    lam, rays, stride = 10.0, 180, 2
    idxs = sample_indices(len(ring), stride)
    polys = [draw_polygon(_cast_fan(ring[i], lam, probs, 0.8, rays)) for i in idxs]
    union = polygon_union(polys)
    holes = extract_holes(polys, union)
    assert holes, "loop around a pillar must produce a trapped region"
    with_holes = rasterize_mask(VisPolygon(union.outers, holes), probs.geometry)
    without = rasterize_mask(VisPolygon(union.outers, []), probs.geometry)
    assert not with_holes.cells[20, 20]
    assert without.cells[20, 20]  # the broken build is detectably wrong


def test_ring_raster_covers_ring_cells(empty_predicted):
    fan = raycast_probabilistic(Pose(20, 20), 6.0, empty_predicted, 0.8, 60)
    poly = draw_polygon(fan)
    rr = ring_raster(poly, empty_predicted.geometry)
    assert rr.any()
    ring = poly.outers[0]
    for vx, vy in ring[:-1]:
        assert rr[int(round(vy)), int(round(vx))]
