"""Visibility geometry: raycasting, fan polygons, boolean ops and rasterized masks.

Rays are cast from cell centers at ``samples`` evenly spaced angles and
traverse the grid with a supercover walk (every cell the continuous ray
touches, including corner-touched side cells), so nothing leaks diagonally
through wall corners. A fan of ray endpoints becomes a polygon, polygons are
merged with standard floating-point clipping, trapped regions become hole
rings, and a single rasterization pass turns the merged shape into a cell
mask. The brute-force per-pose union (`path_visibility_mask_oracle`)
defines the reference semantics the merged computation must reproduce.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
import shapely

from .grids import GridGeometry, GroundTruthGrid, ObservedGrid, Pose, PredictedGrid, RayTrace
from .pathing import sample_indices

# Cell centers sit on integer coordinates; a center is treated as covered when
# it is within this distance of a polygon ring (keeps stop cells in the mask).
RING_TOL = 1e-7
# Merged polygons are snapped to this grid to suppress sliver rings.
SNAP_GRID = 1e-6

_EPS_T = 1e-9  # parameter tolerance when two boundary crossings coincide (corner)


class DegeneratePolygonError(ValueError):
    """Raised when a ray fan collapses to fewer than three distinct vertices."""


@dataclass
class RayFan:
    """Ordered ray endpoints around an origin pose (one vertex per sample angle)."""

    origin: Pose
    vertices: np.ndarray  # (samples, 2) float64, cell-center coordinates


@dataclass
class VisPolygon:
    """Polygon with outer rings and hole rings; rings are closed vertex loops."""

    outers: list[np.ndarray] = field(default_factory=list)
    holes: list[np.ndarray] = field(default_factory=list)


@dataclass
class VisibilityMask:
    """Rasterized sensor-coverage cell set."""

    geometry: GridGeometry
    cells: np.ndarray  # bool (h, w)

    def count(self) -> int:
        return int(np.count_nonzero(self.cells))


def euclid(a: Pose, b: Pose) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


# --------------------------------------------------------------------------
# Ray templates: the supercover cell sequence of a ray is translation
# invariant, so it is computed once per (samples, range) and reused.
# --------------------------------------------------------------------------

class _RayTable:
    def __init__(self, samples: int, range_cells: float) -> None:
        self.samples = samples
        self.range_cells = float(range_cells)
        offsets = []
        for i in range(samples):
            theta = 2.0 * math.pi * i / samples
            offsets.append(_supercover_offsets(math.cos(theta), math.sin(theta), range_cells))
        lmax = max(len(o) for o in offsets)
        self.dx = np.zeros((samples, lmax), dtype=np.int32)
        self.dy = np.zeros((samples, lmax), dtype=np.int32)
        self.valid = np.zeros((samples, lmax), dtype=bool)
        for i, cells in enumerate(offsets):
            if cells:
                arr = np.asarray(cells, dtype=np.int32)
                self.dx[i, : len(cells)] = arr[:, 0]
                self.dy[i, : len(cells)] = arr[:, 1]
                self.valid[i, : len(cells)] = True
        angles = 2.0 * math.pi * np.arange(samples) / samples
        self.full_range = np.column_stack(
            [range_cells * np.cos(angles), range_cells * np.sin(angles)]
        )


def _supercover_offsets(dx: float, dy: float, lam: float) -> list[tuple[int, int]]:
    """Cells a unit-direction ray from a cell center enters before distance lam.

    At an exact corner crossing the two side cells are emitted (in x-then-y
    order) before the diagonal cell; all three share the same entry distance.
    """
    out: list[tuple[int, int]] = []
    adx, ady = abs(dx), abs(dy)
    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    tx = 0.5 / adx if adx > _EPS_T else math.inf
    ty = 0.5 / ady if ady > _EPS_T else math.inf
    step_x = 1.0 / adx if adx > _EPS_T else math.inf
    step_y = 1.0 / ady if ady > _EPS_T else math.inf
    x = y = 0
    while True:
        if tx < ty - _EPS_T:
            if tx >= lam:
                break
            x += sx
            out.append((x, y))
            tx += step_x
        elif ty < tx - _EPS_T:
            if ty >= lam:
                break
            y += sy
            out.append((x, y))
            ty += step_y
        else:  # corner crossing
            if tx >= lam:
                break
            out.append((x + sx, y))
            out.append((x, y + sy))
            x += sx
            y += sy
            out.append((x, y))
            tx += step_x
            ty += step_y
    return out


_RAY_TABLES: dict[tuple[int, float], _RayTable] = {}


def _ray_table(samples: int, range_cells: float) -> _RayTable:
    key = (int(samples), float(range_cells))
    tbl = _RAY_TABLES.get(key)
    if tbl is None:
        tbl = _RayTable(int(samples), float(range_cells))
        _RAY_TABLES[key] = tbl
    return tbl


def _gather_indices(tbl: _RayTable, pose: Pose, geom: GridGeometry):
    xs = pose.x + tbl.dx
    ys = pose.y + tbl.dy
    inb = (xs >= 0) & (xs < geom.width) & (ys >= 0) & (ys < geom.height)
    xc = np.clip(xs, 0, geom.width - 1)
    yc = np.clip(ys, 0, geom.height - 1)
    return xc, yc, inb & tbl.valid


def _vertices_from_stops(tbl: _RayTable, pose: Pose, stop: np.ndarray, has_stop: np.ndarray) -> np.ndarray:
    """Vertex per ray: the stop-cell center, or the full-range point when nothing stopped it."""
    verts = np.empty((tbl.samples, 2), dtype=np.float64)
    rows = np.arange(tbl.samples)
    verts[:, 0] = pose.x + tbl.dx[rows, stop]
    verts[:, 1] = pose.y + tbl.dy[rows, stop]
    verts[~has_stop] = np.array([pose.x, pose.y], dtype=np.float64) + tbl.full_range[~has_stop]
    return verts


def _first_true(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    has = mask.any(axis=1)
    idx = np.argmax(mask, axis=1)
    return idx, has


class GroundScan:
    """Result of a ground-truth scan: the ray fan plus per-ray traversal data."""

    def __init__(self, fan: RayFan, traces: list[RayTrace]):
        self.fan = fan
        self.traces = traces


def raycast_ground_truth(
    pose: Pose, range_cells: float, world: GroundTruthGrid, samples: int = 360
) -> GroundScan:
    """Noise-free scan: each ray stops at the first Occupied cell or at range."""
    if samples < 8:
        raise ValueError("need at least 8 ray samples")
    if not world.geometry.contains(pose.x, pose.y):
        raise ValueError(f"pose {pose} outside grid")
    if world.occupied[pose.y, pose.x]:
        raise ValueError(f"pose {pose} is inside a wall")
    tbl = _ray_table(samples, range_cells)
    xc, yc, ok = _gather_indices(tbl, pose, world.geometry)
    occ = world.occupied[yc, xc]
    # A stop is a real obstacle or the grid edge; padding never stops a ray.
    stopper = (occ & ok) | (tbl.valid & ~ok)
    stop, has = _first_true(stopper)
    fan = RayFan(pose, _vertices_from_stops(tbl, pose, stop, has))
    traces = []
    for i in range(samples):
        n = int(stop[i]) + 1 if has[i] else int(tbl.valid[i].sum())
        cells = np.column_stack([xc[i, :n], yc[i, :n]]).astype(np.int64)
        traces.append(RayTrace(cells, bool(has[i])))
    return GroundScan(fan, traces)


def raycast_observed(
    pose: Pose, range_cells: float, observed: ObservedGrid, samples: int = 360
) -> RayFan:
    """Virtual scan on the observed map: rays pass through Unknown, stop on Occupied."""
    if samples < 8:
        raise ValueError("need at least 8 ray samples")
    if not observed.geometry.contains(pose.x, pose.y):
        raise ValueError(f"pose {pose} outside grid")
    tbl = _ray_table(samples, range_cells)
    xc, yc, ok = _gather_indices(tbl, pose, observed.geometry)
    occ = observed.occupied[yc, xc]
    stopper = (occ & ok) | (tbl.valid & ~ok)
    stop, has = _first_true(stopper)
    return RayFan(pose, _vertices_from_stops(tbl, pose, stop, has))


def raycast_probabilistic(
    pose: Pose,
    range_cells: float,
    predicted: PredictedGrid,
    epsilon: float = 0.8,
    samples: int = 360,
) -> RayFan:
    """Ray accumulates the occupancy probability of every cell it enters
    (origin excluded, each traversed cell once) and stops once the running
    sum reaches epsilon, or at range."""
    if not 0.0 < epsilon <= 1.0:
        raise ValueError("epsilon must be in (0, 1]")
    if samples < 8:
        raise ValueError("need at least 8 ray samples")
    if not predicted.geometry.contains(pose.x, pose.y):
        raise ValueError(f"pose {pose} outside grid")
    tbl = _ray_table(samples, range_cells)
    xc, yc, ok = _gather_indices(tbl, pose, predicted.geometry)
    probs = predicted.probs[yc, xc]
    probs[~ok & tbl.valid] = 1.0  # leaving the grid is a hard stop
    probs[~tbl.valid] = 0.0
    acc = np.cumsum(probs, axis=1)
    stopper = tbl.valid & (acc >= epsilon - 1e-12)
    stop, has = _first_true(stopper)
    return RayFan(pose, _vertices_from_stops(tbl, pose, stop, has))


# --------------------------------------------------------------------------
# Fan polygon construction
# --------------------------------------------------------------------------

def draw_polygon(fan: RayFan) -> VisPolygon:
    """Close the fan's vertices (in angular order) into a single outer ring."""
    verts = fan.vertices
    if len(verts) < 3:
        raise DegeneratePolygonError("fan has fewer than 3 vertices")
    keep = np.ones(len(verts), dtype=bool)
    keep[1:] = (verts[1:] != verts[:-1]).any(axis=1)
    ring = verts[keep]
    if len(ring) > 1 and (ring[0] == ring[-1]).all():
        ring = ring[:-1]
    if len(np.unique(ring, axis=0)) < 3:
        raise DegeneratePolygonError("fan has fewer than 3 distinct vertices")
    ring = np.vstack([ring, ring[:1]])
    return VisPolygon(outers=[ring], holes=[])


# --------------------------------------------------------------------------
# Rasterization: even-odd scanline over all rings, with cell centers that lie
# on a ring (within RING_TOL) always included, so stop cells are covered.
# --------------------------------------------------------------------------

def _closed(ring: np.ndarray) -> np.ndarray:
    ring = np.asarray(ring, dtype=np.float64)
    if len(ring) < 3:
        raise ValueError("ring needs at least 3 vertices")
    if not np.array_equal(ring[0], ring[-1]):
        ring = np.vstack([ring, ring[:1]])
    return ring


def _ring_area(ring: np.ndarray) -> float:
    x, y = ring[:-1, 0], ring[:-1, 1]
    xn, yn = ring[1:, 0], ring[1:, 1]
    return 0.5 * float(np.sum(x * yn - xn * y))


def rasterize_mask(poly: VisPolygon, geometry: GridGeometry) -> VisibilityMask:
    """Cells whose center is inside the polygon (even-odd over outer and hole
    rings) or on any ring. A polygon entirely off-grid yields an empty mask."""
    h, w = geometry.shape
    mask = np.zeros((h, w), dtype=bool)
    rings = [_closed(r) for r in list(poly.outers) + list(poly.holes)]
    rings = [r for r in rings if abs(_ring_area(r)) > 1e-9]  # zero-area rings cover nothing
    if not rings:
        return VisibilityMask(geometry, mask)

    pts = np.concatenate(rings, axis=0)
    bx0 = max(0, int(math.floor(pts[:, 0].min() - 1)))
    bx1 = min(w - 1, int(math.ceil(pts[:, 0].max() + 1)))
    by0 = max(0, int(math.floor(pts[:, 1].min() - 1)))
    by1 = min(h - 1, int(math.ceil(pts[:, 1].max() + 1)))
    if bx0 > bx1 or by0 > by1:
        return VisibilityMask(geometry, mask)
    bw = bx1 - bx0 + 1
    bh = by1 - by0 + 1
    diff = np.zeros((bh, bw + 1), dtype=np.int32)

    x1 = np.concatenate([r[:-1, 0] for r in rings])
    y1 = np.concatenate([r[:-1, 1] for r in rings])
    x2 = np.concatenate([r[1:, 0] for r in rings])
    y2 = np.concatenate([r[1:, 1] for r in rings])

    def _mark(rows: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> None:
        ca = np.maximum(np.ceil(lo - RING_TOL).astype(np.int64), bx0)
        cb = np.minimum(np.floor(hi + RING_TOL).astype(np.int64), bx1)
        sel = ca <= cb
        if not sel.any():
            return
        rr = rows[sel] - by0
        np.add.at(diff, (rr, ca[sel] - bx0), 1)
        np.add.at(diff, (rr, cb[sel] - bx0 + 1), -1)

    # 1) even-odd interval fill from scanline crossings (half-open rule keeps
    #    the crossing count per row even; horizontal edges contribute none).
    ylo = np.minimum(y1, y2)
    yhi = np.maximum(y1, y2)
    r0 = np.maximum(np.ceil(ylo).astype(np.int64), by0)
    r1 = np.minimum((np.ceil(yhi) - 1).astype(np.int64), by1)
    counts = np.maximum(0, r1 - r0 + 1)
    total = int(counts.sum())
    if total:
        eidx = np.repeat(np.arange(len(counts)), counts)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        rows = r0[eidx] + (np.arange(total) - np.repeat(starts, counts))
        denom = y2[eidx] - y1[eidx]
        xcross = x1[eidx] + (rows - y1[eidx]) * (x2[eidx] - x1[eidx]) / denom
        order = np.lexsort((xcross, rows))
        rows_s = rows[order]
        xs = xcross[order]
        if len(xs) % 2 or not np.array_equal(rows_s[0::2], rows_s[1::2]):
            raise AssertionError("unpaired scanline crossings (unclosed ring?)")
        _mark(rows_s[0::2], xs[0::2], xs[1::2])

    # 2) horizontal edges lying on a scan row
    hsel = (y1 == y2) & (np.abs(y1 - np.rint(y1)) <= RING_TOL)
    if hsel.any():
        rows = np.rint(y1[hsel]).astype(np.int64)
        inr = (rows >= by0) & (rows <= by1)
        if inr.any():
            lo = np.minimum(x1[hsel][inr], x2[hsel][inr])
            hi = np.maximum(x1[hsel][inr], x2[hsel][inr])
            _mark(rows[inr], lo, hi)

    # 3) ring vertices sitting exactly on a cell center (covers apex vertices)
    vx, vy = pts[:, 0], pts[:, 1]
    vsel = (np.abs(vx - np.rint(vx)) <= RING_TOL) & (np.abs(vy - np.rint(vy)) <= RING_TOL)
    if vsel.any():
        cx = np.rint(vx[vsel]).astype(np.int64)
        cy = np.rint(vy[vsel]).astype(np.int64)
        inr = (cx >= bx0) & (cx <= bx1) & (cy >= by0) & (cy <= by1)
        if inr.any():
            _mark(cy[inr], cx[inr].astype(np.float64), cx[inr].astype(np.float64))

    window = np.cumsum(diff[:, :-1], axis=1) > 0
    mask[by0 : by1 + 1, bx0 : bx1 + 1] = window
    return VisibilityMask(geometry, mask)


# --------------------------------------------------------------------------
# Polygon boolean operations (floating-point clipping with snapping)
# --------------------------------------------------------------------------

def _pip_ring(point: np.ndarray, ring: np.ndarray) -> bool:
    x, y = point
    x1, y1 = ring[:-1, 0], ring[:-1, 1]
    x2, y2 = ring[1:, 0], ring[1:, 1]
    cross = ((y1 <= y) != (y2 <= y))
    with np.errstate(divide="ignore", invalid="ignore"):
        xc = x1 + (y - y1) * (x2 - x1) / np.where(y2 == y1, np.nan, y2 - y1)
    return bool((cross & (xc > x)).sum() % 2)


def _to_shapely(poly: VisPolygon):
    """Build valid shapely polygons; holes are attached to the outer containing them."""
    outers = [_closed(r) for r in poly.outers]
    holes = [_closed(r) for r in poly.holes]
    assigned: list[list[np.ndarray]] = [[] for _ in outers]
    for hole in holes:
        for i, outer in enumerate(outers):
            if _pip_ring(hole[0], outer):
                assigned[i].append(hole)
                break
    geoms = []
    for outer, hs in zip(outers, assigned):
        g = shapely.Polygon(outer, [h for h in hs])
        if not g.is_valid:
            g = shapely.make_valid(g)
        geoms.append(g)
    return geoms


def _from_shapely(geom) -> VisPolygon:
    out = VisPolygon()
    for g in getattr(geom, "geoms", [geom]):
        if isinstance(g, shapely.Polygon):
            if g.is_empty:
                continue
            out.outers.append(np.asarray(g.exterior.coords, dtype=np.float64))
            for interior in g.interiors:
                out.holes.append(np.asarray(interior.coords, dtype=np.float64))
        elif isinstance(g, (shapely.MultiPolygon, shapely.GeometryCollection)):
            sub = _from_shapely(g)
            out.outers.extend(sub.outers)
            out.holes.extend(sub.holes)
    return out


def polygon_union(polys: Sequence[VisPolygon]) -> VisPolygon:
    """Boolean union; the result's hole rings are the regions enclosed by the
    merged coverage but covered by no input polygon."""
    if not polys:
        raise ValueError("union of zero polygons")
    geoms: list = []
    for p in polys:
        geoms.extend(_to_shapely(p))
    merged = shapely.union_all(geoms)
    merged = shapely.set_precision(merged, SNAP_GRID)
    return _from_shapely(merged)


def extract_holes(polys: Sequence[VisPolygon], union: VisPolygon) -> list[np.ndarray]:
    """Trapped regions of the merged fans.

    For a point-set union these are exactly the union's hole rings: every
    point inside an outer ring but outside the union's coverage is, by
    construction, covered by none of the inputs. (The equivalence with the
    per-polygon symmetric-difference construction is exercised in the tests.)
    """
    return [h.copy() for h in union.holes]


# --------------------------------------------------------------------------
# Point and path visibility masks
# --------------------------------------------------------------------------

MapLike = Union[ObservedGrid, PredictedGrid]


def _cast_fan(pose: Pose, range_cells: float, grid_map: MapLike, epsilon: float, samples: int) -> RayFan:
    if isinstance(grid_map, PredictedGrid):
        return raycast_probabilistic(pose, range_cells, grid_map, epsilon, samples)
    if isinstance(grid_map, ObservedGrid):
        return raycast_observed(pose, range_cells, grid_map, samples)
    raise TypeError(f"cannot raycast on {type(grid_map).__name__}")


def point_visibility_mask(
    pose: Pose,
    range_cells: float,
    grid_map: MapLike,
    epsilon: float = 0.8,
    samples: int = 360,
) -> VisibilityMask:
    """Expected sensor coverage at a single pose."""
    fan = _cast_fan(pose, range_cells, grid_map, epsilon, samples)
    return rasterize_mask(draw_polygon(fan), grid_map.geometry)


def path_visibility_mask(
    poses: Sequence[Pose],
    grid_map: MapLike,
    range_cells: float,
    epsilon: float = 0.8,
    samples: int = 360,
    stride: int = 1,
) -> VisibilityMask:
    """Merged coverage along a path: per-sample fan polygons are unioned, the
    trapped regions become holes, and a single rasterization produces the mask."""
    if len(poses) == 0:
        raise ValueError("empty path")
    idxs = sample_indices(len(poses), stride)
    polys = [
        draw_polygon(_cast_fan(poses[i], range_cells, grid_map, epsilon, samples)) for i in idxs
    ]
    union = polygon_union(polys)
    holes = extract_holes(polys, union)
    merged = VisPolygon(outers=union.outers, holes=holes)
    return rasterize_mask(merged, grid_map.geometry)


def path_visibility_mask_oracle(
    poses: Sequence[Pose],
    grid_map: MapLike,
    range_cells: float,
    epsilon: float = 0.8,
    samples: int = 360,
    stride: int = 1,
) -> VisibilityMask:
    """Reference semantics: the OR of the per-sample point masks."""
    if len(poses) == 0:
        raise ValueError("empty path")
    idxs = sample_indices(len(poses), stride)
    geom = grid_map.geometry
    cells = np.zeros(geom.shape, dtype=bool)
    for i in idxs:
        cells |= point_visibility_mask(poses[i], range_cells, grid_map, epsilon, samples).cells
    return VisibilityMask(geom, cells)


# --------------------------------------------------------------------------
# Ring rasters (debug dumps and equivalence checking)
# --------------------------------------------------------------------------

def segment_cells(p0: np.ndarray, p1: np.ndarray) -> list[tuple[int, int]]:
    """Supercover cells touched by the segment p0-p1 (float endpoints)."""
    x0, y0 = float(p0[0]), float(p0[1])
    x1, y1 = float(p1[0]), float(p1[1])
    dx, dy = x1 - x0, y1 - y0
    length = math.hypot(dx, dy)
    cx = int(math.floor(x0 + 0.5))
    cy = int(math.floor(y0 + 0.5))
    cells = [(cx, cy)]
    if length <= _EPS_T:
        return cells
    ux, uy = dx / length, dy / length
    adx, ady = abs(ux), abs(uy)
    sx = 1 if ux > 0 else -1
    sy = 1 if uy > 0 else -1
    tx = ((cx + 0.5 * sx) - x0) / ux if adx > _EPS_T else math.inf
    ty = ((cy + 0.5 * sy) - y0) / uy if ady > _EPS_T else math.inf
    step_x = 1.0 / adx if adx > _EPS_T else math.inf
    step_y = 1.0 / ady if ady > _EPS_T else math.inf
    while True:
        if tx < ty - _EPS_T:
            if tx > length + _EPS_T:
                break
            cx += sx
            cells.append((cx, cy))
            tx += step_x
        elif ty < tx - _EPS_T:
            if ty > length + _EPS_T:
                break
            cy += sy
            cells.append((cx, cy))
            ty += step_y
        else:
            if tx > length + _EPS_T:
                break
            cells.append((cx + sx, cy))
            cells.append((cx, cy + sy))
            cx += sx
            cy += sy
            cells.append((cx, cy))
            tx += step_x
            ty += step_y
    return cells


def ring_raster(poly: VisPolygon, geometry: GridGeometry) -> np.ndarray:
    """Boolean raster of every ring segment (outer and hole rings)."""
    h, w = geometry.shape
    out = np.zeros((h, w), dtype=bool)
    for ring in list(poly.outers) + list(poly.holes):
        ring = _closed(ring)
        for a, b in zip(ring[:-1], ring[1:]):
            for x, y in segment_cells(a, b):
                if 0 <= x < w and 0 <= y < h:
                    out[y, x] = True
    return out
