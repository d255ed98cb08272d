"""World ingestion: graymaps, line-segment floorplans, and a seeded generator.

Floorplans are wall/door segment lists in meters. Walls rasterize as
supercover cells (gap-free by construction, one cell thick minimum); doors
are carved back to Free afterwards with a half-open rule along the segment,
so a 1 m door at 10 cells/m opens exactly 10 cells.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .geometry import segment_cells
from .grids import GridGeometry, GroundTruthGrid, Pose
from .pgmio import read_pgm

log = logging.getLogger(__name__)

CLASS_EXTENTS_M = {
    "small": (65.0, 85.0),
    "medium": (60.0, 205.0),
    "large": (88.0, 265.0),
}

_MIN_ROOM_M = 4.0


@dataclass
class FloorplanSpec:
    resolution: float  # cells per meter
    extent: tuple[float, float]  # (width, height) in meters
    walls: list[tuple[float, float, float, float]] = field(default_factory=list)
    doors: list[tuple[float, float, float, float]] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "resolution": self.resolution,
                "extent": list(self.extent),
                "walls": [list(w) for w in self.walls],
                "doors": [list(d) for d in self.doors],
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "FloorplanSpec":
        data = json.loads(text)
        return cls(
            resolution=float(data["resolution"]),
            extent=(float(data["extent"][0]), float(data["extent"][1])),
            walls=[tuple(map(float, w)) for w in data.get("walls", [])],
            doors=[tuple(map(float, d)) for d in data.get("doors", [])],
        )


def load_graymap(data: bytes, resolution: float = 10.0) -> GroundTruthGrid:
    """8-bit PGM with values {0, 255}: 0 -> Occupied, 255 -> Free."""
    arr, maxval = read_pgm(data)
    if maxval != 255:
        raise ValueError("ground-truth graymap must be 8-bit")
    legal = (arr == 0) | (arr == 255)
    if not legal.all():
        bad = sorted(int(v) for v in np.unique(arr[~legal]))
        raise ValueError(f"illegal graymap values for a ground-truth grid: {bad}")
    geom = GridGeometry(arr.shape[1], arr.shape[0], resolution)
    return GroundTruthGrid(geom, arr == 0)


def _cell_of(x: float, y: float) -> tuple[int, int]:
    return int(math.floor(x + 0.5)), int(math.floor(y + 0.5))


def rasterize_floorplan(spec: FloorplanSpec) -> GroundTruthGrid:
    """Walls first (supercover, Occupied), then doors carved Free, border closed."""
    res = spec.resolution
    w = max(3, int(round(spec.extent[0] * res)))
    h = max(3, int(round(spec.extent[1] * res)))
    occ = np.zeros((h, w), dtype=bool)

    def _clip_mark(cells, value):
        for cx, cy in cells:
            if 0 <= cx < w and 0 <= cy < h:
                occ[cy, cx] = value

    for x1, y1, x2, y2 in spec.walls:
        p0 = np.array([x1 * res, y1 * res])
        p1 = np.array([x2 * res, y2 * res])
        if np.hypot(*(p1 - p0)) < 1e-9:
            log.warning("skipping zero-length wall segment at (%.3f, %.3f)", x1, y1)
            continue
        _clip_mark(segment_cells(p0, p1), True)
    for x1, y1, x2, y2 in spec.doors:
        p0 = np.array([x1 * res, y1 * res])
        p1 = np.array([x2 * res, y2 * res])
        if np.hypot(*(p1 - p0)) < 1e-9:
            log.warning("skipping zero-length door segment at (%.3f, %.3f)", x1, y1)
            continue
        cells = segment_cells(p0, p1)
        end_cell = _cell_of(p1[0], p1[1])
        _clip_mark([c for c in cells if c != end_cell], False)

    geom = GridGeometry(w, h, res)
    return GroundTruthGrid(geom, occ)  # constructor closes the border


def fully_connected(world: GroundTruthGrid) -> bool:
    """Every Free cell reachable from every other (4-connected flood fill)."""
    free = ~world.occupied
    if not free.any():
        return False
    _, n = ndimage.label(free, structure=np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool))
    return n == 1


def _bsp_rooms(rng: np.random.Generator, x0: float, y0: float, x1: float, y1: float,
               room_max: float, walls: list, doors: list) -> None:
    wdt, hgt = x1 - x0, y1 - y0
    if max(wdt, hgt) <= room_max or min(wdt, hgt) <= 2 * _MIN_ROOM_M:
        return
    door_w = rng.uniform(0.9, 1.4)
    if wdt >= hgt:  # vertical split wall
        sx = x0 + rng.uniform(_MIN_ROOM_M, wdt - _MIN_ROOM_M)
        walls.append((sx, y0, sx, y1))
        dy = y0 + rng.uniform(0.3, max(0.31, hgt - door_w - 0.3))
        doors.append((sx, dy, sx, min(y1, dy + door_w)))
        _bsp_rooms(rng, x0, y0, sx, y1, room_max, walls, doors)
        _bsp_rooms(rng, sx, y0, x1, y1, room_max, walls, doors)
    else:  # horizontal split wall
        sy = y0 + rng.uniform(_MIN_ROOM_M, hgt - _MIN_ROOM_M)
        walls.append((x0, sy, x1, sy))
        dx = x0 + rng.uniform(0.3, max(0.31, wdt - door_w - 0.3))
        doors.append((dx, sy, min(x1, dx + door_w), sy))
        _bsp_rooms(rng, x0, y0, x1, sy, room_max, walls, doors)
        _bsp_rooms(rng, x0, sy, x1, y1, room_max, walls, doors)


def _generate_attempt(rng: np.random.Generator, extent: tuple[float, float],
                      resolution: float) -> FloorplanSpec:
    w_m, h_m = extent
    walls: list = [
        (0.0, 0.0, w_m, 0.0),
        (w_m, 0.0, w_m, h_m),
        (0.0, h_m, w_m, h_m),
        (0.0, 0.0, 0.0, h_m),
    ]
    doors: list = []
    room_max = rng.uniform(8.0, 13.0)
    corridor_w = rng.uniform(2.2, 3.2)
    if h_m >= w_m:  # corridor along the long (vertical) axis
        cx = w_m / 2 + rng.uniform(-w_m / 8, w_m / 8)
        lo, hi = cx - corridor_w / 2, cx + corridor_w / 2
        walls.append((lo, 0.0, lo, h_m))
        walls.append((hi, 0.0, hi, h_m))
        pos = rng.uniform(2.0, 6.0)
        while pos < h_m - 2.0:  # doors from the corridor into both sides
            dw = rng.uniform(1.0, 1.5)
            doors.append((lo, pos, lo, min(h_m, pos + dw)))
            dw = rng.uniform(1.0, 1.5)
            off = rng.uniform(-2.0, 2.0)
            p2 = min(max(0.5, pos + off), h_m - 2.0)
            doors.append((hi, p2, hi, min(h_m, p2 + dw)))
            pos += rng.uniform(7.0, 12.0)
        _bsp_rooms(rng, 0.0, 0.0, lo, h_m, room_max, walls, doors)
        _bsp_rooms(rng, hi, 0.0, w_m, h_m, room_max, walls, doors)
    else:
        cy = h_m / 2 + rng.uniform(-h_m / 8, h_m / 8)
        lo, hi = cy - corridor_w / 2, cy + corridor_w / 2
        walls.append((0.0, lo, w_m, lo))
        walls.append((0.0, hi, w_m, hi))
        pos = rng.uniform(2.0, 6.0)
        while pos < w_m - 2.0:
            dw = rng.uniform(1.0, 1.5)
            doors.append((pos, lo, min(w_m, pos + dw), lo))
            dw = rng.uniform(1.0, 1.5)
            off = rng.uniform(-2.0, 2.0)
            p2 = min(max(0.5, pos + off), w_m - 2.0)
            doors.append((p2, hi, min(w_m, p2 + dw), hi))
            pos += rng.uniform(7.0, 12.0)
        _bsp_rooms(rng, 0.0, 0.0, w_m, lo, room_max, walls, doors)
        _bsp_rooms(rng, 0.0, hi, w_m, h_m, room_max, walls, doors)
    return FloorplanSpec(resolution=resolution, extent=extent, walls=walls, doors=doors)


def generate_floorplan(seed: int, map_class: str, resolution: float = 10.0) -> FloorplanSpec:
    """Seeded corridor-plus-rooms floorplan with fully connected free space."""
    if map_class not in CLASS_EXTENTS_M:
        raise ValueError(f"unknown map class {map_class!r}; known: {sorted(CLASS_EXTENTS_M)}")
    extent = CLASS_EXTENTS_M[map_class]
    for attempt in range(100):
        rng = np.random.default_rng([int(seed), attempt])
        spec = _generate_attempt(rng, extent, resolution)
        if fully_connected(rasterize_floorplan(spec)):
            return spec
    raise RuntimeError(f"could not generate a connected {map_class} floorplan for seed {seed}")


def generate_world(seed: int, map_class: str, resolution: float = 10.0) -> GroundTruthGrid:
    return rasterize_floorplan(generate_floorplan(seed, map_class, resolution))


def sample_free_poses(world: GroundTruthGrid, k: int, seed: int) -> list[Pose]:
    """k distinct free cells, sampled uniformly with a seed."""
    if k < 1:
        raise ValueError("need at least one start pose")
    cells = world.free_cells()
    if len(cells) < k:
        raise ValueError("world has fewer free cells than requested poses")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(cells), size=k, replace=False)
    return [Pose(int(cells[i, 0]), int(cells[i, 1])) for i in idx]
