"""Grid geometry, the occupancy-grid variants and the monotone map-update contract.

Conventions (shared by every module, mask and file dump):
  * cells are addressed as (x, y) with x = column, y = row, origin top-left;
  * arrays are stored row-major, indexed ``arr[y, x]``;
  * the continuous position of cell (x, y) is the point (x, y), i.e. integer
    coordinates are cell centers and cell edges sit on half-integers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple, Sequence

import numpy as np


class CellState(IntEnum):
    FREE = 0
    OCCUPIED = 1
    UNKNOWN = 2


class Pose(NamedTuple):
    x: int
    y: int


class RayTrace(NamedTuple):
    """Cells traversed by one ray, in traversal order.

    ``cells`` is an (n, 2) int array of (x, y) pairs. If ``hit`` is true the
    last entry is the obstacle cell the ray stopped on; every other entry was
    crossed through free space.
    """

    cells: np.ndarray
    hit: bool


@dataclass(frozen=True)
class GridGeometry:
    width: int
    height: int
    resolution: float = 10.0  # cells per meter

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError("grid must be at least 1x1")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def contains(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height


@dataclass
class GroundTruthGrid:
    """Binary world model: every cell is Free or Occupied, border Occupied."""

    geometry: GridGeometry
    occupied: np.ndarray  # bool (h, w)

    def __post_init__(self) -> None:
        self.occupied = np.asarray(self.occupied, dtype=bool)
        if self.occupied.shape != self.geometry.shape:
            raise ValueError("occupancy array does not match geometry")
        # Closed-world contract: rays must always terminate inside the grid.
        self.occupied[0, :] = True
        self.occupied[-1, :] = True
        self.occupied[:, 0] = True
        self.occupied[:, -1] = True

    def is_free(self, pose: Pose) -> bool:
        return not self.occupied[pose.y, pose.x]

    def free_cells(self) -> np.ndarray:
        ys, xs = np.nonzero(~self.occupied)
        return np.column_stack([xs, ys])


@dataclass
class ObservedGrid:
    """Tri-state map built from scans; knowledge only ever grows."""

    geometry: GridGeometry
    cells: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.cells is None:
            self.cells = np.full(self.geometry.shape, CellState.UNKNOWN, dtype=np.uint8)
        else:
            self.cells = np.asarray(self.cells, dtype=np.uint8)
            if self.cells.shape != self.geometry.shape:
                raise ValueError("cell array does not match geometry")

    def copy(self) -> "ObservedGrid":
        """Immutable-by-convention snapshot, safe to hand to worker processes."""
        return ObservedGrid(self.geometry, self.cells.copy())

    @property
    def known(self) -> np.ndarray:
        return self.cells != CellState.UNKNOWN

    @property
    def free(self) -> np.ndarray:
        return self.cells == CellState.FREE

    @property
    def occupied(self) -> np.ndarray:
        return self.cells == CellState.OCCUPIED


@dataclass
class PredictedGrid:
    """Per-cell occupancy probability; observed cells are pinned to 0/1."""

    geometry: GridGeometry
    probs: np.ndarray  # float64 (h, w) in [0, 1]

    def __post_init__(self) -> None:
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.shape != self.geometry.shape:
            raise ValueError("probability array does not match geometry")
        if self.probs.min() < 0.0 or self.probs.max() > 1.0:
            raise ValueError("probabilities outside [0, 1]")


@dataclass
class UncertaintyGrid:
    """Pixelwise ensemble variance; zero wherever the map is observed."""

    geometry: GridGeometry
    var: np.ndarray  # float64 (h, w) >= 0

    def __post_init__(self) -> None:
        self.var = np.asarray(self.var, dtype=np.float64)
        if self.var.shape != self.geometry.shape:
            raise ValueError("variance array does not match geometry")
        if self.var.min() < -1e-15:
            raise ValueError("negative variance")
        np.clip(self.var, 0.0, None, out=self.var)


def update_from_scan(observed: ObservedGrid, pose: Pose, rays: Sequence[RayTrace]) -> ObservedGrid:
    """Fold one scan into the observed grid (in place).

    Every traversed cell becomes Free, every terminal cell of a ray that hit
    an obstacle becomes Occupied. The noise-free sensor contract makes
    conflicting updates a bug, not a merge: they raise.
    """
    h, w = observed.geometry.shape
    cells = observed.cells
    if not observed.geometry.contains(pose.x, pose.y):
        raise ValueError(f"pose {pose} outside grid")
    for trace in rays:
        pts = trace.cells
        if pts.size == 0:
            continue
        if pts[:, 0].min() < 0 or pts[:, 0].max() >= w or pts[:, 1].min() < 0 or pts[:, 1].max() >= h:
            raise ValueError("scan contains out-of-bounds cell index")
        free_pts = pts[:-1] if trace.hit else pts
        cur = cells[free_pts[:, 1], free_pts[:, 0]]
        if (cur == CellState.OCCUPIED).any():
            raise AssertionError("scan marks an Occupied cell Free: sensor contract violated")
        cells[free_pts[:, 1], free_pts[:, 0]] = CellState.FREE
        if trace.hit:
            tx, ty = pts[-1]
            if cells[ty, tx] == CellState.FREE:
                raise AssertionError("scan marks a Free cell Occupied: sensor contract violated")
            cells[ty, tx] = CellState.OCCUPIED
    # The pose cell itself is sensed by standing on it.
    if cells[pose.y, pose.x] == CellState.OCCUPIED:
        raise AssertionError("robot pose on an Occupied cell")
    cells[pose.y, pose.x] = CellState.FREE
    return observed


def known_fraction(observed: ObservedGrid) -> float:
    """Share of cells that have left Unknown."""
    return float(np.count_nonzero(observed.known)) / observed.cells.size
