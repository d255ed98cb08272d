"""Frontier extraction: boundary cells between observed-free and unknown space."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grids import CellState, ObservedGrid, Pose

_EIGHT = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class Frontier:
    id: int
    cells: np.ndarray  # (n, 2) int (x, y) in row-major scan order
    representative: Pose

    def __len__(self) -> int:
        return len(self.cells)


def frontier_mask(observed: ObservedGrid) -> np.ndarray:
    """Free cells with at least one Unknown 8-neighbor."""
    unknown = observed.cells == CellState.UNKNOWN
    near_unknown = ndimage.binary_dilation(unknown, structure=_EIGHT)
    return observed.free & near_unknown


def extract_frontiers(observed: ObservedGrid, min_cluster: int = 3) -> list[Frontier]:
    """8-connected frontier clusters, smaller than min_cluster discarded.

    Cluster ids follow the row-major order in which clusters are first seen,
    so identical observed grids always produce identical frontier lists. The
    representative is the member cell nearest the cluster centroid (ties to
    the lowest row-major index).
    """
    mask = frontier_mask(observed)
    labels, nlab = ndimage.label(mask, structure=_EIGHT)
    if nlab == 0:
        return []
    ys, xs = np.nonzero(mask)
    labs = labels[ys, xs]
    order = np.argsort(labs, kind="stable")  # keeps row-major order inside clusters
    ys, xs, labs = ys[order], xs[order], labs[order]
    bounds = np.searchsorted(labs, np.arange(1, nlab + 2))
    out: list[Frontier] = []
    fid = 0
    for k in range(nlab):
        lo, hi = bounds[k], bounds[k + 1]
        if hi - lo < min_cluster:
            continue
        cx, cy = xs[lo:hi], ys[lo:hi]
        mean_x, mean_y = cx.mean(), cy.mean()
        d2 = (cx - mean_x) ** 2 + (cy - mean_y) ** 2
        best = int(np.argmin(d2))  # first minimum = lowest row-major index
        out.append(
            Frontier(
                id=fid,
                cells=np.column_stack([cx, cy]).astype(np.int64),
                representative=Pose(int(cx[best]), int(cy[best])),
            )
        )
        fid += 1
    return out
