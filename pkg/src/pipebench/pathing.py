"""Shortest paths on the 8-connected observed-free grid.

Costs are octile: 1 per cardinal step, sqrt(2) per diagonal step. Internally
the cardinal and diagonal step counts are tracked as integers and combined
into floats only for comparisons, which keeps equal-cost paths bitwise equal
and makes optimality checks exact. Ties are broken by (f, h, row-major index)
so results are deterministic across runs and worker counts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .grids import ObservedGrid, Pose

SQRT2 = math.sqrt(2.0)

# Neighbor order: E, SE, S, SW, W, NW, N, NE (x right, y down).
_DX = np.array([1, 1, 0, -1, -1, -1, 0, 1], dtype=np.int64)
_DY = np.array([0, 1, 1, 1, 0, -1, -1, -1], dtype=np.int64)
_DIAG = np.array([0, 1, 0, 1, 0, 1, 0, 1], dtype=np.uint8)


@dataclass(frozen=True)
class GridPath:
    poses: tuple[Pose, ...]
    length: float

    def __post_init__(self) -> None:
        if not self.poses:
            raise ValueError("path must contain at least one pose")
        nc = nd = 0
        for a, b in zip(self.poses[:-1], self.poses[1:]):
            dx, dy = abs(b.x - a.x), abs(b.y - a.y)
            if dx > 1 or dy > 1 or (dx == 0 and dy == 0):
                raise ValueError(f"non-adjacent step {a} -> {b}")
            if dx and dy:
                nd += 1
            else:
                nc += 1
        if abs(self.length - (nc + nd * SQRT2)) > 1e-9:
            raise ValueError("path length does not match step costs")


@njit(cache=True)
def _astar_core(trav, sx, sy, gx, gy):  # pragma: no cover - exercised via astar()
    h, w = trav.shape
    n = h * w
    ga = np.zeros(n, np.int32)
    gb = np.zeros(n, np.int32)
    gf = np.full(n, np.inf, np.float64)
    closed = np.zeros(n, np.uint8)
    parent = np.full(n, -1, np.int64)

    cap = 1024
    hf = np.empty(cap, np.float64)
    hh = np.empty(cap, np.float64)
    hi = np.empty(cap, np.int64)

    start = sy * w + sx
    goal = gy * w + gx
    gf[start] = 0.0
    dx0 = abs(sx - gx)
    dy0 = abs(sy - gy)
    mx = dx0 if dx0 > dy0 else dy0
    mn = dy0 if dx0 > dy0 else dx0
    h0 = (mx - mn) + mn * SQRT2
    hf[0] = h0
    hh[0] = h0
    hi[0] = start
    size = 1
    found = False

    while size > 0:
        topi = hi[0]
        size -= 1
        lf = hf[size]
        lh = hh[size]
        li = hi[size]
        pos = 0
        while True:
            child = 2 * pos + 1
            if child >= size:
                break
            rc = child + 1
            if rc < size and (
                hf[rc] < hf[child]
                or (hf[rc] == hf[child] and (hh[rc] < hh[child] or (hh[rc] == hh[child] and hi[rc] < hi[child])))
            ):
                child = rc
            if hf[child] < lf or (
                hf[child] == lf and (hh[child] < lh or (hh[child] == lh and hi[child] < li))
            ):
                hf[pos] = hf[child]
                hh[pos] = hh[child]
                hi[pos] = hi[child]
                pos = child
            else:
                break
        if size > 0:
            hf[pos] = lf
            hh[pos] = lh
            hi[pos] = li

        idx = topi
        if closed[idx]:
            continue
        closed[idx] = 1
        if idx == goal:
            found = True
            break
        cy = idx // w
        cx = idx - cy * w
        a0 = ga[idx]
        b0 = gb[idx]
        for k in range(8):
            nx = cx + _DX[k]
            ny = cy + _DY[k]
            if nx < 0 or nx >= w or ny < 0 or ny >= h:
                continue
            if not trav[ny, nx]:
                continue
            if _DIAG[k] == 1:
                # No corner cutting: both orthogonal neighbors must be free.
                if not (trav[cy, nx] and trav[ny, cx]):
                    continue
                na = a0
                nb = b0 + 1
            else:
                na = a0 + 1
                nb = b0
            nidx = ny * w + nx
            if closed[nidx]:
                continue
            ngf = na + nb * SQRT2
            if ngf < gf[nidx]:
                gf[nidx] = ngf
                ga[nidx] = na
                gb[nidx] = nb
                parent[nidx] = idx
                adx = nx - gx
                ady = ny - gy
                if adx < 0:
                    adx = -adx
                if ady < 0:
                    ady = -ady
                mx = adx if adx > ady else ady
                mn = ady if adx > ady else adx
                hv = (mx - mn) + mn * SQRT2
                fv = (na + (mx - mn)) + (nb + mn) * SQRT2
                if size >= cap:
                    ncap = cap * 2
                    nhf = np.empty(ncap, np.float64)
                    nhh = np.empty(ncap, np.float64)
                    nhi = np.empty(ncap, np.int64)
                    nhf[:size] = hf[:size]
                    nhh[:size] = hh[:size]
                    nhi[:size] = hi[:size]
                    hf = nhf
                    hh = nhh
                    hi = nhi
                    cap = ncap
                pos = size
                hf[pos] = fv
                hh[pos] = hv
                hi[pos] = nidx
                size += 1
                while pos > 0:
                    par = (pos - 1) // 2
                    if hf[pos] < hf[par] or (
                        hf[pos] == hf[par]
                        and (hh[pos] < hh[par] or (hh[pos] == hh[par] and hi[pos] < hi[par]))
                    ):
                        tf = hf[par]
                        th = hh[par]
                        ti = hi[par]
                        hf[par] = hf[pos]
                        hh[par] = hh[pos]
                        hi[par] = hi[pos]
                        hf[pos] = tf
                        hh[pos] = th
                        hi[pos] = ti
                        pos = par
                    else:
                        break
    return found, parent, ga[goal], gb[goal]


def astar(start: Pose, goal: Pose, observed: ObservedGrid) -> GridPath | None:
    """Cost-optimal 8-connected path through observed-Free cells.

    Unknown and Occupied cells are non-traversable. Returns None when the
    goal cannot be reached.
    """
    geom = observed.geometry
    if not geom.contains(start.x, start.y) or not geom.contains(goal.x, goal.y):
        raise ValueError("start or goal outside grid")
    trav = observed.free
    if not trav[start.y, start.x]:
        raise ValueError(f"start {start} is not observed Free")
    if not trav[goal.y, goal.x]:
        return None
    if start == goal:
        return GridPath((start,), 0.0)
    found, parent, nc, nd = _astar_core(trav, start.x, start.y, goal.x, goal.y)
    if not found:
        return None
    w = geom.width
    chain = []
    idx = goal.y * w + goal.x
    while idx >= 0:
        chain.append(Pose(idx % w, idx // w))
        idx = parent[idx]
    chain.reverse()
    return GridPath(tuple(chain), float(nc) + float(nd) * SQRT2)


def sample_indices(n: int, stride: int) -> list[int]:
    """Indices 0, stride, 2*stride, ... plus the final index exactly once."""
    if n < 1:
        raise ValueError("empty path")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    idxs = list(range(0, n, stride))
    if idxs[-1] != n - 1:
        idxs.append(n - 1)
    return idxs


def sample_path(path: GridPath, stride: int) -> list[Pose]:
    """Poses at every `stride` steps along the path, endpoints always included."""
    return [path.poses[i] for i in sample_indices(len(path.poses), stride)]
