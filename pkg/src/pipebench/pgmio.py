"""Portable graymap (P5) encode/decode for grids, predictions and masks.

Value conventions:
  * observed grids (8-bit): 0 = Occupied, 255 = Free, 205 = Unknown
  * ground-truth grids (8-bit): 0 = Occupied, 255 = Free
  * predicted grids (16-bit): value = round(probability * 65535), big-endian
  * visibility masks (8-bit): 255 = covered, 0 = background
"""
from __future__ import annotations

import re

import numpy as np

from .grids import CellState, GridGeometry, GroundTruthGrid, ObservedGrid, PredictedGrid

OBS_OCCUPIED = 0
OBS_FREE = 255
OBS_UNKNOWN = 205


def write_pgm(arr: np.ndarray, maxval: int = 255) -> bytes:
    """Serialize a 2D uint array as binary PGM (P5)."""
    if arr.ndim != 2:
        raise ValueError("PGM payload must be 2D")
    h, w = arr.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    if maxval < 256:
        body = np.ascontiguousarray(arr, dtype=np.uint8).tobytes()
    elif maxval < 65536:
        body = np.ascontiguousarray(arr, dtype=">u2").tobytes()
    else:
        raise ValueError("maxval too large for PGM")
    return header + body


def read_pgm(data: bytes) -> tuple[np.ndarray, int]:
    """Parse binary PGM; returns (array, maxval). Comments in the header are allowed."""
    m = re.match(rb"P5\s+(?:#.*\s+)*(\d+)\s+(?:#.*\s+)*(\d+)\s+(?:#.*\s+)*(\d+)\s", data)
    if not m:
        raise ValueError("malformed PGM header")
    w, h, maxval = int(m.group(1)), int(m.group(2)), int(m.group(3))
    if w < 1 or h < 1 or maxval < 1 or maxval > 65535:
        raise ValueError("illegal PGM dimensions or maxval")
    body = data[m.end():]
    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    need = w * h * dtype.itemsize
    if len(body) < need:
        raise ValueError("truncated PGM body")
    arr = np.frombuffer(body[:need], dtype=dtype).reshape(h, w)
    return arr.astype(np.uint16 if maxval >= 256 else np.uint8), maxval


def observed_to_pgm(grid: ObservedGrid) -> bytes:
    lut = np.array([OBS_FREE, OBS_OCCUPIED, OBS_UNKNOWN], dtype=np.uint8)
    return write_pgm(lut[grid.cells], 255)


def observed_from_pgm(data: bytes, resolution: float = 10.0) -> ObservedGrid:
    arr, maxval = read_pgm(data)
    if maxval != 255:
        raise ValueError("observed-grid PGM must be 8-bit")
    cells = np.full(arr.shape, 255, dtype=np.uint8)
    cells[arr == OBS_FREE] = CellState.FREE
    cells[arr == OBS_OCCUPIED] = CellState.OCCUPIED
    cells[arr == OBS_UNKNOWN] = CellState.UNKNOWN
    if (cells == 255).any():
        raise ValueError("observed-grid PGM contains illegal values")
    geom = GridGeometry(arr.shape[1], arr.shape[0], resolution)
    return ObservedGrid(geom, cells)


def ground_truth_to_pgm(world: GroundTruthGrid) -> bytes:
    arr = np.where(world.occupied, OBS_OCCUPIED, OBS_FREE).astype(np.uint8)
    return write_pgm(arr, 255)


def predicted_to_pgm(grid: PredictedGrid) -> bytes:
    vals = np.rint(grid.probs * 65535.0).astype(np.uint16)
    return write_pgm(vals, 65535)


def predicted_from_pgm(data: bytes, resolution: float = 10.0) -> PredictedGrid:
    arr, maxval = read_pgm(data)
    if maxval != 65535:
        raise ValueError("predicted-grid PGM must be 16-bit")
    geom = GridGeometry(arr.shape[1], arr.shape[0], resolution)
    return PredictedGrid(geom, arr.astype(np.float64) / 65535.0)


def mask_to_pgm(cells: np.ndarray) -> bytes:
    return write_pgm(np.where(cells, 255, 0).astype(np.uint8), 255)
