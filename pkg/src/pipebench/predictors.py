"""Map prediction: seeded heuristic ensembles over the observed grid.

Each backend fills Unknown cells with occupancy probabilities while leaving
observed cells pinned (Occupied -> 1.0, Free -> 0.0). The ensemble's pixelwise
mean is the fused map used for raycasting; the pixelwise population variance
is the uncertainty map that pathwise planning sums over.

An external predictor (e.g. a learned inpainting model) can be plugged in over
a length-prefixed graymap protocol; see `external_predict`.
"""
from __future__ import annotations

import logging
import shlex
import socket
import struct
import subprocess
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from . import pgmio
from .grids import CellState, GroundTruthGrid, ObservedGrid, PredictedGrid, UncertaintyGrid

log = logging.getLogger(__name__)


class PredictorError(RuntimeError):
    pass


@dataclass(frozen=True)
class PredictorConfig:
    backend: str = "structural"
    p0: float = 0.5  # prior occupancy for unknown space far from anything observed
    extension_min_m: float = 1.0  # walls always continue at least this far
    extension_mean_m: float = 2.0  # mean of the speculative extension tail
    extension_cap_m: float = 4.0
    close_prob: float = 0.2  # chance an extension caps off a room
    near_fill: float = 0.04  # agreed occupancy just beyond the frontier (rooms continue)
    fill_scale_m: float = 12.0  # how deep "rooms keep going"; members jitter this
    leak_flip_rate: float = 0.05  # oracle-leak backend only
    endpoint: str | None = None  # external backend: "exec:CMD" or "tcp:HOST:PORT"
    timeout_s: float = 30.0
    fallback_to_prior: bool = False


@dataclass
class PredictionEnsemble:
    members: list[PredictedGrid]
    fused: PredictedGrid = field(init=False)
    uncertainty: UncertaintyGrid = field(init=False)

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError("ensemble needs at least one member")
        geom = self.members[0].geometry
        stack = np.stack([m.probs for m in self.members])
        mean = stack.mean(axis=0)
        var = np.mean((stack - mean) ** 2, axis=0)
        self.fused = PredictedGrid(geom, mean)
        self.uncertainty = UncertaintyGrid(geom, var)


def _base_probs(observed: ObservedGrid, p0: float) -> np.ndarray:
    probs = np.full(observed.geometry.shape, p0, dtype=np.float64)
    probs[observed.cells == CellState.OCCUPIED] = 1.0
    probs[observed.cells == CellState.FREE] = 0.0
    return probs


def _shifted(arr: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """arr sampled at (x+dx, y+dy), False outside."""
    h, w = arr.shape
    out = np.zeros_like(arr)
    xs0, xs1 = max(0, dx), min(w, w + dx)
    ys0, ys1 = max(0, dy), min(h, h + dy)
    xd0, xd1 = max(0, -dx), min(w, w - dx)
    yd0, yd1 = max(0, -dy), min(h, h - dy)
    out[yd0:yd1, xd0:xd1] = arr[ys0:ys1, xs0:xs1]
    return out


def _structural_member(observed: ObservedGrid, rng: np.random.Generator, cfg: PredictorConfig) -> np.ndarray:
    """One plausible map continuation.

    Near the frontier the members agree: rooms keep going (low occupancy) and
    observed wall runs continue for at least extension_min_m. Deeper into the
    unknown they diverge: each member decays its fill toward the ignorant
    prior at its own rate, extends walls by its own random tail and sometimes
    caps off a room. Variance across the ensemble therefore grows with depth,
    which is what makes coverage of deep unseen space worth traveling for.
    """
    probs = _base_probs(observed, cfg.p0)
    unknown = observed.cells == CellState.UNKNOWN
    occ = observed.cells == CellState.OCCUPIED
    h, w = probs.shape
    res = observed.geometry.resolution
    min_ext = max(1, int(round(cfg.extension_min_m * res)))
    mean_ext = max(1.0, cfg.extension_mean_m * res)
    cap_ext = max(min_ext, int(round(cfg.extension_cap_m * res)))

    free = observed.cells == CellState.FREE
    if free.any() and unknown.any():
        scale = max(1.0, rng.uniform(0.6, 1.5) * cfg.fill_scale_m * res)
        dist = ndimage.distance_transform_edt(~free)
        fill = cfg.p0 + (cfg.near_fill - cfg.p0) * np.exp(-dist / scale)
        probs[unknown] = fill[unknown]

    for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        # Occupied cell, unknown ahead, occupied behind: the tip of a wall run.
        seeds = occ & _shifted(unknown, dx, dy) & _shifted(occ, -dx, -dy)
        ys, xs = np.nonzero(seeds)
        for y0, x0 in zip(ys, xs):  # row-major, deterministic
            length = min(cap_ext, min_ext + int(rng.geometric(1.0 / mean_ext)) - 1)
            tip_x, tip_y = int(x0), int(y0)
            for k in range(1, length + 1):
                x, y = int(x0) + k * dx, int(y0) + k * dy
                if not (0 <= x < w and 0 <= y < h) or not unknown[y, x]:
                    break
                probs[y, x] = 1.0
                tip_x, tip_y = x, y
            if rng.random() < cfg.close_prob:
                sign = 1 if rng.integers(0, 2) else -1
                pdx, pdy = -dy * sign, dx * sign
                cap_len = min(cap_ext, int(rng.geometric(2.0 / mean_ext)))
                for k in range(1, cap_len + 1):
                    x, y = tip_x + k * pdx, tip_y + k * pdy
                    if not (0 <= x < w and 0 <= y < h) or not unknown[y, x]:
                        break
                    probs[y, x] = 1.0
    return probs


def _oracle_leak_member(
    observed: ObservedGrid, rng: np.random.Generator, cfg: PredictorConfig, world: GroundTruthGrid
) -> np.ndarray:
    """Test-only upper-bound backend: ground truth with seeded flips in unknown space."""
    probs = np.where(world.occupied, 1.0, 0.0)
    unknown = observed.cells == CellState.UNKNOWN
    flips = unknown & (rng.random(probs.shape) < cfg.leak_flip_rate)
    probs[flips] = 1.0 - probs[flips]
    probs[observed.cells == CellState.OCCUPIED] = 1.0
    probs[observed.cells == CellState.FREE] = 0.0
    return probs


def predict(
    observed: ObservedGrid,
    n: int = 3,
    seed: int = 0,
    config: PredictorConfig = PredictorConfig(),
    world: GroundTruthGrid | None = None,
) -> PredictionEnsemble:
    """Seeded ensemble of n predicted maps (member i uses seed + i)."""
    if n < 1:
        raise ValueError("ensemble size must be >= 1")
    geom = observed.geometry
    backend = config.backend
    if backend == "external":
        try:
            ensemble, _ = external_predict(observed, n, config.endpoint, config)
            return ensemble
        except PredictorError:
            if not config.fallback_to_prior:
                raise
            log.warning("external predictor failed; falling back to prior backend")
            backend = "prior"
    members: list[PredictedGrid] = []
    for i in range(n):
        rng = np.random.default_rng(seed + i)
        if backend == "prior":
            probs = _base_probs(observed, config.p0)
        elif backend == "structural":
            probs = _structural_member(observed, rng, config)
        elif backend == "oracle_leak":
            if world is None:
                raise ValueError("oracle_leak backend needs the ground-truth world")
            probs = _oracle_leak_member(observed, rng, config, world)
        else:
            raise ValueError(f"unknown predictor backend {config.backend!r}")
        members.append(PredictedGrid(geom, probs))
    return PredictionEnsemble(members)


# --------------------------------------------------------------------------
# External predictor wire protocol: length-prefixed frames over a byte stream.
# Frame 1 (request): the observed grid as an 8-bit graymap. Frames 2..n+1
# (response): predicted maps as 16-bit probability graymaps.
# --------------------------------------------------------------------------

def frame_encode(payload: bytes) -> bytes:
    return struct.pack(">Q", len(payload)) + payload


def frames_decode(buf: bytes, count: int) -> list[bytes]:
    frames = []
    off = 0
    for _ in range(count):
        if off + 8 > len(buf):
            raise PredictorError("truncated response: missing frame header")
        (ln,) = struct.unpack_from(">Q", buf, off)
        off += 8
        if off + ln > len(buf):
            raise PredictorError("truncated response: short frame body")
        frames.append(buf[off : off + ln])
        off += ln
    return frames


def _exchange_subprocess(cmd: str, request: bytes, timeout: float) -> bytes:
    try:
        proc = subprocess.run(
            shlex.split(cmd),
            input=request,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            timeout=timeout,
        )
    except subprocess.TimeoutExpired as e:
        raise PredictorError(f"external predictor timed out after {timeout}s") from e
    except OSError as e:
        raise PredictorError(f"cannot launch external predictor: {e}") from e
    if proc.returncode != 0:
        raise PredictorError(f"external predictor exited with {proc.returncode}")
    return proc.stdout


def _exchange_socket(host: str, port: int, request: bytes, timeout: float) -> bytes:
    try:
        with socket.create_connection((host, port), timeout=timeout) as sock:
            sock.settimeout(timeout)
            sock.sendall(request)
            sock.shutdown(socket.SHUT_WR)
            chunks = []
            while True:
                data = sock.recv(65536)
                if not data:
                    break
                chunks.append(data)
    except OSError as e:
        raise PredictorError(f"external predictor socket error: {e}") from e
    return b"".join(chunks)


def external_predict(
    observed: ObservedGrid,
    n: int,
    endpoint: str | None,
    config: PredictorConfig = PredictorConfig(),
) -> tuple[PredictionEnsemble, int]:
    """Query an external predictor; returns (ensemble, clamped cell count).

    Responses are validated for dimensions and observation preservation;
    violations are clamped to the observed values and counted.
    """
    if not endpoint:
        raise PredictorError("no external endpoint configured")
    request = frame_encode(pgmio.observed_to_pgm(observed))
    if endpoint.startswith("exec:"):
        raw = _exchange_subprocess(endpoint[5:], request, config.timeout_s)
    elif endpoint.startswith("tcp:"):
        host, _, port = endpoint[4:].rpartition(":")
        raw = _exchange_socket(host, int(port), request, config.timeout_s)
    else:
        raise PredictorError(f"unsupported endpoint {endpoint!r}")
    frames = frames_decode(raw, n)
    geom = observed.geometry
    occ = observed.cells == CellState.OCCUPIED
    free = observed.cells == CellState.FREE
    members = []
    clamped = 0
    for payload in frames:
        try:
            grid = pgmio.predicted_from_pgm(payload, geom.resolution)
        except ValueError as e:
            raise PredictorError(f"malformed response frame: {e}") from e
        if grid.geometry.shape != geom.shape:
            raise PredictorError(
                f"dimension mismatch: got {grid.geometry.shape}, expected {geom.shape}"
            )
        probs = grid.probs
        bad = (occ & (probs != 1.0)) | (free & (probs != 0.0))
        clamped += int(np.count_nonzero(bad))
        probs[occ] = 1.0
        probs[free] = 0.0
        members.append(PredictedGrid(geom, probs))
    if clamped:
        log.warning("external predictor violated observation preservation at %d cells", clamped)
    return PredictionEnsemble(members), clamped


def prior_config(config: PredictorConfig) -> PredictorConfig:
    return replace(config, backend="prior")
