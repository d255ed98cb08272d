"""Waypoint selectors: the pathwise information-gain planner and five baselines.

All selectors are pure functions of a snapshot `PlannerInput` and return the
winning frontier plus the per-frontier scores. Unreachable frontiers are
skipped; ties always break to the lowest frontier id, which also makes the
parallel evaluation independent of worker count and completion order.
"""
from __future__ import annotations

import math
import multiprocessing as mp
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .frontiers import Frontier
from .geometry import euclid, path_visibility_mask, point_visibility_mask
from .grids import CellState, GridGeometry, ObservedGrid, Pose, PredictedGrid
from .pathing import astar, sample_path
from .predictors import PredictionEnsemble

PLANNER_NAMES = ("pipe", "nearest", "nbv2d", "pw-nbv2d", "upen", "mapex")
PREDICTION_PLANNERS = frozenset({"pipe", "upen", "mapex"})

# Path-based modes need an A* path per frontier and are the expensive ones;
# they fan out over the worker pool. Point-based modes score cheaply and probe
# reachability only for the winner.
_PATH_MODES = frozenset({"pipe", "pw-nbv2d", "upen"})
_POINT_MODES = frozenset({"nbv2d", "mapex"})


@dataclass(frozen=True)
class PlannerConfig:
    lidar_range: float  # cells
    rays: int = 360
    epsilon: float = 0.8
    stride: int = 1
    workers: int = 1


@dataclass
class PlannerInput:
    pose: Pose
    observed: ObservedGrid
    ensemble: Optional[PredictionEnsemble]
    frontiers: list[Frontier]
    config: PlannerConfig


@dataclass(frozen=True)
class FrontierScore:
    frontier_id: int
    info_gain: float
    normalizer: float
    score: float


class _Ctx:
    """Per-evaluation snapshot shared by workers (inherited on fork)."""

    def __init__(self, mode: str, pose: Pose, observed: ObservedGrid,
                 fused: Optional[PredictedGrid], var: Optional[np.ndarray],
                 config: PlannerConfig):
        self.mode = mode
        self.pose = pose
        self.observed = observed
        self.fused = fused
        self.var = var
        self.unknown = observed.cells == CellState.UNKNOWN
        self.config = config


def _score_one(ctx: _Ctx, f: Frontier) -> Optional[FrontierScore]:
    cfg = ctx.config
    rep = f.representative
    mode = ctx.mode
    if mode in _PATH_MODES:
        path = astar(ctx.pose, rep, ctx.observed)
        if path is None:
            return None
        norm = path.length
        if mode == "pipe":
            mask = path_visibility_mask(
                path.poses, ctx.fused, cfg.lidar_range, cfg.epsilon, cfg.rays, cfg.stride
            )
            info = float(ctx.var[mask.cells].sum())
        elif mode == "pw-nbv2d":
            mask = path_visibility_mask(
                path.poses, ctx.observed, cfg.lidar_range, cfg.epsilon, cfg.rays, cfg.stride
            )
            info = float(np.count_nonzero(mask.cells & ctx.unknown))
        else:  # upen: variance at the sampled path poses, no coverage mask
            pts = sample_path(path, cfg.stride)
            info = float(sum(ctx.var[p.y, p.x] for p in pts))
    elif mode == "nbv2d":
        mask = point_visibility_mask(rep, cfg.lidar_range, ctx.observed, cfg.epsilon, cfg.rays)
        info = float(np.count_nonzero(mask.cells & ctx.unknown))
        norm = euclid(ctx.pose, rep)
    elif mode == "mapex":
        mask = point_visibility_mask(rep, cfg.lidar_range, ctx.fused, cfg.epsilon, cfg.rays)
        info = float(ctx.var[mask.cells].sum())
        norm = euclid(ctx.pose, rep)
    else:
        raise ValueError(f"unknown scoring mode {mode!r}")
    if norm <= 0.0:
        if info > 0.0:
            return FrontierScore(f.id, info, 0.0, math.inf)
        return None
    return FrontierScore(f.id, info, norm, info / norm)


_WORKER_CTX: Optional[_Ctx] = None


def _pool_init(ctx: _Ctx) -> None:
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _pool_score(f: Frontier) -> Optional[FrontierScore]:
    return _score_one(_WORKER_CTX, f)


def _evaluate(ctx: _Ctx, frontiers: list[Frontier], workers: int) -> list[FrontierScore]:
    if workers > 1 and len(frontiers) > 1:
        with mp.get_context("fork").Pool(workers, initializer=_pool_init, initargs=(ctx,)) as pool:
            results = pool.map(_pool_score, frontiers, chunksize=1)
    else:
        results = [_score_one(ctx, f) for f in frontiers]
    return [r for r in results if r is not None]


def _argmax(scores: list[FrontierScore], frontiers: list[Frontier]) -> Optional[Frontier]:
    by_id = {f.id: f for f in frontiers}
    best: Optional[FrontierScore] = None
    for s in sorted(scores, key=lambda s: s.frontier_id):
        if best is None or s.score > best.score:
            best = s
    return by_id[best.frontier_id] if best else None


def _require_ensemble(inp: PlannerInput) -> tuple[PredictedGrid, np.ndarray]:
    if inp.ensemble is None:
        raise ValueError("this planner needs a prediction ensemble")
    return inp.ensemble.fused, inp.ensemble.uncertainty.var


def _reachable_argmax(inp: PlannerInput, scores: list[FrontierScore]) -> Optional[Frontier]:
    """Winner among point-scored frontiers, probing reachability best-first."""
    by_id = {f.id: f for f in inp.frontiers}
    for s in sorted(scores, key=lambda s: (-s.score, s.frontier_id)):
        f = by_id[s.frontier_id]
        if f.representative == inp.pose or astar(inp.pose, f.representative, inp.observed):
            return f
    return None


def pipe_select(inp: PlannerInput) -> tuple[Optional[Frontier], list[FrontierScore]]:
    """Pathwise gain: variance summed over the merged path-coverage mask,
    normalized by A* path length."""
    fused, var = _require_ensemble(inp)
    ctx = _Ctx("pipe", inp.pose, inp.observed, fused, var, inp.config)
    scores = _evaluate(ctx, inp.frontiers, inp.config.workers)
    return _argmax(scores, inp.frontiers), scores


def pw_nbv2d_select(inp: PlannerInput) -> tuple[Optional[Frontier], list[FrontierScore]]:
    """Pathwise coverage of the observed map, counting unknown cells."""
    ctx = _Ctx("pw-nbv2d", inp.pose, inp.observed, None, None, inp.config)
    scores = _evaluate(ctx, inp.frontiers, inp.config.workers)
    return _argmax(scores, inp.frontiers), scores


def upen_select(inp: PlannerInput) -> tuple[Optional[Frontier], list[FrontierScore]]:
    """Variance summed at the sampled path poses themselves (no coverage mask)."""
    _, var = _require_ensemble(inp)
    ctx = _Ctx("upen", inp.pose, inp.observed, None, var, inp.config)
    scores = _evaluate(ctx, inp.frontiers, inp.config.workers)
    return _argmax(scores, inp.frontiers), scores


def nbv2d_select(inp: PlannerInput) -> tuple[Optional[Frontier], list[FrontierScore]]:
    """Pointwise coverage at the frontier on the observed map / Euclidean distance."""
    ctx = _Ctx("nbv2d", inp.pose, inp.observed, None, None, inp.config)
    scores = _evaluate(ctx, inp.frontiers, 1)
    return _reachable_argmax(inp, scores), scores


def mapex_select(inp: PlannerInput) -> tuple[Optional[Frontier], list[FrontierScore]]:
    """Pointwise probabilistic coverage on the fused map, variance-weighted,
    normalized by Euclidean distance."""
    fused, var = _require_ensemble(inp)
    ctx = _Ctx("mapex", inp.pose, inp.observed, fused, var, inp.config)
    scores = _evaluate(ctx, inp.frontiers, 1)
    return _reachable_argmax(inp, scores), scores


def nearest_select(inp: PlannerInput) -> tuple[Optional[Frontier], list[FrontierScore]]:
    """Classic nearest frontier by Euclidean distance (reachable ones only)."""
    scores = []
    for f in inp.frontiers:
        d = euclid(inp.pose, f.representative)
        scores.append(FrontierScore(f.id, 0.0, d, -d))
    return _reachable_argmax(inp, scores), scores


_SELECTORS: dict[str, Callable[[PlannerInput], tuple[Optional[Frontier], list[FrontierScore]]]] = {
    "pipe": pipe_select,
    "nearest": nearest_select,
    "nbv2d": nbv2d_select,
    "pw-nbv2d": pw_nbv2d_select,
    "upen": upen_select,
    "mapex": mapex_select,
}


def select(planner: str, inp: PlannerInput) -> tuple[Optional[Frontier], list[FrontierScore]]:
    try:
        fn = _SELECTORS[planner]
    except KeyError:
        raise ValueError(f"unknown planner {planner!r}; known: {', '.join(PLANNER_NAMES)}") from None
    return fn(inp)
