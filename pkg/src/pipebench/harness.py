"""Randomized equivalence checks and timing benchmarks for the geometry core."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .frontiers import extract_frontiers
from .geometry import (
    VisPolygon,
    draw_polygon,
    extract_holes,
    path_visibility_mask,
    path_visibility_mask_oracle,
    polygon_union,
    raycast_ground_truth,
    raycast_probabilistic,
    rasterize_mask,
    ring_raster,
)
from .grids import GroundTruthGrid, GridGeometry, ObservedGrid, Pose, PredictedGrid, update_from_scan
from .pathing import sample_indices
from .planners import PlannerConfig, PlannerInput, select
from .predictors import PredictorConfig, predict
from .seeds import child_seed
from .worlds import generate_world, sample_free_poses

_EIGHT = np.ones((3, 3), dtype=bool)


def random_world(rng: np.random.Generator, size: int, density: float = 0.18) -> GroundTruthGrid:
    occ = rng.random((size, size)) < density
    geom = GridGeometry(size, size, 10.0)
    return GroundTruthGrid(geom, occ)


def random_predicted(rng: np.random.Generator, world: GroundTruthGrid,
                     noise: float = 0.35) -> PredictedGrid:
    """Walls at probability 1, free space with mild random clutter."""
    probs = np.where(world.occupied, 1.0, rng.random(world.geometry.shape) * noise)
    return PredictedGrid(world.geometry, probs)


def random_free_walk(rng: np.random.Generator, world: GroundTruthGrid, length: int) -> list[Pose]:
    """8-connected random walk through free cells (revisits allowed)."""
    cells = world.free_cells()
    if len(cells) == 0:
        raise ValueError("world has no free cells")
    start = cells[int(rng.integers(len(cells)))]
    pose = Pose(int(start[0]), int(start[1]))
    walk = [pose]
    dirs = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]
    for _ in range(length - 1):
        order = rng.permutation(8)
        for k in order:
            dx, dy = dirs[int(k)]
            nx, ny = pose.x + dx, pose.y + dy
            if world.geometry.contains(nx, ny) and not world.occupied[ny, nx]:
                pose = Pose(nx, ny)
                break
        walk.append(pose)
    return walk


@dataclass
class TrialResult:
    index: int
    diff_cells: int
    allowed: int
    adjacency_ok: bool
    oracle_cells: int
    ok: bool
    oracle_mask: Optional[np.ndarray] = None
    optimized_mask: Optional[np.ndarray] = None
    world: Optional[GroundTruthGrid] = None
    poses: Optional[list[Pose]] = None


@dataclass
class OracleReport:
    trials: int
    max_diff: int = 0
    max_allowed: int = 0
    failures: list[TrialResult] = field(default_factory=list)
    elapsed_s: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.failures


def mask_tolerance(oracle_cells: int) -> int:
    return max(8, math.ceil(0.01 * oracle_cells))


def equivalence_trial(
    index: int,
    seed: int,
    size: int = 64,
    path_len: int = 50,
    range_cells: float = 16.0,
    rays: int = 360,
    epsilon: float = 0.8,
    stride: int = 1,
) -> TrialResult:
    """One randomized merged-vs-per-point mask comparison."""
    rng = np.random.default_rng(child_seed(seed, "trial", index))
    world = random_world(rng, size)
    predicted = random_predicted(rng, world)
    poses = random_free_walk(rng, world, int(rng.integers(2, path_len + 1)))

    optimized = path_visibility_mask(poses, predicted, range_cells, epsilon, rays, stride)
    oracle = path_visibility_mask_oracle(poses, predicted, range_cells, epsilon, rays, stride)
    diff = optimized.cells ^ oracle.cells
    ndiff = int(np.count_nonzero(diff))
    ocount = oracle.count()
    allowed = mask_tolerance(ocount)

    adjacency_ok = True
    if ndiff:
        # Every differing cell must touch a rasterized ring cell of the
        # construction (fan rings or merged rings).
        polys = [
            draw_polygon(raycast_probabilistic(poses[i], range_cells, predicted, epsilon, rays))
            for i in sample_indices(len(poses), stride)
        ]
        union = polygon_union(polys)
        rings = ring_raster(VisPolygon(union.outers, extract_holes(polys, union)), world.geometry)
        for p in polys:
            rings |= ring_raster(p, world.geometry)
        near_ring = ndimage.binary_dilation(rings, structure=_EIGHT)
        adjacency_ok = bool((diff <= near_ring).all())

    ok = ndiff <= allowed and adjacency_ok
    return TrialResult(
        index=index,
        diff_cells=ndiff,
        allowed=allowed,
        adjacency_ok=adjacency_ok,
        oracle_cells=ocount,
        ok=ok,
        oracle_mask=None if ok else oracle.cells,
        optimized_mask=None if ok else optimized.cells,
        world=None if ok else world,
        poses=None if ok else poses,
    )


def run_oracle_trials(seed: int, trials: int, **kwargs) -> OracleReport:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    report = OracleReport(trials=trials)
    t0 = time.perf_counter()
    for i in range(trials):
        res = equivalence_trial(i, seed, **kwargs)
        report.max_diff = max(report.max_diff, res.diff_cells)
        report.max_allowed = max(report.max_allowed, res.allowed)
        if not res.ok:
            report.failures.append(res)
    report.elapsed_s = time.perf_counter() - t0
    return report


# --------------------------------------------------------------------------
# Timing benches
# --------------------------------------------------------------------------

def _median(xs: list[float]) -> float:
    return float(np.median(np.asarray(xs)))


def bench_path_mask(
    world: GroundTruthGrid,
    predicted: PredictedGrid,
    poses: list[Pose],
    range_cells: float,
    rays: int = 360,
    epsilon: float = 0.8,
    stride: int = 1,
    reps: int = 3,
) -> dict:
    """Merged single-rasterization path mask vs naive per-point rasterization."""
    naive, merged = [], []
    for _ in range(reps):
        t0 = time.perf_counter()
        path_visibility_mask_oracle(poses, predicted, range_cells, epsilon, rays, stride)
        naive.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        path_visibility_mask(poses, predicted, range_cells, epsilon, rays, stride)
        merged.append(time.perf_counter() - t0)
    m_naive, m_merged = _median(naive), _median(merged)
    return {
        "samples": len(sample_indices(len(poses), stride)),
        "naive_s": m_naive,
        "union_s": m_merged,
        "speedup": m_naive / m_merged if m_merged > 0 else math.inf,
    }


def build_partial_observation(
    world: GroundTruthGrid,
    rng: np.random.Generator,
    scan_count: int = 12,
    range_cells: float = 120.0,
    rays: int = 180,
) -> tuple[ObservedGrid, Pose]:
    """Observed map built from a handful of scans along a random walk."""
    observed = ObservedGrid(world.geometry)
    walk = random_free_walk(rng, world, scan_count * 25)
    pose = walk[0]
    for i in range(0, len(walk), 25):
        pose = walk[i]
        scan = raycast_ground_truth(pose, range_cells, world, rays)
        update_from_scan(observed, pose, scan.traces)
    return observed, pose


def bench_selection(
    world: GroundTruthGrid,
    observed: ObservedGrid,
    pose: Pose,
    config: PlannerConfig,
    workers_list: tuple[int, ...] = (1, 8),
    reps: int = 3,
    seed: int = 0,
) -> dict:
    """Total waypoint-selection time of the pathwise planner by worker count."""
    frontiers = extract_frontiers(observed)
    if not frontiers:
        raise ValueError("observation has no frontiers to evaluate")
    ensemble = predict(observed, 3, seed, PredictorConfig(backend="structural"))
    out: dict = {"frontiers": len(frontiers), "times_s": {}}
    chosen = {}
    for w in workers_list:
        cfg = PlannerConfig(
            lidar_range=config.lidar_range,
            rays=config.rays,
            epsilon=config.epsilon,
            stride=config.stride,
            workers=w,
        )
        times = []
        for _ in range(reps):
            inp = PlannerInput(pose, observed, ensemble, frontiers, cfg)
            t0 = time.perf_counter()
            goal, _ = select("pipe", inp)
            times.append(time.perf_counter() - t0)
        out["times_s"][w] = _median(times)
        chosen[w] = goal.id if goal else None
    out["selected"] = chosen
    if 1 in out["times_s"] and len(workers_list) > 1:
        wmax = max(workers_list)
        t1, tw = out["times_s"][1], out["times_s"][wmax]
        out["reduction"] = 1.0 - tw / t1 if t1 > 0 else 0.0
        out["parallel_workers"] = wmax
    return out


def bench_report(
    seed: int = 0,
    map_class: str = "large",
    resolution: float = 10.0,
    path_samples: int = 200,
    reps: int = 3,
    workers: tuple[int, ...] = (1, 8),
    rays: int = 360,
    selection_rays: int = 180,
    selection_stride: int = 8,
) -> dict:
    """Desk-scale performance report on a generated world."""
    world = generate_world(seed, map_class, resolution)
    rng = np.random.default_rng(child_seed(seed, "bench"))
    lam = 20.0 * resolution
    poses = random_free_walk(rng, world, path_samples)
    observed, pose = build_partial_observation(world, rng, range_cells=lam * 0.6, rays=selection_rays)
    predicted = predict(observed, 3, seed, PredictorConfig(backend="structural")).fused

    mask_part = bench_path_mask(world, predicted, poses, lam, rays=rays, reps=reps)
    sel_cfg = PlannerConfig(lidar_range=lam, rays=selection_rays, stride=selection_stride)
    sel_part = bench_selection(world, observed, pose, sel_cfg, workers, reps, seed)
    return {
        "world": {"class": map_class, "width": world.geometry.width, "height": world.geometry.height},
        "path_mask": mask_part,
        "selection": sel_part,
    }
