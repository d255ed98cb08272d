"""Closed sense-predict-select-act exploration loop over a ground-truth world."""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .frontiers import Frontier, extract_frontiers, frontier_mask
from .geometry import raycast_ground_truth
from .grids import (
    CellState,
    GroundTruthGrid,
    ObservedGrid,
    Pose,
    known_fraction,
    update_from_scan,
)
from .metrics import ExperimentRecord, auc, buffered_iou, time_to_threshold
from .pathing import astar
from .planners import PREDICTION_PLANNERS, PlannerConfig, PlannerInput, select
from .predictors import PredictionEnsemble, PredictorConfig, predict
from .seeds import child_seed

OCCUPIED_PROB_THRESHOLD = 0.5  # fused probability strictly above this counts as a wall


@dataclass(frozen=True)
class SimConfig:
    lidar_range_m: float = 20.0
    rays: int = 360
    stride: int = 1  # path-mask sample spacing, in cells
    epsilon: float = 0.8
    ensemble_size: int = 3
    budget: int = 1000  # step budget T
    eval_every: int = 10
    planner: str = "pipe"
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    workers: int = 1
    iou_buffer: int = 2
    min_cluster: int = 3
    goal_done_radius_m: float = 1.0  # goal invalidates once no unknown remains this close
    snapshot_every: int = 0

    def lidar_range_cells(self, resolution: float) -> float:
        return self.lidar_range_m * resolution

    def validate(self) -> None:
        if self.budget < 0 or self.eval_every < 1 or self.stride < 1:
            raise ValueError("budget, eval_every and stride must be positive")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError("epsilon must be in (0, 1]")
        if self.rays < 8 or self.ensemble_size < 1 or self.lidar_range_m <= 0:
            raise ValueError("bad sensor or ensemble configuration")


@dataclass
class SimState:
    t: int
    pose: Pose
    observed: ObservedGrid
    ensemble: Optional[PredictionEnsemble] = None
    goal: Optional[Frontier] = None
    pending: list[Pose] = field(default_factory=list)
    complete: bool = False
    stalled: bool = False
    replans: int = 0


def config_hash(config: SimConfig, seed: int, extra: dict | None = None) -> str:
    payload = {"sim": asdict(config), "seed": seed}
    if extra:
        payload["extra"] = extra
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _goal_still_frontier(state: SimState, radius: int) -> bool:
    """The goal stays valid while unknown space remains near its waypoint.

    Invalidation is pocket-based rather than predicate-based on the exact
    representative cell: the robot commits to the waypoint until the unknown
    region it points at has been observed (or the waypoint is reached). A
    predicate-strict check fires the moment the robot peeks at the goal from
    afar, which degenerates every planner into single-step dithering.
    """
    rep = state.goal.representative
    obs = state.observed
    if obs.cells[rep.y, rep.x] != CellState.FREE:
        return False
    x0, x1 = max(0, rep.x - radius), min(obs.geometry.width, rep.x + radius + 1)
    y0, y1 = max(0, rep.y - radius), min(obs.geometry.height, rep.y + radius + 1)
    return bool((obs.cells[y0:y1, x0:x1] == CellState.UNKNOWN).any())


def _path_blocked(state: SimState) -> bool:
    # Knowledge is monotone and paths run through observed-Free cells, so this
    # cannot fire under the noise-free sensor; kept as a safety trigger.
    for p in state.pending:
        if state.observed.cells[p.y, p.x] == CellState.OCCUPIED:
            return True
    return False


def step(
    state: SimState,
    config: SimConfig,
    world: GroundTruthGrid,
    seed: int,
) -> list[dict]:
    """One simulation step: sense, replan if needed, move one cell."""
    events: list[dict] = []
    lam = config.lidar_range_cells(world.geometry.resolution)
    scan = raycast_ground_truth(state.pose, lam, world, config.rays)
    update_from_scan(state.observed, state.pose, scan.traces)

    radius = max(1, int(round(config.goal_done_radius_m * world.geometry.resolution)))
    needs_replan = (
        state.goal is None
        or not state.pending
        or not _goal_still_frontier(state, radius)
        or _path_blocked(state)
    )
    if needs_replan:
        frontiers = extract_frontiers(state.observed, config.min_cluster)
        if not frontiers:
            state.complete = True
            state.goal = None
            state.pending = []
            events.append({"t": state.t, "kind": "complete"})
        else:
            if config.planner in PREDICTION_PLANNERS:
                state.ensemble = predict(
                    state.observed,
                    config.ensemble_size,
                    child_seed(seed, "predictor", state.replans),
                    config.predictor,
                    world=world,
                )
            pcfg = PlannerConfig(
                lidar_range=lam,
                rays=config.rays,
                epsilon=config.epsilon,
                stride=config.stride,
                workers=config.workers,
            )
            inp = PlannerInput(state.pose, state.observed, state.ensemble, frontiers, pcfg)
            goal, _scores = select(config.planner, inp)
            state.replans += 1
            if goal is None:
                state.stalled = True
                state.goal = None
                state.pending = []
                events.append({"t": state.t, "kind": "stall"})
            else:
                state.stalled = False
                path = astar(state.pose, goal.representative, state.observed)
                if path is None:  # point planners probe reachability, so this is defensive
                    state.stalled = True
                    events.append({"t": state.t, "kind": "stall"})
                else:
                    state.goal = goal
                    state.pending = list(path.poses[1:])
                    events.append({"t": state.t, "kind": "goal", "goal_id": goal.id,
                                    "x": goal.representative.x, "y": goal.representative.y})

    if state.pending:
        nxt = state.pending.pop(0)
        if world.occupied[nxt.y, nxt.x]:
            raise AssertionError("planned step into an occupied ground-truth cell")
        state.pose = nxt
    state.t += 1
    return events


def _eval_iou(
    observed: ObservedGrid,
    world: GroundTruthGrid,
    config: SimConfig,
    seed: int,
    counter: int,
) -> float:
    """Fresh prediction from the current observed map, scored against ground truth.

    Every planner is measured the same way (a new ensemble at each evaluation
    point), so map-quality comparisons are not skewed by replan cadence.
    """
    ens = predict(
        observed,
        config.ensemble_size,
        child_seed(seed, "eval", counter),
        config.predictor,
        world=world,
    )
    pred_occ = ens.fused.probs > OCCUPIED_PROB_THRESHOLD
    return buffered_iou(pred_occ, world.occupied, config.iou_buffer)


def run(
    world: GroundTruthGrid,
    start: Pose,
    config: SimConfig,
    seed: int = 0,
    map_class: str = "custom",
    initial_observed: Optional[ObservedGrid] = None,
    snapshot_sink=None,
) -> ExperimentRecord:
    """Run the loop until the budget is spent or exploration completes."""
    config.validate()
    if not world.geometry.contains(start.x, start.y) or world.occupied[start.y, start.x]:
        raise ValueError(f"start pose {start} is not a free world cell")
    t_begin = time.perf_counter()
    observed = initial_observed.copy() if initial_observed is not None else ObservedGrid(world.geometry)
    state = SimState(t=0, pose=start, observed=observed)
    record = ExperimentRecord(
        planner=config.planner,
        seed=seed,
        map_class=map_class,
        config_hash=config_hash(config, seed, {"map_class": map_class}),
    )
    evals = 0
    iou = _eval_iou(state.observed, world, config, seed, evals)
    evals += 1
    record.series.append((0, iou))
    record.known_series.append((0, known_fraction(state.observed)))
    stalls = 0

    while state.t < config.budget and not state.complete:
        t0 = time.perf_counter()
        events = step(state, config, world, seed)
        planning_ms = None
        for ev in events:
            record.events.append(ev)
            if ev["kind"] == "stall":
                stalls += 1
            if ev["kind"] in ("goal", "stall", "complete"):
                planning_ms = (time.perf_counter() - t0) * 1000.0
        evaluated = None
        if state.t % config.eval_every == 0 or state.complete or state.t >= config.budget:
            if record.series[-1][0] != state.t:
                evaluated = _eval_iou(state.observed, world, config, seed, evals)
                evals += 1
                record.series.append((state.t, evaluated))
                record.known_series.append((state.t, known_fraction(state.observed)))
        record.rows.append(
            (
                state.t,
                evaluated,
                known_fraction(state.observed),
                state.goal.id if state.goal is not None else None,
                planning_ms,
            )
        )
        if snapshot_sink is not None and config.snapshot_every and state.t % config.snapshot_every == 0:
            snapshot_sink(state)

    ts = [t for t, _ in record.series]
    vs = [v for _, v in record.series]
    record.summary = {
        "auc": auc(record.series, config.budget),
        "t90": time_to_threshold(record.series, 0.90, config.budget),
        "t95": time_to_threshold(record.series, 0.95, config.budget),
        "final_iou": vs[-1],
        "steps": state.t,
        "complete": state.complete,
        "stalls": stalls,
        "replans": state.replans,
    }
    record.summary["failed90"] = record.summary["t90"] is None
    record.summary["failed95"] = record.summary["t95"] is None
    record.wall_time = time.perf_counter() - t_begin
    return record
