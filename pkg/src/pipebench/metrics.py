"""Exploration metrics: buffered IoU, AUC, time-to-threshold and aggregation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage


@dataclass
class ExperimentRecord:
    """Everything one simulated run produced.

    ``series`` holds (t, iou) at evaluation points; ``rows`` holds one entry
    per simulation step: (t, iou-or-None, known_fraction, goal_id-or-None,
    planning_ms-or-None). Wall-clock fields are kept apart from the summary so
    reruns with the same seed serialize byte-identically.
    """

    planner: str
    seed: int
    map_class: str
    config_hash: str
    series: list[tuple[int, float]] = field(default_factory=list)
    known_series: list[tuple[int, float]] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    rows: list[tuple] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    wall_time: float = 0.0


def buffered_iou(pred_occupied: np.ndarray, gt_occupied: np.ndarray, buffer: int = 2) -> float:
    """IoU = TP / (TP + FP + FN) over occupied cells with a Chebyshev tolerance.

    A predicted cell counts as TP when a ground-truth occupied cell lies
    within `buffer` cells of it; a ground-truth cell counts as FN when no
    predicted cell lies within `buffer`. All-empty masks score 1.0.
    """
    pred = np.asarray(pred_occupied, dtype=bool)
    gt = np.asarray(gt_occupied, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError(f"geometry mismatch: {pred.shape} vs {gt.shape}")
    if buffer < 0:
        raise ValueError("buffer must be >= 0")
    if buffer == 0:
        gt_near, pred_near = gt, pred
    else:
        size = 2 * buffer + 1
        gt_near = ndimage.maximum_filter(gt.astype(np.uint8), size=size) > 0
        pred_near = ndimage.maximum_filter(pred.astype(np.uint8), size=size) > 0
    tp = int(np.count_nonzero(pred & gt_near))
    fp = int(np.count_nonzero(pred & ~gt_near))
    fn = int(np.count_nonzero(gt & ~pred_near))
    denom = tp + fp + fn
    return 1.0 if denom == 0 else tp / denom


def auc(series: Sequence[tuple[int, float]], horizon: int) -> float:
    """Trapezoidal area under the interpolated IoU curve over [0, horizon],
    holding the boundary values flat outside the evaluated range."""
    if not series:
        raise ValueError("empty series")
    ts = np.array([t for t, _ in series], dtype=np.float64)
    vs = np.array([v for _, v in series], dtype=np.float64)
    if np.any(np.diff(ts) <= 0):
        raise ValueError("series must be strictly increasing in t")
    if ts[-1] > horizon:
        raise ValueError("series extends past the horizon")
    if ts[0] > 0:
        ts = np.concatenate([[0.0], ts])
        vs = np.concatenate([[vs[0]], vs])
    if ts[-1] < horizon:
        ts = np.concatenate([ts, [float(horizon)]])
        vs = np.concatenate([vs, [vs[-1]]])
    return float(np.trapezoid(vs, ts))


def time_to_threshold(
    series: Sequence[tuple[int, float]], theta: float, budget: int
) -> Optional[int]:
    """First step at which the interpolated IoU reaches theta (rounded up);
    None when the threshold is never attained within the budget."""
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must be in (0, 1]")
    prev_t: Optional[int] = None
    prev_v = 0.0
    for t, v in series:
        if t > budget:
            break
        if v >= theta:
            if prev_t is None or prev_v >= theta:
                return int(t)
            frac = (theta - prev_v) / (v - prev_v)
            return int(math.ceil(prev_t + frac * (t - prev_t)))
        prev_t, prev_v = t, v
    return None


def _mean_ci(values: list[float]) -> tuple[Optional[float], Optional[float]]:
    if not values:
        return None, None
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    if len(arr) < 2:
        return mean, 0.0
    ci = 1.96 * float(arr.std(ddof=1)) / math.sqrt(len(arr))
    return mean, ci


def aggregate(records: Sequence[ExperimentRecord]) -> list[dict]:
    """Per (planner, map class) means with normal-approximation 95% CIs.

    Runs that never reached a threshold are excluded from that threshold's
    mean and reported through the failure rate instead.
    """
    if not records:
        raise ValueError("no records to aggregate")
    groups: dict[tuple[str, str], list[ExperimentRecord]] = {}
    for r in records:
        groups.setdefault((r.planner, r.map_class), []).append(r)
    rows = []
    for (planner, map_class) in sorted(groups):
        recs = groups[(planner, map_class)]
        n = len(recs)
        auc_mean, auc_ci = _mean_ci([r.summary["auc"] for r in recs])
        t90 = [r.summary["t90"] for r in recs if r.summary["t90"] is not None]
        t95 = [r.summary["t95"] for r in recs if r.summary["t95"] is not None]
        t90_mean, t90_ci = _mean_ci([float(v) for v in t90])
        t95_mean, t95_ci = _mean_ci([float(v) for v in t95])
        rows.append(
            {
                "planner": planner,
                "map_class": map_class,
                "n": n,
                "auc_mean": auc_mean,
                "auc_ci": auc_ci,
                "t90_mean": t90_mean,
                "t90_ci": t90_ci,
                "fr90": (n - len(t90)) / n,
                "t95_mean": t95_mean,
                "t95_ci": t95_ci,
                "fr95": (n - len(t95)) / n,
            }
        )
    return rows


def _fmt(v, digits=2) -> str:
    if v is None:
        return "-"
    return f"{v:.{digits}f}"


def auc_table_text(rows: list[dict]) -> str:
    """Fixed-width AUC summary, one planner per line, one column per map class."""
    classes = sorted({r["map_class"] for r in rows})
    planners = sorted({r["planner"] for r in rows})
    cell = {(r["planner"], r["map_class"]): r for r in rows}
    head = "AUC of IoU (higher is better)"
    lines = [head, ""]
    lines.append(f"{'method':<12}" + "".join(f"{c:>18}" for c in classes))
    for p in planners:
        vals = []
        for c in classes:
            r = cell.get((p, c))
            vals.append("-" if r is None else f"{_fmt(r['auc_mean'])} ± {_fmt(r['auc_ci'])}")
        lines.append(f"{p:<12}" + "".join(f"{v:>18}" for v in vals))
    return "\n".join(lines) + "\n"


def threshold_table_text(rows: list[dict]) -> str:
    """Steps to 90%/95% IoU with failure rates, one block per map class."""
    classes = sorted({r["map_class"] for r in rows})
    planners = sorted({r["planner"] for r in rows})
    cell = {(r["planner"], r["map_class"]): r for r in rows}
    lines = ["Steps to reach IoU thresholds (lower is better; failures excluded from means)"]
    for c in classes:
        lines.append("")
        lines.append(f"map class: {c}")
        lines.append(
            f"{'method':<12}{'90% IoU':>18}{'FR%':>8}{'95% IoU':>18}{'FR%':>8}"
        )
        for p in planners:
            r = cell.get((p, c))
            if r is None:
                continue
            t90 = "-" if r["t90_mean"] is None else f"{_fmt(r['t90_mean'], 0)} ± {_fmt(r['t90_ci'], 0)}"
            t95 = "-" if r["t95_mean"] is None else f"{_fmt(r['t95_mean'], 0)} ± {_fmt(r['t95_ci'], 0)}"
            lines.append(
                f"{p:<12}{t90:>18}{100 * r['fr90']:>8.0f}{t95:>18}{100 * r['fr95']:>8.0f}"
            )
    return "\n".join(lines) + "\n"


def table_csv(rows: list[dict]) -> str:
    cols = [
        "planner", "map_class", "n", "auc_mean", "auc_ci",
        "t90_mean", "t90_ci", "fr90", "t95_mean", "t95_ci", "fr95",
    ]
    out = [",".join(cols)]
    for r in rows:
        vals = []
        for c in cols:
            v = r[c]
            vals.append("" if v is None else (repr(v) if isinstance(v, float) else str(v)))
        out.append(",".join(vals))
    return "\n".join(out) + "\n"
