"""Matplotlib figure rendering for run, batch and bench reports (Agg backend)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import ExperimentRecord  # noqa: E402

_DPI = 140


def _save(fig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)


def save_iou_curve(record: ExperimentRecord, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    ts = [t for t, _ in record.series]
    vs = [v for _, v in record.series]
    ax.plot(ts, vs, marker="o", ms=3, label="buffered IoU")
    if record.known_series:
        kt = [t for t, _ in record.known_series]
        kv = [v for _, v in record.known_series]
        ax.plot(kt, kv, ls="--", alpha=0.7, label="known fraction")
    ax.set_xlabel("time step")
    ax.set_ylabel("value")
    ax.set_ylim(0, 1.02)
    ax.set_title(f"{record.planner} seed={record.seed} ({record.map_class})")
    ax.grid(alpha=0.3)
    ax.legend()
    _save(fig, path)


def save_batch_curves(records: list[ExperimentRecord], horizon: int, path: Path) -> None:
    """Mean IoU-vs-time per planner (thin lines per run, thick mean)."""
    fig, ax = plt.subplots(figsize=(8, 4.5))
    grid = np.linspace(0, horizon, 200)
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    planners = sorted({r.planner for r in records})
    for i, planner in enumerate(planners):
        color = colors[i % len(colors)]
        curves = []
        for r in records:
            if r.planner != planner:
                continue
            ts = np.array([t for t, _ in r.series], dtype=float)
            vs = np.array([v for _, v in r.series], dtype=float)
            interp = np.interp(grid, ts, vs)
            curves.append(interp)
            ax.plot(grid, interp, color=color, alpha=0.15, lw=0.8)
        if curves:
            ax.plot(grid, np.mean(curves, axis=0), color=color, lw=2.2, label=planner)
    ax.set_xlabel("time step")
    ax.set_ylabel("buffered IoU")
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend()
    _save(fig, path)


def save_auc_bars(rows: list[dict], path: Path) -> None:
    classes = sorted({r["map_class"] for r in rows})
    planners = sorted({r["planner"] for r in rows})
    cell = {(r["planner"], r["map_class"]): r for r in rows}
    fig, ax = plt.subplots(figsize=(1.8 + 1.6 * len(classes), 4))
    width = 0.8 / max(1, len(planners))
    xs = np.arange(len(classes))
    for i, p in enumerate(planners):
        vals = [cell.get((p, c), {}).get("auc_mean") or 0.0 for c in classes]
        errs = [cell.get((p, c), {}).get("auc_ci") or 0.0 for c in classes]
        ax.bar(xs + i * width, vals, width, yerr=errs, capsize=3, label=p)
    ax.set_xticks(xs + 0.4 - width / 2)
    ax.set_xticklabels(classes)
    ax.set_ylabel("AUC of IoU")
    ax.legend(fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    _save(fig, path)


def save_threshold_bars(rows: list[dict], path: Path) -> None:
    classes = sorted({r["map_class"] for r in rows})
    planners = sorted({r["planner"] for r in rows})
    cell = {(r["planner"], r["map_class"]): r for r in rows}
    fig, axes = plt.subplots(1, 2, figsize=(3.2 + 2.2 * len(classes), 4), sharey=False)
    for ax, key, ci_key, title in (
        (axes[0], "t90_mean", "t90_ci", "steps to 90% IoU"),
        (axes[1], "t95_mean", "t95_ci", "steps to 95% IoU"),
    ):
        width = 0.8 / max(1, len(planners))
        xs = np.arange(len(classes))
        for i, p in enumerate(planners):
            vals = [cell.get((p, c), {}).get(key) or 0.0 for c in classes]
            errs = [cell.get((p, c), {}).get(ci_key) or 0.0 for c in classes]
            ax.bar(xs + i * width, vals, width, yerr=errs, capsize=3, label=p)
        ax.set_xticks(xs + 0.4 - width / 2)
        ax.set_xticklabels(classes)
        ax.set_title(title)
        ax.grid(axis="y", alpha=0.3)
    axes[0].legend(fontsize=8)
    _save(fig, path)


def save_bench_bars(result: dict, path: Path) -> None:
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    pm = result["path_mask"]
    axes[0].bar(["naive per-point", "merged union"], [pm["naive_s"], pm["union_s"]], color=["#c44", "#295"])
    axes[0].set_ylabel("seconds (median)")
    axes[0].set_title(f"path mask, {pm['samples']} samples (speedup {pm['speedup']:.2f}x)")
    sel = result["selection"]
    workers = sorted(sel["times_s"])
    axes[1].bar([str(w) for w in workers], [sel["times_s"][w] for w in workers], color="#359")
    axes[1].set_xlabel("workers")
    axes[1].set_title(f"waypoint selection, {sel['frontiers']} frontiers")
    for ax in axes:
        ax.grid(axis="y", alpha=0.3)
    _save(fig, path)


def save_mask_pair(oracle: np.ndarray, optimized: np.ndarray, path: Path) -> None:
    fig, axes = plt.subplots(1, 3, figsize=(12, 4.2))
    for ax, arr, title in (
        (axes[0], oracle, "per-point union"),
        (axes[1], optimized, "merged polygon"),
        (axes[2], oracle ^ optimized, "symmetric difference"),
    ):
        ax.imshow(arr, cmap="gray", interpolation="nearest")
        ax.set_title(title)
        ax.axis("off")
    _save(fig, path)
