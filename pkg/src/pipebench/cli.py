"""Command-line front end: single runs, batch sweeps, geometry oracle checks,
microbenchmarks and map generation.

Exit codes: 0 success, 2 usage error, 3 run failure, 4 oracle-check failure,
5 partial batch failure.
"""
from __future__ import annotations

import argparse
import json
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import multiprocessing as mp

from . import metrics, pgmio, report
from .grids import GroundTruthGrid, Pose
from .harness import bench_report, run_oracle_trials
from .metrics import ExperimentRecord, aggregate
from .planners import PLANNER_NAMES
from .predictors import PredictorConfig
from .seeds import child_seed
from .simulate import SimConfig, run
from .worlds import (
    FloorplanSpec,
    generate_floorplan,
    load_graymap,
    rasterize_floorplan,
    sample_free_poses,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUN_FAILURE = 3
EXIT_ORACLE_FAILURE = 4
EXIT_PARTIAL = 5


def load_config(path: str | Path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ImportError as e:  # Python < 3.11
            raise ValueError("TOML configs need Python 3.11+; use JSON") from e
        return tomllib.loads(text)
    return json.loads(text)


def resolve_world(spec: dict) -> tuple[GroundTruthGrid, str]:
    kind = spec.get("kind", "generate")
    if kind == "generate":
        map_class = spec.get("map_class", "small")
        plan = generate_floorplan(int(spec.get("seed", 0)), map_class, float(spec.get("resolution", 10.0)))
        return rasterize_floorplan(plan), map_class
    if kind == "graymap":
        data = Path(spec["path"]).read_bytes()
        return load_graymap(data, float(spec.get("resolution", 10.0))), spec.get("map_class", "custom")
    if kind == "floorplan":
        plan = FloorplanSpec.from_json(Path(spec["path"]).read_text())
        return rasterize_floorplan(plan), spec.get("map_class", "custom")
    raise ValueError(f"unknown world kind {kind!r}")


def build_sim_config(cfg: dict) -> SimConfig:
    sim = dict(cfg.get("sim", {}))
    pred = PredictorConfig(**cfg.get("predictor", {}))
    planner = cfg.get("planner", sim.pop("planner", "pipe"))
    if planner not in PLANNER_NAMES:
        raise ValueError(f"unknown planner {planner!r}; known: {', '.join(PLANNER_NAMES)}")
    return SimConfig(planner=planner, predictor=pred, workers=int(cfg.get("workers", 1)), **sim)


def _fmt_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_record(record: ExperimentRecord, out: Path, figures: bool = True) -> None:
    """Persist one run: delimited series, deterministic summary JSON, wall-clock
    timings in a sidecar, and rendered figures."""
    out.mkdir(parents=True, exist_ok=True)
    lines = ["t,iou,known_fraction,goal_id"]
    for t, iou, kf, goal_id, _ms in record.rows:
        lines.append(f"{t},{_fmt_cell(iou)},{_fmt_cell(kf)},{_fmt_cell(goal_id)}")
    (out / "series.csv").write_text("\n".join(lines) + "\n")

    tlines = ["t,planning_ms"]
    for t, _iou, _kf, _goal, ms in record.rows:
        if ms is not None:
            tlines.append(f"{t},{ms:.3f}")
    (out / "timings.csv").write_text("\n".join(tlines) + "\n")
    (out / "timings.json").write_text(
        json.dumps({"wall_time_s": record.wall_time}, sort_keys=True, indent=2) + "\n"
    )

    payload = {
        "planner": record.planner,
        "seed": record.seed,
        "map_class": record.map_class,
        "config_hash": record.config_hash,
        "summary": record.summary,
        "series": [[t, v] for t, v in record.series],
        "known_series": [[t, v] for t, v in record.known_series],
        "events": record.events,
    }
    (out / "summary.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    if figures:
        report.save_iou_curve(record, out / "figures" / "iou_curve.png")


def _run_one(cfg: dict, out: Path, planner_workers: int | None = None, figures: bool = True) -> ExperimentRecord:
    sim_cfg = build_sim_config(cfg)
    if planner_workers is not None:
        sim_cfg = replace(sim_cfg, workers=planner_workers)
    world, map_class = resolve_world(cfg.get("world", {}))
    seed = int(cfg.get("seed", 0))
    if "start" in cfg:
        start = Pose(int(cfg["start"][0]), int(cfg["start"][1]))
    else:
        start = sample_free_poses(world, 1, child_seed(seed, "starts"))[0]

    sink = None
    if sim_cfg.snapshot_every:
        snap_dir = out / "snapshots"
        snap_dir.mkdir(parents=True, exist_ok=True)

        def sink(state):
            (snap_dir / f"observed_{state.t:06d}.pgm").write_bytes(
                pgmio.observed_to_pgm(state.observed)
            )

    record = run(world, start, sim_cfg, seed, map_class, snapshot_sink=sink)
    write_record(record, out, figures=figures)
    return record


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config) if args.config else {}
        _apply_overrides(cfg, args)
        out = Path(cfg.get("out", "results/run"))
        record = _run_one(cfg, out)
    except (ValueError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception:
        traceback.print_exc()
        return EXIT_RUN_FAILURE
    s = record.summary
    print(
        f"{record.planner} on {record.map_class} seed={record.seed}: "
        f"steps={s['steps']} complete={s['complete']} auc={s['auc']:.2f} "
        f"t90={s['t90']} t95={s['t95']} -> {out}"
    )
    return EXIT_OK


def _batch_cell(payload: tuple) -> tuple[str, ExperimentRecord | None, str]:
    name, cfg, out_dir, planner_workers = payload
    try:
        rec = _run_one(cfg, Path(out_dir), planner_workers=planner_workers, figures=False)
        return name, rec, ""
    except Exception as e:
        return name, None, f"{type(e).__name__}: {e}"


def cmd_batch(args) -> int:
    try:
        cfg = load_config(args.config)
        _apply_overrides(cfg, args)
        worlds = cfg["worlds"]
        planners = cfg.get("planners", ["pipe"])
        seeds = [int(s) for s in cfg.get("seeds", [0])]
        for p in planners:
            if p not in PLANNER_NAMES:
                raise ValueError(f"unknown planner {p!r}")
        out = Path(cfg.get("out", "results/batch"))
        workers = int(cfg.get("workers", 1))
    except (ValueError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    cells = []
    for wi, wspec in enumerate(worlds):
        for planner in planners:
            for seed in seeds:
                cell_cfg = dict(cfg)
                for k in ("worlds", "planners", "seeds", "out", "workers"):
                    cell_cfg.pop(k, None)
                cell_cfg["world"] = wspec
                cell_cfg["planner"] = planner
                cell_cfg["seed"] = seed
                name = f"w{wi}_{planner}_s{seed}"
                cells.append((name, cell_cfg, str(out / "runs" / name), 1 if workers > 1 else None))

    records: list[ExperimentRecord] = []
    failures: list[tuple[str, str]] = []
    if workers > 1:
        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            for name, rec, err in pool.map(_batch_cell, cells):
                (records.append(rec) if rec is not None else failures.append((name, err)))
    else:
        for payload in cells:
            name, rec, err = _batch_cell(payload)
            (records.append(rec) if rec is not None else failures.append((name, err)))

    out.mkdir(parents=True, exist_ok=True)
    if records:
        rows = aggregate(records)
        (out / "auc_table.txt").write_text(metrics.auc_table_text(rows))
        (out / "threshold_table.txt").write_text(metrics.threshold_table_text(rows))
        (out / "tables.csv").write_text(metrics.table_csv(rows))
        horizon = max(r.summary["steps"] for r in records) or 1
        budget = int(cfg.get("sim", {}).get("budget", horizon))
        report.save_batch_curves(records, budget, out / "figures" / "curves.png")
        report.save_auc_bars(rows, out / "figures" / "auc.png")
        report.save_threshold_bars(rows, out / "figures" / "thresholds.png")
        print((out / "auc_table.txt").read_text())
        print((out / "threshold_table.txt").read_text())
    (out / "batch_summary.json").write_text(
        json.dumps(
            {
                "cells": len(cells),
                "completed": len(records),
                "failed": [{"cell": n, "error": e} for n, e in sorted(failures)],
            },
            sort_keys=True,
            indent=2,
        )
        + "\n"
    )
    if failures:
        for name, err in failures:
            print(f"cell {name} failed: {err}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    rep = run_oracle_trials(
        args.seed,
        args.trials,
        size=args.size,
        path_len=args.path_len,
        range_cells=args.range_cells,
        rays=args.rays,
    )
    print(
        f"oracle-check: {rep.trials} trials, max symmetric difference "
        f"{rep.max_diff} cells (allowed up to {rep.max_allowed}), {rep.elapsed_s:.1f}s"
    )
    if rep.ok:
        print("oracle-check: PASS")
        return EXIT_OK
    out = Path(args.out)
    for res in rep.failures:
        d = out / f"counterexample_{res.index:04d}"
        d.mkdir(parents=True, exist_ok=True)
        (d / "world.pgm").write_bytes(pgmio.ground_truth_to_pgm(res.world))
        (d / "oracle.pgm").write_bytes(pgmio.mask_to_pgm(res.oracle_mask))
        (d / "optimized.pgm").write_bytes(pgmio.mask_to_pgm(res.optimized_mask))
        (d / "path.json").write_text(json.dumps([[p.x, p.y] for p in res.poses]))
        report.save_mask_pair(res.oracle_mask, res.optimized_mask, d / "overlay.png")
        print(
            f"trial {res.index}: diff={res.diff_cells} allowed={res.allowed} "
            f"ring-adjacency={'ok' if res.adjacency_ok else 'VIOLATED'} -> {d}",
            file=sys.stderr,
        )
    return EXIT_ORACLE_FAILURE


def cmd_bench(args) -> int:
    result = bench_report(
        seed=args.seed,
        map_class=args.map_class,
        resolution=args.resolution,
        path_samples=args.path_samples,
        reps=args.reps,
        workers=tuple(args.workers),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bench.json").write_text(json.dumps(result, sort_keys=True, indent=2) + "\n")
    pm = result["path_mask"]
    sel = result["selection"]
    lines = [
        f"world: {result['world']['class']} {result['world']['width']}x{result['world']['height']} cells",
        f"path mask ({pm['samples']} samples): naive {pm['naive_s']:.3f}s, "
        f"merged {pm['union_s']:.3f}s, speedup {pm['speedup']:.2f}x",
        f"waypoint selection ({sel['frontiers']} frontiers): "
        + ", ".join(f"{w} workers: {t:.3f}s" for w, t in sorted(sel["times_s"].items())),
    ]
    if "reduction" in sel:
        lines.append(
            f"parallel reduction at {sel['parallel_workers']} workers: {100 * sel['reduction']:.1f}%"
        )
    text = "\n".join(lines) + "\n"
    (out / "bench.txt").write_text(text)
    report.save_bench_bars(result, out / "figures" / "bench.png")
    print(text, end="")
    return EXIT_OK


def cmd_gen_map(args) -> int:
    try:
        plan = generate_floorplan(args.seed, args.map_class, args.resolution)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(plan.to_json() + "\n")
    world = rasterize_floorplan(plan)
    if args.pgm:
        Path(args.pgm).write_bytes(pgmio.ground_truth_to_pgm(world))
    print(
        f"{args.map_class} floorplan seed={args.seed}: {world.geometry.width}x"
        f"{world.geometry.height} cells, {len(plan.walls)} walls, {len(plan.doors)} doors -> {out}"
    )
    return EXIT_OK


def _apply_overrides(cfg: dict, args) -> None:
    for key in ("planner", "seed", "workers", "out"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    sim = cfg.setdefault("sim", {})
    for key in ("budget", "eval_every", "stride", "rays"):
        val = getattr(args, key, None)
        if val is not None:
            sim[key] = val


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pipebench", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--planner", choices=PLANNER_NAMES)
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--out")
        p.add_argument("--budget", type=int)
        p.add_argument("--eval-every", dest="eval_every", type=int)
        p.add_argument("--stride", type=int)
        p.add_argument("--rays", type=int)

    p = sub.add_parser("run", help="single exploration run")
    p.add_argument("--config", help="JSON (or TOML) experiment config")
    add_common(p)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("batch", help="sweep of maps x planners x seeds")
    p.add_argument("--config", required=True)
    add_common(p)
    p.set_defaults(fn=cmd_batch)

    p = sub.add_parser("oracle-check", help="randomized merged-vs-per-point mask equivalence")
    p.add_argument("--trials", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--path-len", dest="path_len", type=int, default=50)
    p.add_argument("--range-cells", dest="range_cells", type=float, default=16.0)
    p.add_argument("--rays", type=int, default=360)
    p.add_argument("--out", default="results/oracle-check")
    p.set_defaults(fn=cmd_oracle_check)

    p = sub.add_parser("bench", help="path-mask and parallel-selection timing")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--map-class", dest="map_class", default="large",
                   choices=("small", "medium", "large"))
    p.add_argument("--resolution", type=float, default=10.0)
    p.add_argument("--path-samples", dest="path_samples", type=int, default=200)
    p.add_argument("--reps", type=_positive_int, default=3)
    p.add_argument("--workers", type=int, nargs="+", default=[1, 8])
    p.add_argument("--out", default="results/bench")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("gen-map", help="generate a floorplan JSON (and optional PGM)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--map-class", dest="map_class", default="small",
                   choices=("small", "medium", "large"))
    p.add_argument("--resolution", type=float, default=10.0)
    p.add_argument("--out", required=True)
    p.add_argument("--pgm")
    p.set_defaults(fn=cmd_gen_map)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
