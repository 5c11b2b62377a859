"""Command-line entry point.

Verbs:
  run    execute scenarios from a config (or the built-in standard suite) and
         write traces, metrics and plot-ready series under a run directory
  fit    fit the dipole field model to a hall-sensor scan CSV
  serve  start the live guidance session server
  check  run the acceptance suite, one pass/fail line per criterion

MAGPEN_THREADS caps the scenario worker pool (default 1).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import em
from .config import load_config
from .metrics import session_metrics
from .simulate import (ScenarioConfig, curvature_sweep, dispersion_experiment,
                       run_scenario)


def _run_dir(base, stamp=None):
    stamp = stamp or datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    d = Path(base) / stamp
    d.mkdir(parents=True, exist_ok=True)
    return d


def _execute_scenario(cfg: ScenarioConfig, out_dir: str):
    out = Path(out_dir)
    stem = f"{cfg.name}_{cfg.strategy}_seed{cfg.seed}"
    try:
        trace = run_scenario(cfg)
        trace.to_csv(out / f"{stem}.csv")
        trace.to_jsonl(out / f"{stem}.jsonl")
        path = cfg.build_path()
        if len(trace) >= 2:
            report = session_metrics(trace, path)
            report.to_json(out / f"{stem}.metrics.json")
            _write_series(trace, path, out / f"{stem}.series.csv")
            _write_hist(trace, path, out / f"{stem}.hist.csv")
        return stem, None
    except Exception as exc:  # recorded, run continues
        return stem, f"{type(exc).__name__}: {exc}"


def _write_series(trace, path, dest):
    from .metrics import nearest_point_distances
    poly = path.polyline()
    pen = trace.points("pen")
    mag = trace.points("mag")
    t = trace.column("t")
    theta = trace.column("theta")
    pen_path = nearest_point_distances(pen, poly)
    pen_em = np.linalg.norm(pen - mag, axis=1)
    hint = None
    along = np.empty(len(pen))
    for i, p in enumerate(pen):
        hint = path.closest_theta(p, hint_theta=hint)
        along[i] = abs(hint - theta[i])
    with open(dest, "w") as fh:
        fh.write("t,pen_path_mm,pen_setpoint_alongpath_mm,pen_em_mm\n")
        for row in zip(t, pen_path * 1e3, along * 1e3, pen_em * 1e3):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _write_hist(trace, path, dest, bins=40):
    from .metrics import nearest_point_distances
    d = nearest_point_distances(trace.points("pen"), path.polyline()) * 1e3
    counts, edges = np.histogram(d, bins=bins, range=(0.0, max(1.0, float(d.max()))))
    with open(dest, "w") as fh:
        fh.write("bin_lo_mm,bin_hi_mm,count\n")
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            fh.write(f"{lo!r},{hi!r},{int(c)}\n")


def cmd_run(args):
    try:
        cfg = load_config(args.config)
    except Exception as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = _run_dir(args.out or cfg.out_dir)
    with open(out / "config.resolved.json", "w") as fh:
        json.dump(cfg.resolved(), fh, indent=2)

    if args.scenario == "curvature_sweep":
        angles, errors = curvature_sweep(seed=args.seed or 0)
        with open(out / "curvature_sweep.csv", "w") as fh:
            fh.write("angle_deg,mean_error_m\n")
            for a, e in zip(angles, errors):
                fh.write(f"{float(a)!r},{float(e)!r}\n")
        print(f"curvature sweep: {len(angles)} levels -> {out}")
        return 0
    if args.scenario == "dispersion":
        mean, sd, _ = dispersion_experiment(seed=args.seed or 0)
        with open(out / "dispersion.json", "w") as fh:
            json.dump({"mean_offset_m": mean, "sd_offset_m": sd}, fh, indent=2)
        print(f"dispersion: mean {mean * 1e3:.2f} mm sd {sd * 1e3:.2f} mm -> {out}")
        return 0

    scenarios = cfg.scenarios(suite=args.suite, scenario=args.scenario,
                              seed=args.seed, strategy=args.strategy)
    if not scenarios:
        print("no scenarios selected", file=sys.stderr)
        return 2
    workers = max(1, int(os.environ.get("MAGPEN_THREADS", "1")))
    failures = []
    if workers == 1:
        results = [_execute_scenario(c, str(out)) for c in scenarios]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_execute_scenario, c, str(out)) for c in scenarios]
            results = [f.result() for f in futs]
    for stem, err in results:
        if err:
            failures.append((stem, err))
            print(f"FAIL {stem}: {err}")
        else:
            print(f"ok   {stem}")
    print(f"{len(results) - len(failures)}/{len(results)} scenarios completed -> {out}")
    return 1 if failures else 0


def cmd_fit(args):
    try:
        samples = em.read_field_scan(args.scan)
    except Exception as exc:
        print(f"scan error: {exc}", file=sys.stderr)
        return 2
    try:
        fit = em.fit_dipole(samples)
    except em.FitError as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        report = exc.fit.as_dict()
        report["converged"] = False
        if args.out:
            with open(args.out, "w") as fh:
                json.dump(report, fh, indent=2)
        return 1
    report = fit.as_dict()
    report["converged"] = True
    text = json.dumps(report, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    print(f"h = {fit.h * 1e2:.2f} cm, m_m = {fit.m_m:.3f} A m^2", file=sys.stderr)
    return 0


def cmd_serve(args):
    import uvicorn

    from .service import create_app

    app = create_app(trace_dir=args.out)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_check(args):
    from .acceptance import run_all

    results = run_all(only=args.only)
    failed = [r for r in results if not r.passed]
    return 1 if failed else 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog="magpen")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run simulation scenarios")
    p_run.add_argument("--config", default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--suite", default=None, choices=["standard"])
    p_run.add_argument("--scenario", default=None)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--strategy", default=None, choices=["ol", "mpc", "mpcc"])
    p_run.set_defaults(func=cmd_run)

    p_fit = sub.add_parser("fit", help="fit the dipole field to a scan CSV")
    p_fit.add_argument("scan")
    p_fit.add_argument("--out", default=None)
    p_fit.set_defaults(func=cmd_fit)

    p_serve = sub.add_parser("serve", help="start the live session server")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--out", default="runs/live")
    p_serve.set_defaults(func=cmd_serve)

    p_check = sub.add_parser("check", help="run the acceptance suite")
    p_check.add_argument("--only", default=None,
                         help="comma-separated criterion names")
    p_check.set_defaults(func=cmd_check)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
