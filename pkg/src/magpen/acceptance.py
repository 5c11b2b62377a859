"""Acceptance suite: the release gate, runnable via `magpen check`.

Each criterion is a function returning a CheckResult; the pytest module
tests/test_acceptance.py asserts each one and this module prints one
pass/fail line per criterion for the CLI. All tolerances are fixed here.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from . import em
from .dynamics import AdmissibleSets, SystemState, kalman_init
from .metrics import nearest_point_distances
from .mpcc import Controller, CostWeights, _kern_args, cost_gradient, solve
from .paths import make_shape
from .simulate import (ScenarioConfig, curvature_sweep, dispersion_experiment,
                       run_scenario, standard_suite)

TWO_H_MM = 54.2  # 2h with the reference hardware, in mm


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    elapsed: float = 0.0


def _result(name, passed, detail, t0):
    return CheckResult(name=name, passed=bool(passed), detail=detail,
                       elapsed=time.perf_counter() - t0)


def check_em_constants():
    """Pen dipole and force scale from the hardware parameters (0.5%)."""
    t0 = time.perf_counter()
    m = em.MagnetModel.from_hardware()
    ok_mp = abs(m.m_p - 0.683) / 0.683 < 5e-3
    ok_f0 = abs(m.F0 - 0.488) / 0.488 < 5e-3
    return _result("em_constants", ok_mp and ok_f0,
                   f"m_p={m.m_p:.4f} (ref 0.683), F0={m.F0:.4f} (ref 0.488)", t0)


def check_force_curve():
    """f0 peak in [0.913, 0.916] at u in [0.385, 0.395]; exact zeros at 0 and 2."""
    t0 = time.perf_counter()
    u = np.linspace(0.0, 2.0, 2_000_001)
    f = em.force_strength_ratio(u)
    i = int(np.argmax(f))
    u_ref = u[max(i - 2, 0):min(i + 3, len(u))]
    for _ in range(3):  # grid refinement around the peak
        u_ref = np.linspace(u_ref[0], u_ref[-1], 101)
        f_ref = em.force_strength_ratio(u_ref)
        j = int(np.argmax(f_ref))
        u_ref = u_ref[max(j - 2, 0):min(j + 3, len(u_ref))]
    u_max = float(u_ref[np.argmax(em.force_strength_ratio(u_ref))])
    f_max = float(em.force_strength_ratio(u_max))
    ok = (0.385 <= u_max <= 0.395 and 0.913 <= f_max <= 0.916
          and em.force_strength_ratio(0.0) == 0.0
          and em.force_strength_ratio(2.0) == 0.0)
    return _result("force_curve", ok,
                   f"max f0={f_max:.5f} at u={u_max:.5f}; f0(0)={em.force_strength_ratio(0.0)}, "
                   f"f0(2)={em.force_strength_ratio(2.0)}", t0)


def tilt_equivalent_shift(beta=math.pi / 6, gamma=0.0, n=2001):
    """Pointwise equivalent d-shift of the tilted curve vs the upright one.

    For each d in [0, 2h] the tilted in-plane force is matched against the
    upright curve extended oddly to signed separations (the force picture on
    a signed position axis); the shift at d is the smallest |d' - d|
    achieving the level. Returns (max shift over matchable levels, max shift
    including unmatchable levels as inf, peak tilted value, upright peak).
    """
    m = em.MagnetModel.from_hardware()
    ds = np.linspace(0.0, 2.0 * m.h, n)
    rho = m.h_p / m.h
    tilted = (em.force_strength_ratio(ds / m.h)
              + beta * math.cos(gamma) * em.tilt_gain(ds / m.h, rho))
    # signed upright curve on a dense grid
    dg = np.linspace(-2.2 * m.h, 2.2 * m.h, 450001)
    upright = np.sign(dg) * em.force_strength_ratio(np.abs(dg) / m.h)
    up_max = float(np.max(upright))
    worst_matched = 0.0
    worst = 0.0
    level_tol = 5e-4
    for d, ft in zip(ds, tilted):
        candidates = np.flatnonzero(np.abs(upright - ft) < level_tol)
        if len(candidates) == 0:
            worst = math.inf
            continue
        shift = float(np.min(np.abs(dg[candidates] - d)))
        worst_matched = max(worst_matched, shift)
        worst = max(worst, shift)
    return worst_matched, worst, float(np.max(tilted)), up_max


def check_tilt_model():
    """beta=0 equality to 1e-12; beta=30deg curve within a 3 mm d-shift.

    Expected red: with the reference geometry no pure d-shift reproduces the
    30-degree curve. The first-order tilt coefficient used here is validated
    against the exact trigonometric dipole force by finite differences, and
    even the exact model's curve sits ~3.6 mm (not <=3 mm) from the upright
    one at the zero crossing, while its peak exceeds the upright peak so some
    force levels are unmatchable by any shift.
    """
    t0 = time.perf_counter()
    m = em.MagnetModel.from_hardware()
    rng = np.random.default_rng(3)
    eq_err = 0.0
    for _ in range(200):
        pen = rng.uniform(0.0, 0.2, 2)
        mag = pen + rng.uniform(-0.05, 0.05, 2)
        a = em.actuation_force(m, 0.7, pen, mag)
        b = em.actuation_force_tilted(m, 0.7, pen, mag, 0.0, rng.uniform(0, 7))
        eq_err = max(eq_err, float(np.max(np.abs(a - b))))
    matched, worst, tilt_peak, up_peak = tilt_equivalent_shift()
    ok = eq_err <= 1e-12 and worst <= 3e-3
    detail = (f"beta=0 max err={eq_err:.2e} (<=1e-12); beta=30deg: "
              f"max shift over matchable levels={matched * 1e3:.2f} mm, "
              f"tilted peak={tilt_peak:.3f} vs upright peak={up_peak:.3f} "
              f"(levels above the upright peak are unmatchable by any shift); "
              f"limit 3.00 mm")
    return _result("tilt_model", ok, detail, t0)


def check_field_fit():
    """Recover (C1, C2) from synthetic scans: 0.1% noiseless, 5% at 1% noise."""
    t0 = time.perf_counter()
    c1, c2 = -1.276e-7, 2.713e-2
    ds = np.linspace(0.0, 4.0 * c2, 60)
    bz = em.field_bz(c1, c2, ds)
    fit = em.fit_dipole(np.column_stack([ds, bz]))
    e_clean = max(abs(fit.c1 - c1) / abs(c1), abs(fit.c2 - c2) / c2)

    peak = float(np.max(np.abs(bz)))
    errs = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        noisy = bz + rng.normal(0.0, 0.01 * peak, len(bz))
        f = em.fit_dipole(np.column_stack([ds, noisy]))
        errs.append(max(abs(f.c1 - c1) / abs(c1), abs(f.c2 - c2) / c2))
    e_noisy = float(np.median(errs))
    ok = e_clean < 1e-3 and e_noisy < 0.05
    return _result("field_fit", ok,
                   f"noiseless rel err={e_clean:.2e} (<1e-3); "
                   f"1%-noise median rel err={e_noisy:.3f} (<0.05); "
                   f"recovered h={fit.h * 1e2:.2f} cm, m_m={fit.m_m:.3f} A m^2", t0)


def check_gradient_suite(n_points=1000):
    """Analytic vs central finite-difference stage-cost gradients (rel 1e-4)."""
    t0 = time.perf_counter()
    path = make_shape("circle")
    model = em.MagnetModel.from_hardware()
    w = CostWeights()
    rng = np.random.default_rng(11)
    worst = 0.0
    h_rel = 1e-6
    for _ in range(n_points):
        x = np.array([rng.uniform(0.02, 0.21), rng.uniform(0.02, 0.11),
                      rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15),
                      rng.uniform(0.05, 0.95), rng.uniform(0.005, path.L - 0.005)])
        td = rng.uniform(0.001, 0.055)
        tdp = rng.uniform(0.0, 0.055)
        pen = np.array([rng.uniform(0.04, 0.19), rng.uniform(0.03, 0.1)])
        # keep away from the force cutoff kink (clamp boundary)
        d = np.hypot(x[0] - pen[0], x[1] - pen[1])
        if abs(d - 2.0 * model.h) < 1e-3 or d < 1e-4:
            continue
        g = cost_gradient(w, model, path, x, td, tdp, pen)
        fd = np.zeros(10)
        def J_of(xv, tdv):
            from .mpcc import stage_cost
            return stage_cost(w, model, path, xv, tdv, tdp, pen)[0]
        for j in range(6):
            step = h_rel * max(1.0, abs(x[j]))
            xp = x.copy(); xp[j] += step
            xm = x.copy(); xm[j] -= step
            fd[j] = (J_of(xp, td) - J_of(xm, td)) / (2.0 * step)
        step = h_rel * max(1.0, abs(td))
        fd[9] = (J_of(x, td + step) - J_of(x, td - step)) / (2.0 * step)
        scale = max(1e-6, float(np.max(np.abs(g))), float(np.max(np.abs(fd))))
        worst = max(worst, float(np.max(np.abs(g - fd))) / scale)
    ok = worst < 1e-4
    return _result("gradient_suite", ok,
                   f"worst relative gradient error={worst:.2e} over {n_points} points (<1e-4)", t0)


def check_solver_optimality(instances=50):
    """N=2 exhaustive 7^4-per-stage grid oracle; solver within 5%."""
    t0 = time.perf_counter()
    path = make_shape("circle")
    model = em.MagnetModel.from_hardware()
    w = CostWeights(N=2)
    sets = AdmissibleSets()
    a = _kern_args(w, model)
    args = (a["wl"], a["wc"], a["wth"], a["wtd"], a["wf"], a["wd"], a["wa"],
            a["spring_k"], a["f_max"], a["F0"], a["h"])
    xlo, xhi = sets.state_bounds(path.L)
    ulo, uhi = sets.input_bounds()
    grids = [np.linspace(ulo[j], uhi[j], 7) for j in range(4)]
    combos = np.array(np.meshgrid(*grids, indexing="ij")).reshape(4, -1).T.copy()
    rng = np.random.default_rng(2)
    worst_ratio = -np.inf
    failures = 0
    for _ in range(instances):
        x0 = np.array([rng.uniform(0.06, 0.17), rng.uniform(0.035, 0.095),
                       rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1),
                       rng.uniform(0.0, 1.0), rng.uniform(0.005, path.L - 0.01)])
        pen = x0[0:2] + rng.uniform(-0.02, 0.02, (3, 2))
        tdp = rng.uniform(0.0, 0.055)
        gmin = K.grid_min_two_stage(path.knots, path.coeffs, x0, combos, pen,
                                    tdp, 0.01, xlo, xhi, w.horizon_decay,
                                    w.effective_R(), *args)
        sol = solve(w, model, path, x0, pen, sets=sets, dt=0.01,
                    prev_theta_dot=tdp, max_iter=300)
        slack = gmin + 0.05 * abs(gmin)
        if sol.total_cost > slack:
            failures += 1
        gap = (sol.total_cost - gmin) / max(abs(gmin), 1e-12)
        worst_ratio = max(worst_ratio, gap)
    ok = failures == 0
    return _result("solver_optimality", ok,
                   f"{instances - failures}/{instances} instances within 5% of the "
                   f"grid optimum; worst relative gap={worst_ratio:+.3%}", t0)


def check_realtime_budget(ticks=1000):
    """Mean horizon solve < 10 ms, p99 < 20 ms at N=10."""
    t0 = time.perf_counter()
    cfg = ScenarioConfig(name="budget", shape="sinusoid", strategy="mpcc",
                         duration=ticks * 0.01, seed=4,
                         user={"v_c": 0.01, "sigma": 0.3e-3}, timing=True)
    trace = run_scenario(cfg)
    solve_ms = trace.column("solve_ms")
    mean = float(np.mean(solve_ms))
    p99 = float(np.percentile(solve_ms, 99))
    ok = mean < 10.0 and p99 < 20.0
    return _result("realtime_budget", ok,
                   f"mean solve={mean:.3f} ms (<10), p99={p99:.3f} ms (<20) over {len(solve_ms)} ticks", t0)


def check_error_correction():
    """10 mm off-path backward start recovers to <2 mm contour error within 3 s."""
    t0 = time.perf_counter()
    cfg = ScenarioConfig(name="errcorr", shape="circle", strategy="mpcc",
                         duration=3.0, seed=0, start_theta=0.05,
                         initial_offset=(7.07e-3, -7.07e-3),
                         initial_heading="none", user={"v_c": 0.1, "sigma": 0.0})
    trace = run_scenario(cfg)
    path = cfg.build_path()
    d = nearest_point_distances(trace.points("pen"), path.polyline())
    t = trace.column("t")
    below = t[d < 2e-3]
    recovered_at = float(below[0]) if len(below) else math.inf
    # sustained in the mean afterwards (single-tick spikes at the user's own
    # step quantum are tolerated, diverging again is not)
    tail = d[t >= recovered_at] if len(below) else d
    ok = recovered_at <= 3.0 and float(np.mean(tail)) < 2e-3
    return _result("error_correction", ok,
                   f"offset {d[0] * 1e3:.1f} mm -> <2 mm at t={recovered_at:.2f} s "
                   f"(limit 3 s); post-recovery mean={np.mean(tail) * 1e3:.2f} mm", t0)


def check_strategy_ordering(seeds=range(1, 21)):
    """Mean |pen-path| and |pen-em|: contouring beats both baselines; pause bound."""
    t0 = time.perf_counter()
    sums = {s: {"pp": [], "pe": []} for s in ("mpcc", "mpc", "ol")}
    for seed in seeds:
        for strat in ("mpcc", "mpc", "ol"):
            for cfg in standard_suite(seed, strat):
                trace = run_scenario(cfg)
                path = cfg.build_path()
                pen = trace.points("pen")
                mag = trace.points("mag")
                sums[strat]["pp"].append(
                    float(np.mean(nearest_point_distances(pen, path.polyline()))))
                sums[strat]["pe"].append(
                    float(np.mean(np.linalg.norm(pen - mag, axis=1))))
    pp = {s: float(np.mean(v["pp"])) for s, v in sums.items()}
    pe = {s: float(np.mean(v["pe"])) for s, v in sums.items()}

    pause_max = {}
    for strat in ("mpcc", "ol"):
        cfg = ScenarioConfig(name="pause", shape="circle", strategy=strat,
                             duration=10.0, seed=1, pause=(2.0, 5.0),
                             user={"v_c": 0.01, "sigma": 0.0})
        trace = run_scenario(cfg)
        pause_max[strat] = float(np.max(np.linalg.norm(
            trace.points("pen") - trace.points("mag"), axis=1)))
    two_h = 2.0 * em.MagnetModel.from_hardware().h
    ok = (pp["mpcc"] < pp["mpc"] and pp["mpcc"] < pp["ol"]
          and pe["mpcc"] < pe["mpc"] and pe["mpcc"] < pe["ol"]
          and pause_max["ol"] > two_h and pause_max["mpcc"] <= two_h)
    detail = (f"pen-path mm: mpcc={pp['mpcc'] * 1e3:.2f} mpc={pp['mpc'] * 1e3:.2f} "
              f"ol={pp['ol'] * 1e3:.2f}; pen-em mm: mpcc={pe['mpcc'] * 1e3:.2f} "
              f"mpc={pe['mpc'] * 1e3:.2f} ol={pe['ol'] * 1e3:.2f}; pause pen-em max: "
              f"ol={pause_max['ol'] * 1e3:.1f} mpcc={pause_max['mpcc'] * 1e3:.1f} "
              f"(2h={two_h * 1e3:.1f})")
    return _result("strategy_ordering", ok, detail, t0)


def check_curvature_sweep():
    """Mean error non-decreasing across 9 corner-sharpness levels."""
    t0 = time.perf_counter()
    angles, errors = curvature_sweep(levels=9)
    ok = bool(np.all(np.diff(errors) >= 0.0))
    return _result("curvature_sweep", ok,
                   "errors mm: " + " ".join(f"{e * 1e3:.4f}" for e in errors)
                   + f" over {angles[0]:.0f}..{angles[-1]:.0f} deg", t0)


def check_dispersion():
    """Friction threshold at the 2 mm force radius -> mean offset 2 +- 0.5 mm."""
    t0 = time.perf_counter()
    model = em.MagnetModel.from_hardware()
    d_star = 2e-3
    f_s = model.F0 * em.force_strength_ratio(d_star / model.h)
    mean, sd, _ = dispersion_experiment(repetitions=100, friction_threshold=f_s, seed=5)
    ok = abs(mean - 2e-3) <= 0.5e-3
    return _result("dispersion", ok,
                   f"mean offset={mean * 1e3:.2f} mm (target 2.0 +- 0.5), sd={sd * 1e3:.2f} mm; "
                   f"hardware reference 2.8 +- 0.8 mm is not desk-reproducible", t0)


def check_determinism(tmp_dir=None):
    """Same seed => byte-identical trace files."""
    import tempfile
    from pathlib import Path
    t0 = time.perf_counter()
    cfg = replace(standard_suite(7, "mpcc")[0], duration=5.0)
    with tempfile.TemporaryDirectory(dir=tmp_dir) as td:
        paths = []
        for i in range(2):
            trace = run_scenario(cfg)
            p_csv = Path(td) / f"run{i}.csv"
            p_jsonl = Path(td) / f"run{i}.jsonl"
            trace.to_csv(p_csv)
            trace.to_jsonl(p_jsonl)
            paths.append((p_csv.read_bytes(), p_jsonl.read_bytes()))
        ok = paths[0] == paths[1]
        nbytes = len(paths[0][0])
    return _result("determinism", ok,
                   f"two runs, {nbytes} CSV bytes each, byte-identical={ok}", t0)


ALL_CHECKS = [
    check_em_constants,
    check_force_curve,
    check_tilt_model,
    check_field_fit,
    check_gradient_suite,
    check_solver_optimality,
    check_realtime_budget,
    check_error_correction,
    check_strategy_ordering,
    check_curvature_sweep,
    check_dispersion,
    check_determinism,
]


def run_all(only=None):
    names = None
    if only:
        names = {n.strip() for n in only.split(",")}
    results = []
    for fn in ALL_CHECKS:
        name = fn.__name__.removeprefix("check_")
        if names and name not in names:
            continue
        res = fn()
        status = "PASS" if res.passed else "FAIL"
        print(f"[{status}] {res.name}: {res.detail} ({res.elapsed:.1f}s)")
        results.append(res)
    return results
