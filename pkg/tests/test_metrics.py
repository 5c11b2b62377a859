import math

import numpy as np
import pytest

import magpen
from magpen.metrics import (hausdorff_like, nearest_point_distances,
                            polyline_length, resample_equidistant,
                            session_metrics)
from magpen.simulate import ScenarioConfig, run_scenario
from magpen.trace import COLUMNS, SessionTrace


def test_resample_segment_eleven_points():
    poly = np.array([[0.0, 0.0], [1.0, 0.0]])
    out = resample_equidistant(poly, 0.1)
    assert len(out) == 11
    assert np.allclose(np.diff(out[:, 0]), 0.1, atol=1e-9)


def test_resample_preserves_length_and_endpoints():
    # smooth curve: chordal resampling preserves length to well below 1e-6
    t = np.linspace(0, 1.5 * np.pi, 6000)
    poly = 0.05 * np.column_stack([np.cos(t), np.sin(t)])
    out = resample_equidistant(poly, 0.25e-3)
    assert polyline_length(out) == pytest.approx(polyline_length(poly), abs=1e-6)
    assert np.allclose(out[0], poly[0]) and np.allclose(out[-1], poly[-1])
    seg = np.linalg.norm(np.diff(out, axis=0), axis=1)
    assert np.all(seg[:-1] == pytest.approx(0.25e-3, abs=1e-9))


def test_resample_already_equidistant_unchanged():
    poly = np.column_stack([np.arange(11) * 0.1, np.zeros(11)])
    out = resample_equidistant(poly, 0.1)
    assert np.allclose(out, poly, atol=1e-9)


def test_resample_errors():
    with pytest.raises(ValueError):
        resample_equidistant(np.array([[0.0, 0.0]]), 0.1)
    with pytest.raises(ValueError):
        resample_equidistant(np.array([[0.0, 0.0], [0.0, 0.0]]), 0.1)
    with pytest.raises(ValueError):
        resample_equidistant(np.array([[0.0, 0.0], [1.0, 0.0]]), 0.0)


def test_hausdorff_identical_curves():
    t = np.linspace(0, 2 * np.pi, 300)
    circle = 0.05 * np.column_stack([np.cos(t), np.sin(t)])
    d1, d2 = hausdorff_like(circle, circle)
    assert d1 == pytest.approx(0.0, abs=1e-12)
    assert d2 == pytest.approx(0.0, abs=1e-12)


def test_hausdorff_parallel_lines():
    a = np.array([[0.0, 0.0], [0.5, 0.0]])
    b = np.array([[0.0, 3e-3], [0.5, 3e-3]])
    d1, d2 = hausdorff_like(a, b)
    assert d1 == pytest.approx(3e-3, rel=1e-9)
    assert d2 == pytest.approx(3e-3, rel=1e-9)


def test_hausdorff_symmetry_under_swap():
    rng = np.random.default_rng(1)
    a = np.cumsum(rng.uniform(-5e-3, 5e-3, (50, 2)), axis=0)
    b = a + rng.uniform(-1e-3, 1e-3, a.shape)
    d1, d2 = hausdorff_like(a, b)
    s2, s1 = hausdorff_like(b, a)
    assert d1 == pytest.approx(s1, rel=1e-12)
    assert d2 == pytest.approx(s2, rel=1e-12)


def test_hausdorff_noisy_circle_matches_bruteforce_oracle():
    t = np.linspace(0, 2 * np.pi, 720, endpoint=False)
    r = 0.05
    ref = r * np.column_stack([np.cos(t), np.sin(t)])
    ref = np.vstack([ref, ref[:1]])
    rng = np.random.default_rng(2)
    noise = rng.uniform(-1e-3, 1e-3, len(t))
    drawn = (r + noise)[:, None] * np.column_stack([np.cos(t), np.sin(t)])
    drawn = np.vstack([drawn, drawn[:1]])
    d1, _ = hausdorff_like(drawn, ref, step=0.25e-3)
    # brute-force oracle: dense resample, exhaustive nearest point
    dpts = resample_equidistant(drawn, 0.25e-3)
    dense_ref = resample_equidistant(ref, 0.05e-3)
    dists = [np.min(np.linalg.norm(dense_ref - p, axis=1)) for p in dpts]
    assert d1 == pytest.approx(float(np.mean(dists)), rel=2e-2)
    # same scale as the injected radial noise
    assert 0.5 * np.mean(np.abs(noise)) < d1 < 1.5 * np.mean(np.abs(noise))


def test_metric_rigid_invariance():
    rng = np.random.default_rng(3)
    a = np.cumsum(rng.uniform(-5e-3, 5e-3, (60, 2)), axis=0)
    b = a + rng.uniform(-2e-3, 2e-3, a.shape)
    phi = 0.7
    R = np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]])
    shift = np.array([0.3, -0.1])
    d = hausdorff_like(a, b)
    d_rot = hausdorff_like(a @ R.T + shift, b @ R.T + shift)
    assert d[0] == pytest.approx(d_rot[0], abs=1e-9)
    assert d[1] == pytest.approx(d_rot[1], abs=1e-9)


def test_step_refinement_stability():
    t = np.linspace(0, 2 * np.pi, 400)
    a = 0.05 * np.column_stack([np.cos(t), np.sin(t)])
    b = 0.052 * np.column_stack([np.cos(t), np.sin(t)])
    coarse = hausdorff_like(a, b, step=1e-3)[0]
    fine = hausdorff_like(a, b, step=0.25e-3)[0]
    assert abs(coarse - fine) / fine < 0.02


def _synthetic_trace(path, offsets, magnet_offset):
    trace = SessionTrace()
    n = 60
    for i in range(n):
        th = path.L * i / (n - 1) * 0.9
        p, nvec = path.eval(th)
        left = np.array([-nvec[1], nvec[0]])
        pen = p + offsets * left
        trace.append(t=i * 0.01, pen_x=pen[0], pen_y=pen[1], est_x=pen[0],
                     est_y=pen[1], mag_x=pen[0] + magnet_offset, mag_y=pen[1],
                     alpha=0.5, theta=th, s_x=p[0], s_y=p[1], fa_x=0, fa_y=0,
                     fth_x=0, fth_y=0, cost=0.0, solve_ms=0.0)
    return trace


def test_session_metrics_glued_pen():
    path = magpen.make_shape("circle")
    trace = _synthetic_trace(path, offsets=0.0, magnet_offset=0.0)
    rep = session_metrics(trace, path)
    assert rep.mean_pen_path == pytest.approx(0.0, abs=1e-6)
    assert rep.mean_pen_setpoint_alongpath == pytest.approx(0.0, abs=1e-3)
    assert rep.mean_pen_em == 0.0
    assert rep.frac_em_beyond_15mm == 0.0


def test_session_metrics_far_magnet():
    path = magpen.make_shape("circle")
    trace = _synthetic_trace(path, offsets=0.0, magnet_offset=0.02)
    rep = session_metrics(trace, path)
    assert rep.frac_em_beyond_15mm == 1.0
    assert rep.mean_pen_em == pytest.approx(0.02, rel=1e-9)


def test_session_metrics_match_independent_recompute():
    cfg = ScenarioConfig(name="golden", shape="sinusoid", duration=4.0, seed=9,
                         user={"v_c": 0.02, "sigma": 0.3e-3})
    trace = run_scenario(cfg)
    path = cfg.build_path()
    rep = session_metrics(trace, path)

    # straightforward recomputation from the raw rows
    pen = trace.points("pen")
    mag = trace.points("mag")
    theta = trace.column("theta")
    poly = path.polyline(0.5e-3)
    d = nearest_point_distances(pen, poly)
    assert rep.mean_pen_path == pytest.approx(float(np.mean(d)), rel=1e-9)
    assert rep.sd_pen_path == pytest.approx(float(np.std(d)), rel=1e-9)
    pe = np.linalg.norm(pen - mag, axis=1)
    assert rep.mean_pen_em == pytest.approx(float(np.mean(pe)), rel=1e-9)
    assert rep.frac_em_beyond_15mm == pytest.approx(float(np.mean(pe > 15e-3)), abs=1e-12)
    along = []
    hint = None
    for i, p in enumerate(pen):
        hint = path.closest_theta(p, hint_theta=hint)
        along.append(abs(hint - theta[i]))
    assert rep.mean_pen_setpoint_alongpath == pytest.approx(float(np.mean(along)), rel=1e-9)


def test_session_metrics_empty_trace_rejected():
    path = magpen.make_shape("line")
    with pytest.raises(ValueError):
        session_metrics(SessionTrace(), path)


def test_report_serialization(tmp_path):
    path = magpen.make_shape("circle")
    trace = _synthetic_trace(path, offsets=1e-3, magnet_offset=5e-3)
    rep = session_metrics(trace, path)
    f = tmp_path / "report.json"
    rep.to_json(f)
    import json
    data = json.loads(f.read_text())
    assert data["mean_pen_em"] == rep.mean_pen_em
    header, row = rep.csv_row()
    assert len(header.split(",")) == len(row.split(","))
