"""Deterministic closed-loop simulation.

The simulated user is the cooperative constant-velocity blend: each tick the
pen advances by v_c*dt along a weighted sum of its own normalized velocity
and the force direction. Scenario runs are pure functions of their config
(seed included): identical config => identical trace, byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import paths as P
from .baselines import OpenLoopController, TimedMPCController, TimedReference
from .dynamics import AdmissibleSets
from .em import MagnetModel, actuation_force, force_strength_ratio
from .mpcc import Controller, CostWeights, desired_force
from .trace import SessionTrace

STRATEGIES = ("ol", "mpc", "mpcc")


@dataclass
class SimulatedUser:
    """Cooperative user model.

    Step = v_c*dt*(w_v * p_v/|p_v| + w_m_eff * e_d) (+ optional jitter), where
    e_d is the force direction and p_v the realized velocity of the previous
    step. In 'paper-exact' mode any nonzero force contributes the full unit
    direction; 'force-proportional' scales w_m by min(1, |F|/f_max).
    """

    w_v: float = 1.0
    w_m: float = 1.0
    v_c: float = 0.1          # speed scale [m/s]
    sigma: float = 0.0        # per-step position jitter [m]
    mode: str = "paper-exact"
    f_max: float = 1.0        # saturation force for force-proportional mode [N]
    p_v: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        if self.w_v < 0.0 or self.w_m < 0.0 or (self.w_v == 0.0 and self.w_m == 0.0):
            raise ValueError("w_v, w_m must be >= 0 and not both zero")
        if self.v_c <= 0.0:
            raise ValueError("v_c must be > 0")
        if self.mode not in ("paper-exact", "force-proportional"):
            raise ValueError(f"unknown compliance mode {self.mode!r}")
        self.p_v = np.asarray(self.p_v, dtype=float)


def user_step(user: SimulatedUser, pen_pos, force, dt, rng=None):
    """Advance the pen one tick; updates user.p_v to the realized velocity."""
    pen = np.asarray(pen_pos, dtype=float)
    f = np.asarray(force, dtype=float)
    fn = math.hypot(f[0], f[1])
    if fn > 0.0:
        e_d = f / fn
        w_m = user.w_m
        if user.mode == "force-proportional":
            w_m *= min(1.0, fn / user.f_max)
    else:
        e_d = np.zeros(2)
        w_m = 0.0
    pvn = math.hypot(user.p_v[0], user.p_v[1])
    vdir = user.p_v / pvn if pvn > 0.0 else np.zeros(2)
    step = user.v_c * dt * (user.w_v * vdir + w_m * e_d)
    if user.sigma > 0.0 and rng is not None:
        step = step + rng.normal(0.0, user.sigma, 2)
    new = pen + step
    user.p_v = (new - pen) / dt
    return new


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    shape: str = "circle"
    shape_params: dict = field(default_factory=dict)
    waypoints_mm: list | None = None
    closed: bool = False
    strategy: str = "mpcc"
    duration: float = 20.0
    seed: int = 0
    dt: float = 0.01
    start_theta: float = 0.0
    initial_offset: tuple = (0.0, 0.0)   # (lateral, along-path) [m]
    initial_heading: str = "tangent"     # "tangent" starts the user stroking; "none" at rest
    user: dict = field(default_factory=dict)
    v_ref: float = 0.02
    pause: tuple | None = None           # (t_start, duration) [s]
    friction_threshold: float = 0.05     # F_s [N], dispersion experiment only
    alpha_scale: float = 1.0             # harness-side force scale (0 disables force)
    stop_at_completion: bool = False     # end the run once progress reaches the path end
    timing: bool = False                 # record wall-clock solve times in the trace
    weights: dict = field(default_factory=dict)
    sets: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)

    def build_path(self):
        if self.waypoints_mm is not None:
            return P.build_path(np.asarray(self.waypoints_mm, float) * 1e-3,
                                closed=self.closed)
        return P.make_shape(self.shape, **self.shape_params)


def _make_controller(cfg: ScenarioConfig, weights, model, path, sets):
    timed = TimedReference(v_ref=cfg.v_ref)
    if cfg.strategy == "mpcc":
        return Controller(weights, model, path, sets=sets, dt=cfg.dt)
    if cfg.strategy == "mpc":
        return TimedMPCController(weights, model, path, timed=timed,
                                  sets=sets, dt=cfg.dt)
    if cfg.strategy == "ol":
        return OpenLoopController(model, path, timed=timed, sets=sets, dt=cfg.dt)
    raise ValueError(f"unknown strategy {cfg.strategy!r} (expected one of {STRATEGIES})")


def initial_pen(cfg: ScenarioConfig, path):
    p, n = path.eval(cfg.start_theta)
    left = np.array([-n[1], n[0]])
    lateral, along = cfg.initial_offset
    return p + lateral * left + along * n


def run_scenario(cfg: ScenarioConfig) -> SessionTrace:
    """Full closed-loop run; solver failures are recorded, never fatal."""
    path = cfg.build_path()
    model = MagnetModel.from_hardware(**cfg.model)
    weights = CostWeights(**cfg.weights)
    sets = AdmissibleSets(**cfg.sets)
    controller = _make_controller(cfg, weights, model, path, sets)
    rng = np.random.default_rng(cfg.seed)
    user = SimulatedUser(f_max=model.max_force, **cfg.user)
    if cfg.initial_heading == "tangent" and not np.any(user.p_v):
        _, tangent = path.eval(cfg.start_theta)
        user.p_v = tangent * user.v_c

    pen = sets.clamp_point(initial_pen(cfg, path))
    trace = SessionTrace(meta={"scenario": cfg.name, "strategy": cfg.strategy,
                               "seed": cfg.seed})
    nticks = int(round(cfg.duration / cfg.dt))
    for i in range(nticks):
        t = i * cfg.dt
        _, diag = controller.control_tick(pen, t)
        state = controller.state
        fa = cfg.alpha_scale * actuation_force(model, state.alpha, pen, state.p_m)
        fth = desired_force(weights, model, pen, diag.setpoint)
        trace.append(
            t=t, pen_x=pen[0], pen_y=pen[1],
            est_x=controller.estimate.p_p[0], est_y=controller.estimate.p_p[1],
            mag_x=state.p_m[0], mag_y=state.p_m[1],
            alpha=state.alpha, theta=diag.theta,
            s_x=diag.setpoint[0], s_y=diag.setpoint[1],
            fa_x=fa[0], fa_y=fa[1], fth_x=fth[0], fth_y=fth[1],
            cost=diag.total_cost,
            solve_ms=diag.solve_time * 1e3 if cfg.timing else 0.0,
        )
        if cfg.stop_at_completion and diag.theta >= 0.995 * path.L:
            break
        paused = cfg.pause is not None and cfg.pause[0] <= t < cfg.pause[0] + cfg.pause[1]
        if paused:
            user.p_v = np.zeros(2)
        else:
            pen = sets.clamp_point(user_step(user, pen, fa, cfg.dt, rng))
    return trace


def dispersion_experiment(repetitions=100, friction_threshold=None, target=None,
                          seed=0, model=None, dt=0.01, magnet_speed=0.03,
                          pen_speed=0.05, spawn_radius=0.05):
    """Passive-pen centering dispersion.

    The magnet carries a passive pen from a random spawn back to the target;
    the pen creeps toward the magnet while the pull exceeds the static
    friction threshold F_s and sticks below it. Returns (mean, sd, offsets)
    of the final pen-to-target distances. With F_s=0 the pen lands exactly on
    the target; with F_s>0 it sticks near the radius where the force curve
    crosses F_s.
    """
    model = model or MagnetModel.from_hardware()
    if friction_threshold is None:
        friction_threshold = model.F0 * force_strength_ratio(2e-3 / model.h)
    rng = np.random.default_rng(seed)
    target = np.asarray(target, float) if target is not None else np.array(
        [P.WORKSPACE[0] / 2.0, P.WORKSPACE[1] / 2.0])
    offsets = np.empty(repetitions)
    for rep in range(repetitions):
        ang = rng.uniform(0.0, 2.0 * math.pi)
        rad = rng.uniform(0.3, 1.0) * spawn_radius
        magnet = target + rad * np.array([math.cos(ang), math.sin(ang)])
        pen = magnet.copy()
        for _ in range(int(60.0 / dt)):
            to_target = target - magnet
            gap = np.linalg.norm(to_target)
            if gap > 0.0:
                stepm = min(magnet_speed * dt, gap)
                magnet = magnet + stepm * to_target / gap
            f = actuation_force(model, 1.0, pen, magnet)
            fn = np.linalg.norm(f)
            moved = False
            if fn >= friction_threshold and fn > 0.0:
                d = np.linalg.norm(magnet - pen)
                stepp = min(pen_speed * dt, d)
                if stepp > 0.0:
                    pen = pen + stepp * (magnet - pen) / d
                    moved = True
            if gap == 0.0 and not moved:
                break
        offsets[rep] = np.linalg.norm(pen - target)
    return float(np.mean(offsets)), float(np.std(offsets)), offsets


def curvature_sweep(levels=9, angle_range=(10.0, 78.0), v_c=0.1, duration=None,
                    dt=0.01, seed=0, phases=12, arm=0.03):
    """Mean tracing error on reference corners of increasing sharpness.

    Arm length is fixed across levels so path length and the straight-line
    travel are identical and only the turn angle varies; the range stays
    below ~80 deg where the narrowing wedge starts capping point-to-path
    distances and the metric saturates. Each level is averaged over several
    start offsets to wash out tick-phase artifacts of the tracking limit
    cycle. Returns (angles_deg, mean_errors).
    """
    if levels < 2:
        raise ValueError("need at least 2 levels")
    angles = np.linspace(angle_range[0], angle_range[1], levels)
    errors = np.empty(levels)
    for i, ang in enumerate(angles):
        cfg = ScenarioConfig(
            name=f"corner_{ang:.1f}", shape="corner",
            shape_params={"angle_deg": float(ang), "arm": arm},
            strategy="mpcc", seed=seed, dt=dt,
            duration=duration if duration is not None else 8.0,
            user={"v_c": v_c, "sigma": 0.0},
            stop_at_completion=True,
        )
        path = cfg.build_path()
        vals = []
        for p in range(phases):
            cfg_p = replace(cfg, start_theta=p * 0.25e-3)
            trace = run_scenario(cfg_p)
            vals.append(mean_path_distance(trace.points("pen"), path))
        errors[i] = float(np.mean(vals))
    return angles, errors


def mean_path_distance(points, path, step=0.5e-3):
    """Mean distance from the points to the path's dense polyline."""
    poly = path.polyline(step)
    return float(np.mean(_nearest_dists(points, poly)))


def _nearest_dists(points, poly):
    a = poly[:-1]
    b = poly[1:]
    ab = b - a
    denom = np.maximum(np.sum(ab * ab, axis=1), 1e-300)
    pts = np.asarray(points, dtype=float)
    out = np.empty(len(pts))
    for i, p in enumerate(pts):
        ap = p - a
        t = np.clip(np.sum(ap * ab, axis=1) / denom, 0.0, 1.0)
        proj = a + t[:, None] * ab
        out[i] = np.sqrt(np.min(np.sum((proj - p) ** 2, axis=1)))
    return out


def standard_suite(seed, strategy):
    """Study shapes with seed-varied user pace and light jitter.

    The per-seed pace spreads both sides of the baselines' 0.02 m/s schedule
    speed, the regime where timed references either run away from a slow user
    or drag a fast one, while the time-free controller adapts.
    """
    rng = np.random.default_rng(seed)
    v_c = float(rng.uniform(0.004, 0.012))
    configs = []
    for shape in ("circle", "spiral", "sinusoid"):
        configs.append(ScenarioConfig(
            name=f"standard_{shape}", shape=shape, strategy=strategy,
            duration=12.0, seed=seed, dt=0.01,
            user={"v_c": v_c, "sigma": 0.3e-3},
        ))
    return configs
