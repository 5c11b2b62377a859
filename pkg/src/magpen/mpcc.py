"""Receding-horizon contouring controller.

Each tick solves an N-step constrained problem over magnet acceleration,
magnet intensity rate and path-progress rate, applies the first input, and
shifts the solution as the next warm start. Progress along the path is a
decision variable: the setpoint adapts to the pen instead of marching on a
clock. The solver is a single-shooting projected gradient with analytic
gradients (see _kernels), deterministic given identical inputs.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from .dynamics import (AdmissibleSets, ControlInput, KalmanConfig, PenEstimate,
                       SystemState, kalman_init, kalman_predict, kalman_update)
from .em import FORCE_SATURATION, actuation_force

DT_DEFAULT = 0.01  # control period [s]


# The weights are tuned against millimeter/millinewton-scale residuals (the
# scale of every tracking table in this problem); state stays SI, so the
# residuals are converted inside the cost. At this scaling the force residual
# dominates until realized, which is what makes the magnet actually deliver
# the demanded pull instead of hovering on top of the pen. The whole
# objective is then normalized by 1e-6 (minimizers unchanged) so stage costs
# stay O(1) and finite-difference gradient checks are well-conditioned.
_MM = 1e3
_MM2 = 1e6
_NORM = 1e-6


@dataclass(frozen=True)
class CostWeights:
    """Cost-term weights and horizon setup.

    Defaults are the tuned values used throughout: N=10, w_l=w_c=1.5,
    w_theta=10, w_theta_dot=0.1, w_f=10, w_d=0.05, w_alpha=7, spring
    stiffness c=5. Stage weight decays as horizon_decay^k; R penalizes raw
    input use (a_x, a_y, alpha_dot, theta_dot). Weights apply to mm-scale
    residuals; `effective()` gives the SI-equivalent multipliers.
    """

    w_l: float = 1.5
    w_c: float = 1.5
    w_theta: float = 10.0
    w_theta_dot: float = 0.1
    w_f: float = 10.0
    w_d: float = 0.05
    w_alpha: float = 7.0
    c: float = 5.0
    horizon_decay: float = 0.9
    R: tuple = (1e-3, 1e-3, 1e-2, 1e-3)
    N: int = 10

    def __post_init__(self):
        for name in ("w_l", "w_c", "w_theta", "w_theta_dot", "w_f", "w_d", "w_alpha"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be > 0")
        if not 0.0 < self.horizon_decay <= 1.0:
            raise ValueError("horizon_decay must be in (0, 1]")
        if any(r <= 0.0 for r in self.R) or len(self.R) != 4:
            raise ValueError("R must be 4 positive diagonal entries")
        if self.N < 2:
            raise ValueError("N must be >= 2")

    def effective(self):
        """Weight multipliers applied to SI quantities inside the cost."""
        return {
            "wl": self.w_l * _MM2 * _NORM,
            "wc": self.w_c * _MM2 * _NORM,
            "wth": self.w_theta * _MM * _NORM,
            "wtd": self.w_theta_dot * _MM2 * _NORM,
            "wf": self.w_f * _MM2 * _NORM,
            "wd": self.w_d * _MM2 * _NORM,
            "wa": self.w_alpha * _NORM,
        }

    def effective_R(self):
        return np.asarray(self.R, dtype=float) * _NORM


@dataclass(frozen=True)
class HorizonSolution:
    states: np.ndarray       # (N+1, 6)
    inputs: np.ndarray       # (N, 4)
    stage_costs: np.ndarray  # (N+1,) decayed stage costs, sum == total_cost
    total_cost: float
    iterations: int
    solve_time: float
    converged: bool


def desired_force(weights, model, pen_pos, target):
    """Spring pull toward the setpoint, saturated at the peak magnet force.

    F = c*F0/h * r directed pen->target, clamped to 0.9*F0 so the residual
    against the realizable actuation force stays achievable.
    """
    r = np.asarray(target, dtype=float) - np.asarray(pen_pos, dtype=float)
    rlen = math.hypot(r[0], r[1])
    if rlen == 0.0:
        return np.zeros(2)
    k = weights.c * model.F0 / model.h
    f_max = FORCE_SATURATION * model.F0
    if k * rlen <= f_max:
        return k * r
    return (f_max / rlen) * r


def _kern_args(weights, model):
    eff = weights.effective()
    eff.update(spring_k=weights.c * model.F0 / model.h,
               f_max=FORCE_SATURATION * model.F0, F0=model.F0, h=model.h)
    return eff


def stage_cost(weights, model, path, state, theta_dot, prev_theta_dot, pen_pred):
    """Stage cost J_k and its term breakdown for diagnostics."""
    x = state.as_array() if isinstance(state, SystemState) else np.asarray(state, float)
    pen = np.asarray(pen_pred, dtype=float)
    a = _kern_args(weights, model)
    J = K.stage_cost(path.knots, path.coeffs, x[0], x[1], x[4], x[5],
                     theta_dot, prev_theta_dot, pen[0], pen[1], **a)
    lc = path.lag_contour(x[5], pen)
    f_th = desired_force(weights, model, pen, path.eval(x[5])[0])
    f_a = actuation_force(model, min(max(x[4], 0.0), 1.0), pen, x[0:2])
    d = math.hypot(x[0] - pen[0], x[1] - pen[1])
    breakdown = {
        "lag": a["wl"] * lc.lag_sq,
        "contour": a["wc"] * lc.contour_sq,
        "progress": -a["wth"] * x[5],
        "progress_rate": a["wtd"] * (theta_dot - prev_theta_dot) ** 2,
        "force": a["wf"] * float(np.sum((f_th - f_a) ** 2)),
        "proximity": a["wd"] * d * d,
        "intensity": a["wa"] * x[4] ** 2,
    }
    return J, breakdown


def cost_gradient(weights, model, path, state, theta_dot, prev_theta_dot, pen_pred):
    """Analytic gradient of the stage cost w.r.t. (state[6], input[4]).

    Only theta_dot among the inputs enters the stage cost; acceleration and
    alpha_dot act through the dynamics and the separate R penalty.
    """
    x = state.as_array() if isinstance(state, SystemState) else np.asarray(state, float)
    pen = np.asarray(pen_pred, dtype=float)
    a = _kern_args(weights, model)
    _, gpx, gpy, gal, gth, gtd, _ = K.stage_cost_grad(
        path.knots, path.coeffs, x[0], x[1], x[4], x[5],
        theta_dot, prev_theta_dot, pen[0], pen[1], **a)
    return np.array([gpx, gpy, 0.0, 0.0, gal, gth, 0.0, 0.0, 0.0, gtd])


def solve(weights, model, path, x0, pen_est, sets=None, dt=DT_DEFAULT,
          warm=None, prev_theta_dot=0.0, max_iter=40, step_tol=1e-10,
          theta_dot_schedule=None, warm_shift=True):
    """Solve the horizon problem from state x0.

    pen_est may be a PenEstimate (constant-velocity extrapolation over the
    horizon) or a precomputed (N+1, 2) array of pen positions. warm is the
    previous HorizonSolution, shifted one stage (warm_shift=False reuses it
    in place, for re-solving the identical problem). theta_dot_schedule
    freezes the progress channel (timed-MPC baseline). Never raises on
    iteration cap: returns the best iterate with converged=False.
    """
    sets = sets or AdmissibleSets()
    N = weights.N
    x0v = x0.as_array() if isinstance(x0, SystemState) else np.asarray(x0, float).copy()

    if isinstance(pen_est, PenEstimate):
        pen = np.vstack([pen_est.p_p[None, :], kalman_predict(pen_est, N, dt)])
    else:
        pen = np.asarray(pen_est, dtype=float)
        if pen.shape != (N + 1, 2):
            raise ValueError(f"pen positions must be ({N + 1}, 2)")

    if warm is not None:
        if warm_shift:
            u_init = np.vstack([warm.inputs[1:], warm.inputs[-1:]])
        else:
            u_init = warm.inputs.copy()
    else:
        u_init = np.zeros((N, 4))
    free = np.ones(4)
    if theta_dot_schedule is not None:
        u_init[:, 3] = np.asarray(theta_dot_schedule, dtype=float)
        free[3] = 0.0

    xlo, xhi = sets.state_bounds(path.L)
    ulo, uhi = sets.input_bounds()
    a = _kern_args(weights, model)
    t0 = time.perf_counter()
    u, total, iters, converged = K.solve_pgd(
        path.knots, path.coeffs, x0v, u_init, pen, prev_theta_dot, dt,
        xlo, xhi, ulo, uhi, weights.horizon_decay, weights.effective_R(),
        a["wl"], a["wc"], a["wth"], a["wtd"], a["wf"], a["wd"], a["wa"],
        a["spring_k"], a["f_max"], a["F0"], a["h"],
        free, max_iter, step_tol)
    elapsed = time.perf_counter() - t0

    states, _, _ = K.rollout(x0v, u, dt, xlo, xhi)
    stage = K.stage_costs_seq(path.knots, path.coeffs, states, u, pen,
                              prev_theta_dot, dt, weights.horizon_decay,
                              weights.effective_R(),
                              a["wl"], a["wc"], a["wth"], a["wtd"], a["wf"],
                              a["wd"], a["wa"], a["spring_k"], a["f_max"],
                              a["F0"], a["h"])
    return HorizonSolution(states=states, inputs=u, stage_costs=stage,
                           total_cost=total, iterations=iters,
                           solve_time=elapsed, converged=converged)


@dataclass
class TickDiagnostics:
    theta: float
    setpoint: np.ndarray
    desired_force: np.ndarray
    total_cost: float
    stage_breakdown: dict
    solve_time: float
    iterations: int
    converged: bool
    measurement_clamped: bool


class Controller:
    """Closed-loop session driver: measure -> filter -> solve -> apply u_0.

    Owns the magnet state, the pen estimate and the warm start; one instance
    per session. Instances are independent and may run on separate threads.
    """

    def __init__(self, weights, model, path, sets=None, dt=DT_DEFAULT,
                 kalman=KalmanConfig(), max_iter=40, collect_breakdown=False):
        self.weights = weights
        self.model = model
        self.path = path
        self.sets = sets or AdmissibleSets()
        self.dt = dt
        self.kalman_cfg = kalman
        self.max_iter = max_iter
        self.collect_breakdown = collect_breakdown
        self.estimate = None
        self.theta_hat = None
        self.prev_theta_dot = 0.0
        self.warm = None
        start, _ = path.eval(0.0)
        self.state = SystemState(p_m=self.sets.clamp_point(start),
                                 v_m=np.zeros(2), alpha=0.0, theta=0.0)

    def control_tick(self, measurement, t=None):
        """One closed-loop tick; applies only the first optimized input."""
        z = np.asarray(measurement, dtype=float)
        zc = self.sets.clamp_point(z)
        clamped = bool(np.any(zc != z))
        if self.estimate is None:
            self.estimate = kalman_init(zc, self.kalman_cfg)
        else:
            self.estimate = kalman_update(self.estimate, zc, self.dt, self.kalman_cfg)

        if self.theta_hat is None:
            self.theta_hat = self.path.closest_theta(self.estimate.p_p)
        else:
            self.theta_hat = self.path.closest_theta(self.estimate.p_p,
                                                     hint_theta=self.theta_hat)

        x0 = replace(self.state, theta=self.theta_hat)
        sol = solve(self.weights, self.model, self.path, x0, self.estimate,
                    sets=self.sets, dt=self.dt, warm=self.warm,
                    prev_theta_dot=self.prev_theta_dot, max_iter=self.max_iter)
        self.warm = sol
        u0 = ControlInput.from_array(sol.inputs[0])
        self.state = SystemState.from_array(sol.states[1])

        setpoint, _ = self.path.eval(self.theta_hat)
        if self.collect_breakdown:
            _, breakdown = stage_cost(self.weights, self.model, self.path, x0,
                                      u0.theta_dot, self.prev_theta_dot,
                                      self.estimate.p_p)
        else:
            breakdown = {}
        self.prev_theta_dot = u0.theta_dot
        diag = TickDiagnostics(
            theta=self.theta_hat,
            setpoint=setpoint,
            desired_force=desired_force(self.weights, self.model,
                                        self.estimate.p_p, setpoint),
            total_cost=sol.total_cost,
            stage_breakdown=breakdown,
            solve_time=sol.solve_time,
            iterations=sol.iterations,
            converged=sol.converged,
            measurement_clamped=clamped,
        )
        return u0, diag
