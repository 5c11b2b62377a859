"""Timed reference strategies used as comparison baselines.

Open-loop: the magnet rides a schedule along the path at full strength and
ignores the pen entirely (the permanent-magnet-rig analog). Timed MPC: the
same horizon problem as the contouring controller, but the progress variable
is pinned to the schedule instead of being optimized, so the setpoint cannot
adapt to the user's pace.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dynamics import AdmissibleSets, ControlInput, SystemState
from .mpcc import Controller, solve


@dataclass(frozen=True)
class TimedReference:
    v_ref: float = 0.02   # setpoint speed along the path [m/s]
    start: float = 0.0    # schedule start time [s]

    def __post_init__(self):
        # v_ref = 0 is allowed and degenerates to a static attractor at s(0)
        if self.v_ref < 0.0:
            raise ValueError("v_ref must be >= 0")

    def theta_at(self, path_length, t):
        return min(max(self.v_ref * (t - self.start), 0.0), path_length)


def open_loop_tick(path, timed: TimedReference, t):
    """Magnet command for the open-loop strategy: position = setpoint, full power."""
    theta = timed.theta_at(path.L, t)
    target, _ = path.eval(theta)
    return target, 1.0, theta


def mpc_tick(weights, model, path, timed, x0, pen_est, t, sets=None,
             dt=0.01, warm=None, prev_theta_dot=0.0, max_iter=40):
    """One timed-MPC solve: theta_k follows the schedule as a constant.

    Identical costs and constraints to the contouring solve; only magnet
    motion and intensity are optimized.
    """
    sets = sets or AdmissibleSets()
    theta0 = timed.theta_at(path.L, t)
    thetas = np.minimum(timed.v_ref * (t + dt * np.arange(weights.N + 1) - timed.start),
                        path.L)
    thetas = np.maximum(thetas, 0.0)
    schedule = np.diff(thetas) / dt
    lo, hi = sets.input_bounds()
    schedule = np.clip(schedule, lo[3], hi[3])
    if isinstance(x0, SystemState):
        x0 = replace(x0, theta=theta0)
    else:
        x0 = np.asarray(x0, dtype=float).copy()
        x0[5] = theta0
    return solve(weights, model, path, x0, pen_est, sets=sets, dt=dt,
                 warm=warm, prev_theta_dot=prev_theta_dot, max_iter=max_iter,
                 theta_dot_schedule=schedule)


class TimedMPCController(Controller):
    """Closed-loop driver for the timed-MPC baseline."""

    def __init__(self, weights, model, path, timed=TimedReference(), **kw):
        super().__init__(weights, model, path, **kw)
        self.timed = timed

    def control_tick(self, measurement, t):
        from .dynamics import kalman_init, kalman_update
        from .mpcc import TickDiagnostics, desired_force, stage_cost

        z = np.asarray(measurement, dtype=float)
        zc = self.sets.clamp_point(z)
        clamped = bool(np.any(zc != z))
        if self.estimate is None:
            self.estimate = kalman_init(zc, self.kalman_cfg)
        else:
            self.estimate = kalman_update(self.estimate, zc, self.dt, self.kalman_cfg)

        self.theta_hat = self.timed.theta_at(self.path.L, t)
        sol = mpc_tick(self.weights, self.model, self.path, self.timed,
                       self.state, self.estimate, t, sets=self.sets,
                       dt=self.dt, warm=self.warm,
                       prev_theta_dot=self.prev_theta_dot,
                       max_iter=self.max_iter)
        self.warm = sol
        u0 = ControlInput.from_array(sol.inputs[0])
        self.state = SystemState.from_array(sol.states[1])

        setpoint, _ = self.path.eval(self.theta_hat)
        if self.collect_breakdown:
            _, breakdown = stage_cost(self.weights, self.model, self.path,
                                      sol.states[0], u0.theta_dot,
                                      self.prev_theta_dot, self.estimate.p_p)
        else:
            breakdown = {}
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
        self.prev_theta_dot = u0.theta_dot
        return u0, diag


class _RawEstimate:
    """Pass-through 'estimate' so open-loop traces still carry est columns."""

    def __init__(self, p_p):
        self.p_p = p_p
        self.v_p = np.zeros(2)


class OpenLoopController:
    """Magnet follows the schedule exactly; pure function of t, replay-identical."""

    def __init__(self, model, path, timed=TimedReference(), sets=None, dt=0.01):
        self.model = model
        self.path = path
        self.timed = timed
        self.sets = sets or AdmissibleSets()
        self.dt = dt
        self.estimate = None
        start, _ = path.eval(0.0)
        self.state = SystemState(p_m=self.sets.clamp_point(start),
                                 v_m=np.zeros(2), alpha=1.0, theta=0.0)

    def control_tick(self, measurement, t):
        from .mpcc import TickDiagnostics

        self.estimate = _RawEstimate(np.asarray(measurement, dtype=float))
        target, alpha, theta = open_loop_tick(self.path, self.timed, t)
        target = self.sets.clamp_point(target)
        v = (target - self.state.p_m) / self.dt
        self.state = SystemState(p_m=target, v_m=v, alpha=alpha, theta=theta)
        setpoint, _ = self.path.eval(theta)
        diag = TickDiagnostics(
            theta=theta, setpoint=setpoint,
            desired_force=np.zeros(2), total_cost=0.0, stage_breakdown={},
            solve_time=0.0, iterations=0, converged=True,
            measurement_clamped=False)
        return ControlInput.zero(), diag
