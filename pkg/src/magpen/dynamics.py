"""Plant model for the contouring controller.

State x = [p_m, v_m, alpha, theta] in R^6 (magnet position/velocity, magnet
intensity, path progress); input u = [a_m, alpha_dot, theta_dot] in R^4.
Propagation is forward Euler followed by a componentwise projection into the
admissible state box. The pen is tracked by a constant-velocity Kalman filter
whose prediction supplies the pen positions over the horizon.

Values are immutable records; updates return new values.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class SystemState:
    p_m: np.ndarray      # magnet position [m]
    v_m: np.ndarray      # magnet velocity [m/s]
    alpha: float         # magnet intensity, 0..1
    theta: float         # path progress [m]

    def as_array(self):
        return np.array([self.p_m[0], self.p_m[1], self.v_m[0], self.v_m[1],
                         self.alpha, self.theta])

    @classmethod
    def from_array(cls, x):
        return cls(p_m=np.array(x[0:2]), v_m=np.array(x[2:4]),
                   alpha=float(x[4]), theta=float(x[5]))


@dataclass(frozen=True)
class ControlInput:
    a_m: np.ndarray      # magnet acceleration [m/s^2]
    alpha_dot: float     # 1/s
    theta_dot: float     # m/s

    def as_array(self):
        return np.array([self.a_m[0], self.a_m[1], self.alpha_dot, self.theta_dot])

    @classmethod
    def from_array(cls, u):
        return cls(a_m=np.array(u[0:2]), alpha_dot=float(u[2]), theta_dot=float(u[3]))

    @classmethod
    def zero(cls):
        return cls(a_m=np.zeros(2), alpha_dot=0.0, theta_dot=0.0)


@dataclass(frozen=True)
class AdmissibleSets:
    """Box constraints on states (chi) and inputs (zeta).

    Defaults emulate a consumer printer stage under a 0.23 x 0.13 m sensing
    area; all are config-overridable. theta_dot >= 0: progress never reverses.
    """

    workspace: tuple = ((0.0, 0.23), (0.0, 0.13))   # ((x_lo, x_hi), (y_lo, y_hi)) [m]
    v_max: float = 0.2          # per-axis magnet speed [m/s]
    a_max: float = 2.0          # per-axis magnet acceleration [m/s^2]
    alpha_range: tuple = (0.0, 1.0)
    alpha_dot_max: float = 50.0  # [1/s]; PWM duty can swing within one period
    theta_dot_range: tuple = (0.0, 0.06)  # [m/s]; caps how far the setpoint can lead

    def __post_init__(self):
        for lo, hi in (*self.workspace, self.alpha_range, self.theta_dot_range):
            if not lo < hi:
                raise ValueError("admissible interval must have lower < upper")
        if self.theta_dot_range[0] < 0.0:
            raise ValueError("theta_dot lower bound must be >= 0")
        if self.v_max <= 0.0 or self.a_max <= 0.0 or self.alpha_dot_max <= 0.0:
            raise ValueError("rate bounds must be > 0")

    def state_bounds(self, path_length):
        """(lo, hi) 6-vectors of the state box, theta limited to [0, L]."""
        (x0, x1), (y0, y1) = self.workspace
        lo = np.array([x0, y0, -self.v_max, -self.v_max, self.alpha_range[0], 0.0])
        hi = np.array([x1, y1, self.v_max, self.v_max, self.alpha_range[1], path_length])
        return lo, hi

    def input_bounds(self):
        lo = np.array([-self.a_max, -self.a_max, -self.alpha_dot_max,
                       self.theta_dot_range[0]])
        hi = np.array([self.a_max, self.a_max, self.alpha_dot_max,
                       self.theta_dot_range[1]])
        return lo, hi

    def clamp_point(self, p):
        (x0, x1), (y0, y1) = self.workspace
        return np.array([min(max(p[0], x0), x1), min(max(p[1], y0), y1)])


def project_input(u: ControlInput, sets: AdmissibleSets) -> ControlInput:
    """Componentwise clamp into the admissible input box zeta."""
    lo, hi = sets.input_bounds()
    v = np.minimum(np.maximum(u.as_array(), lo), hi)
    return ControlInput.from_array(v)


def project_state(x: SystemState, sets: AdmissibleSets, path_length: float) -> SystemState:
    lo, hi = sets.state_bounds(path_length)
    v = np.minimum(np.maximum(x.as_array(), lo), hi)
    return SystemState.from_array(v)


def step(x: SystemState, u: ControlInput, dt: float, sets: AdmissibleSets,
         path_length: float) -> SystemState:
    """Forward-Euler step, then projection into the admissible state box."""
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    nxt = SystemState(
        p_m=x.p_m + x.v_m * dt,
        v_m=x.v_m + u.a_m * dt,
        alpha=x.alpha + u.alpha_dot * dt,
        theta=x.theta + u.theta_dot * dt,
    )
    return project_state(nxt, sets, path_length)


# ---------------------------------------------------------------------------
# constant-velocity pen estimator


@dataclass(frozen=True)
class PenEstimate:
    p_p: np.ndarray          # position [m]
    v_p: np.ndarray          # velocity [m/s]
    covariance: np.ndarray   # 4x4, state order (px, py, vx, vy)

    def __post_init__(self):
        P = self.covariance
        if not np.allclose(P, P.T, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        if np.any(np.linalg.eigvalsh(P) <= 0.0):
            raise ValueError("covariance must be positive-definite")


@dataclass(frozen=True)
class KalmanConfig:
    accel_noise: float = 0.5     # process white-acceleration level [m/s^2]
    meas_noise: float = 0.5e-3   # position measurement std [m]
    init_pos_std: float = 5e-3
    init_vel_std: float = 0.5


def kalman_init(measurement, cfg: KalmanConfig = KalmanConfig()) -> PenEstimate:
    """Estimate from the first measurement: zero velocity, large covariance."""
    P = np.diag([cfg.init_pos_std**2, cfg.init_pos_std**2,
                 cfg.init_vel_std**2, cfg.init_vel_std**2])
    return PenEstimate(p_p=np.asarray(measurement, dtype=float).copy(),
                       v_p=np.zeros(2), covariance=P)


def kalman_update(est: PenEstimate, measurement, dt: float,
                  cfg: KalmanConfig = KalmanConfig()) -> PenEstimate:
    """Constant-velocity predict + position correct (Joseph form)."""
    F = np.array([[1.0, 0.0, dt, 0.0],
                  [0.0, 1.0, 0.0, dt],
                  [0.0, 0.0, 1.0, 0.0],
                  [0.0, 0.0, 0.0, 1.0]])
    q = cfg.accel_noise**2
    Q = q * np.array([[dt**3 / 3.0, 0.0, dt**2 / 2.0, 0.0],
                      [0.0, dt**3 / 3.0, 0.0, dt**2 / 2.0],
                      [dt**2 / 2.0, 0.0, dt, 0.0],
                      [0.0, dt**2 / 2.0, 0.0, dt]])
    H = np.array([[1.0, 0.0, 0.0, 0.0],
                  [0.0, 1.0, 0.0, 0.0]])
    R = np.eye(2) * cfg.meas_noise**2

    x = np.concatenate([est.p_p, est.v_p])
    P = est.covariance
    x = F @ x
    P = F @ P @ F.T + Q

    z = np.asarray(measurement, dtype=float)
    S = H @ P @ H.T + R
    K = P @ H.T @ np.linalg.inv(S)
    x = x + K @ (z - H @ x)
    A = np.eye(4) - K @ H
    P = A @ P @ A.T + K @ R @ K.T
    P = 0.5 * (P + P.T)
    return PenEstimate(p_p=x[:2], v_p=x[2:], covariance=P)


def kalman_predict(est: PenEstimate, horizon_steps: int, dt: float) -> np.ndarray:
    """Pen positions 1..N steps ahead by constant-velocity extrapolation."""
    if horizon_steps < 1:
        raise ValueError("horizon_steps must be >= 1")
    k = np.arange(1, horizon_steps + 1)[:, None]
    return est.p_p[None, :] + k * dt * est.v_p[None, :]
