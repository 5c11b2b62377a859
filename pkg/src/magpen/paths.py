"""Arc-length parametrized reference paths.

A path is built from waypoints as a centripetal Catmull-Rom curve, densely
sampled, and re-fitted as a C2 cubic spline over cumulative arc length theta
in [0, L] (knots at <= 1 mm). The refit keeps the CR shape to sub-micron while
giving the controller a twice-differentiable s(theta) -- a piecewise-linear
arc-length table would put curvature jumps at every node, which the analytic
cost gradients cannot have.

Queries are pure; paths are immutable after construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

_TABLE_STEP = 0.5e-3     # arc-length knot spacing [m] (contract: <= 1 mm)
_SAMPLE_STEP = 0.25e-3   # CR sampling used to measure arc length [m]


class PathError(ValueError):
    pass


@dataclass(frozen=True)
class LagContour:
    """Orthogonal split of the pen-to-setpoint vector r_theta.

    lag_sq is the squared projection onto the tangent, contour_sq the squared
    orthogonal remainder; lag_sq + contour_sq == |r_theta|^2.
    """

    lag_sq: float
    contour_sq: float
    r_theta: np.ndarray
    tangent: np.ndarray


@dataclass(frozen=True)
class ReferencePath:
    waypoints: np.ndarray            # (K, 2) input points
    closed: bool
    L: float                         # total arc length [m]
    knots: np.ndarray                # (M,) spline breakpoints in theta
    coeffs: np.ndarray               # (4, M-1, 2) cubic coefficients, highest power first
    arclen_table: np.ndarray = field(repr=False, default=None)  # (M, 2): theta -> CR parameter

    def eval(self, theta):
        """Point on the curve and unit tangent at progress theta (clamped to [0, L])."""
        th = min(max(float(theta), 0.0), self.L)
        i = int(np.searchsorted(self.knots, th, side="right") - 1)
        i = min(max(i, 0), len(self.knots) - 2)
        t = th - self.knots[i]
        c = self.coeffs[:, i, :]
        p = ((c[0] * t + c[1]) * t + c[2]) * t + c[3]
        d = (3.0 * c[0] * t + 2.0 * c[1]) * t + c[2]
        n = d / math.hypot(d[0], d[1])
        return p, n

    def eval_many(self, thetas):
        """Vectorized eval: returns (points (N,2), unit tangents (N,2))."""
        th = np.clip(np.asarray(thetas, dtype=float), 0.0, self.L)
        i = np.clip(np.searchsorted(self.knots, th, side="right") - 1, 0, len(self.knots) - 2)
        t = (th - self.knots[i])[:, None]
        c = self.coeffs[:, i, :]
        p = ((c[0] * t + c[1]) * t + c[2]) * t + c[3]
        d = (3.0 * c[0] * t + 2.0 * c[1]) * t + c[2]
        n = d / np.linalg.norm(d, axis=1, keepdims=True)
        return p, n

    def lag_contour(self, theta, pen_pos):
        """Decompose s(theta) - pen into lag (along tangent) and contour parts."""
        p, n = self.eval(theta)
        r = p - np.asarray(pen_pos, dtype=float)
        proj = float(r @ n)
        lag_sq = proj * proj
        c = r - proj * n
        return LagContour(lag_sq=lag_sq, contour_sq=float(c @ c), r_theta=r, tangent=n)

    def closest_theta(self, pen_pos, hint_theta=None, window=0.02):
        """Progress of the locally nearest point on the path.

        With a hint, scans only +-window around it (prevents jumping across
        nearby lobes of e.g. a spiral) and tie-breaks toward the hint;
        without, scans the whole knot table. The winner is refined by
        golden-section search between its neighbors.
        """
        from ._kernels import closest_theta_scan
        pen = np.asarray(pen_pos, dtype=float)
        if hint_theta is None:
            lo, hi, hint = 0.0, self.L, 0.0
        else:
            hint = float(hint_theta)
            lo = max(0.0, hint - window)
            hi = min(self.L, hint + window)
        return float(closest_theta_scan(self.knots, self.coeffs, pen[0], pen[1],
                                        lo, hi, _TABLE_STEP, hint, 1e-18))

    def polyline(self, step=0.5e-3):
        """Dense polyline at roughly uniform arc-length spacing."""
        n = max(int(round(self.L / step)) + 1, 2)
        pts, _ = self.eval_many(np.linspace(0.0, self.L, n))
        return pts


def _golden_min(f, a, b, tol=1e-7):
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - inv * (b - a)
    d = a + inv * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _catmull_rom_dense(waypoints, closed):
    """Sample the centripetal Catmull-Rom curve through the waypoints."""
    P = waypoints
    K = len(P)
    if closed:
        ext = np.vstack([P[-1], P, P[0], P[1]])
    else:
        ext = np.vstack([2 * P[0] - P[1], P, 2 * P[-1] - P[-2]])
    out = [P[0]]
    nseg = K if closed else K - 1
    for i in range(nseg):
        p0, p1, p2, p3 = ext[i], ext[i + 1], ext[i + 2], ext[(i + 3) % len(ext)]
        # centripetal knots: dt ~ |dP|^(1/2)
        t0 = 0.0
        t1 = t0 + max(np.linalg.norm(p1 - p0), 1e-12) ** 0.5
        t2 = t1 + max(np.linalg.norm(p2 - p1), 1e-12) ** 0.5
        t3 = t2 + max(np.linalg.norm(p3 - p2), 1e-12) ** 0.5
        chord = np.linalg.norm(p2 - p1)
        m = max(8, int(math.ceil(chord / _SAMPLE_STEP)))
        ts = np.linspace(t1, t2, m + 1)[1:]
        for t in ts:
            a1 = (t1 - t) / (t1 - t0) * p0 + (t - t0) / (t1 - t0) * p1
            a2 = (t2 - t) / (t2 - t1) * p1 + (t - t1) / (t2 - t1) * p2
            a3 = (t3 - t) / (t3 - t2) * p2 + (t - t2) / (t3 - t2) * p3
            b1 = (t2 - t) / (t2 - t0) * a1 + (t - t0) / (t2 - t0) * a2
            b2 = (t3 - t) / (t3 - t1) * a2 + (t - t1) / (t3 - t1) * a3
            out.append((t2 - t) / (t2 - t1) * b1 + (t - t1) / (t2 - t1) * b2)
    return np.asarray(out)


def build_path(waypoints, closed=False):
    """Interpolating reference path through the waypoints.

    Raises PathError for fewer than 2 distinct waypoints.
    """
    P = np.asarray(waypoints, dtype=float).reshape(-1, 2)
    keep = [0]
    for i in range(1, len(P)):
        if np.linalg.norm(P[i] - P[keep[-1]]) > 1e-12:
            keep.append(i)
    P = P[keep]
    if closed and len(P) > 2 and np.linalg.norm(P[-1] - P[0]) <= 1e-12:
        P = P[:-1]
    if len(P) < 2:
        raise PathError("need at least 2 distinct waypoints")

    dense = _catmull_rom_dense(P, closed)
    seg = np.linalg.norm(np.diff(dense, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    L = float(cum[-1])
    if L <= 0.0:
        raise PathError("degenerate path of zero length")

    # uniform arc-length knots (<= 1 mm), positions linearly interpolated from
    # the dense sampling, then a C2 refit over theta
    n = max(int(round(L / _TABLE_STEP)) + 1, 5)
    grid = np.linspace(0.0, L, n)
    pts = np.column_stack([np.interp(grid, cum, dense[:, 0]),
                           np.interp(grid, cum, dense[:, 1])])
    if closed:
        pts[-1] = pts[0]
        spline = CubicSpline(grid, pts, bc_type="periodic")
    else:
        spline = CubicSpline(grid, pts, bc_type="not-a-knot")

    tau = np.interp(grid, cum, np.arange(len(dense)) / max(len(dense) - 1, 1))
    return ReferencePath(
        waypoints=P,
        closed=closed,
        L=L,
        knots=np.ascontiguousarray(spline.x),
        coeffs=np.ascontiguousarray(spline.c),
        arclen_table=np.column_stack([grid, tau]),
    )


# ---------------------------------------------------------------------------
# built-in study shapes; sized for the 0.23 x 0.13 m workspace

WORKSPACE = (0.23, 0.13)
_CENTER = np.array([WORKSPACE[0] / 2.0, WORKSPACE[1] / 2.0])


def shape_waypoints(name, **params):
    """Waypoints (and closedness) for the built-in reference shapes."""
    c = _CENTER
    if name == "line":
        length = params.get("length", 0.18)
        return np.array([c + [-length / 2, 0.0], c + [length / 2, 0.0]]), False
    if name == "circle":
        r = params.get("radius", 0.045)
        n = params.get("n", 64)
        a = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
        return c + r * np.column_stack([np.cos(a), np.sin(a)]), True
    if name == "ellipse":
        a_ax = params.get("a", 0.085)
        b_ax = params.get("b", 0.05)
        n = params.get("n", 64)
        a = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
        return c + np.column_stack([a_ax * np.cos(a), b_ax * np.sin(a)]), True
    if name == "spiral":
        turns = params.get("turns", 2.5)
        r_max = params.get("r_max", 0.05)
        n = params.get("n", 128)
        phi = np.linspace(0.0, 2.0 * np.pi * turns, n)
        r = r_max * (0.15 + 0.85 * phi / phi[-1])
        return c + np.column_stack([r * np.cos(phi), r * np.sin(phi)]), False
    if name == "sinusoid":
        length = params.get("length", 0.18)
        amp = params.get("amplitude", 0.03)
        periods = params.get("periods", 2.0)
        n = params.get("n", 96)
        x = np.linspace(-length / 2, length / 2, n)
        y = amp * np.sin(2.0 * np.pi * periods * (x + length / 2) / length)
        return c + np.column_stack([x, y]), False
    if name == "corner":
        # two straight arms meeting at a turn of `angle_deg`. Arm length and
        # waypoint spacing are held constant so the path length and the
        # interpolant's apex rounding are identical at every level and only
        # the turn angle varies.
        angle = math.radians(params.get("angle_deg", 45.0))
        arm = params.get("arm", 0.03)
        spacing = params.get("spacing", 1.5e-3)
        d0 = np.array([math.cos(angle / 2.0), math.sin(angle / 2.0)])
        d1 = np.array([math.cos(angle / 2.0), -math.sin(angle / 2.0)])
        n = max(int(round(arm / spacing)), 4)
        ts = np.arange(n + 1) * (arm / n)
        chord = 2.0 * arm * math.cos(angle / 2.0)
        first = c + np.array([-chord / 2, 0.0]) + np.outer(ts, d0)
        second = first[-1] + np.outer(ts[1:], d1)
        return np.vstack([first, second]), False
    raise PathError(f"unknown shape '{name}'")


def make_shape(name, **params):
    wp, closed = shape_waypoints(name, **params)
    return build_path(wp, closed=closed)


def load_path_json(path_or_dict):
    """Path from JSON ``{closed: bool, points_mm: [[x, y], ...]}``."""
    if isinstance(path_or_dict, dict):
        data = path_or_dict
    else:
        with open(path_or_dict) as fh:
            data = json.load(fh)
    pts = np.asarray(data["points_mm"], dtype=float) * 1e-3
    return build_path(pts, closed=bool(data.get("closed", False)))


def dump_path_json(path, file=None):
    data = {"closed": path.closed, "points_mm": (path.waypoints * 1e3).tolist()}
    if file is None:
        return data
    with open(file, "w") as fh:
        json.dump(data, fh, indent=2)
    return data
