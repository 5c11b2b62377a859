"""Electromagnet / pen-magnet interaction model.

Both magnets are treated as oriented point dipoles. With the pen upright the
in-plane pull on the pen reduces to a single closed-form curve in the
pen-magnet separation d, which is what makes the model cheap enough for the
per-tick optimization. A first-order tilt correction and the exact
angle-dependent dipole force are provided for validation and for setups that
track pen tilt. The dipole-field fit recovers the electromagnet's effective
dipole strength and height from a hall-sensor scan.

All quantities are SI (m, T, N, A·m²) unless a name says otherwise.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

MU0 = 4.0 * math.pi * 1e-7  # vacuum permeability [H/m]

# The in-plane pull peaks at ~0.9*F0 (d ~= 0.39*h) and is treated as zero past
# d = 2*h where the dipole approximation turns spuriously repulsive.
FORCE_SATURATION = 0.9
CUTOFF_RATIO = 2.0


class FitError(RuntimeError):
    """Dipole-field fit failed to converge; carries the best iterate."""

    def __init__(self, message, fit):
        super().__init__(message)
        self.fit = fit


@dataclass(frozen=True)
class MagnetModel:
    """Physical parameters of the electromagnet / pen-magnet pair.

    mu0:  vacuum permeability [H/m]
    Br:   residual magnetization of the pen magnet [T]
    V:    pen magnet volume [m^3]
    m_p:  pen dipole strength [A m^2], = Br*V/mu0
    m_m:  electromagnet dipole strength at full power [A m^2]
    h_p:  pen-tip to pen-magnet height [m]
    h:    vertical separation between the two dipoles [m]
    F0:   force scale [N], = 3*mu0*m_p*m_m / (4*pi*h^4)
    """

    mu0: float
    Br: float
    V: float
    m_p: float
    m_m: float
    h_p: float
    h: float
    F0: float

    def __post_init__(self):
        for name in ("h", "h_p", "m_p", "m_m", "F0"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"MagnetModel.{name} must be > 0")
        if not math.isclose(self.m_p, self.Br * self.V / self.mu0, rel_tol=1e-9):
            raise ValueError("m_p inconsistent with Br*V/mu0")
        f0 = 3.0 * self.mu0 * self.m_p * self.m_m / (4.0 * math.pi * self.h**4)
        if not math.isclose(self.F0, f0, rel_tol=1e-9):
            raise ValueError("F0 inconsistent with 3*mu0*m_p*m_m/(4*pi*h^4)")

    @property
    def max_force(self):
        """Peak achievable in-plane pull at full power [N]."""
        return FORCE_SATURATION * self.F0

    @classmethod
    def from_hardware(cls, Br=1.3, V=0.66e-6, m_m=1.286, h=2.71e-2, h_p=1.40e-2):
        """Build the model from the measured hardware parameters.

        Defaults are the reference rig: N42 ring magnet (Br=1.3 T,
        V=0.66 cm^3) on the pen, electromagnet dipole 1.286 A m^2 at 2.71 cm
        effective height.
        """
        m_p = Br * V / MU0
        F0 = 3.0 * MU0 * m_p * m_m / (4.0 * math.pi * h**4)
        return cls(mu0=MU0, Br=Br, V=V, m_p=m_p, m_m=m_m, h_p=h_p, h=h, F0=F0)


def force_strength_ratio(d_over_h):
    """Dimensionless upright force curve f0(u) = u(4-u^2)/(1+u^2)^(7/2).

    Clamped to 0 for u >= 2: beyond that separation the dipole model predicts
    repulsion, which the hardware never exhibits. Accepts scalars or arrays.
    """
    u = np.asarray(d_over_h, dtype=float)
    out = u * (4.0 - u * u) / (1.0 + u * u) ** 3.5
    out = np.where(u >= CUTOFF_RATIO, 0.0, out)
    if np.ndim(d_over_h) == 0:
        return float(out)
    return out


def force_strength_ratio_deriv(d_over_h):
    """d f0 / du, with the same >=2h clamp (0 past the cutoff)."""
    u = np.asarray(d_over_h, dtype=float)
    q = 1.0 + u * u
    out = ((4.0 - 3.0 * u * u) * q - 7.0 * u * u * (4.0 - u * u)) / q**4.5
    out = np.where(u >= CUTOFF_RATIO, 0.0, out)
    if np.ndim(d_over_h) == 0:
        return float(out)
    return out


def tilt_gain(d_over_h, hp_over_h):
    """First-order tilt coefficient g1(u) of the in-plane force.

    For a pen tilted by a small angle beta at azimuth gamma (measured from the
    pen->magnet direction), the in-plane force is
    alpha*F0*(f0(u) + beta*cos(gamma)*g1(u)). Derived by expanding the exact
    dipole-dipole force to first order in beta; validated against
    exact_inplane_force by finite differences. At u=0 the value is
    4*(h_p/h) - 1.
    """
    u = np.asarray(d_over_h, dtype=float)
    rho = hp_over_h
    q = 1.0 + u * u
    out = (-(1.0 + rho) + 5.0 * (rho + u * u * (1.0 + rho)) / q
           - 35.0 * rho * u * u / (q * q)) / q**2.5
    if np.ndim(d_over_h) == 0:
        return float(out)
    return out


def actuation_force(model, alpha, pen_pos, magnet_pos):
    """In-plane pull on the pen, upright-pen model.

    Magnitude alpha*F0*f0(d/h) directed from the pen toward the magnet
    (attraction). Returns the zero vector at coincidence (the direction is
    undefined and f0(0)=0 makes zero the continuous choice) and beyond d=2h.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0,1], got {alpha}")
    pen = np.asarray(pen_pos, dtype=float)
    mag = np.asarray(magnet_pos, dtype=float)
    r = mag - pen
    d = math.hypot(r[0], r[1])
    if d == 0.0:
        return np.zeros(2)
    mag_f = alpha * model.F0 * force_strength_ratio(d / model.h)
    return (mag_f / d) * r


def actuation_force_tilted(model, alpha, pen_pos, magnet_pos, beta, gamma):
    """In-plane pull including the first-order pen-tilt correction.

    beta is the tilt from vertical [rad], valid for |beta| <= 30 deg; gamma is
    the tilt azimuth measured from the pen->magnet direction. At beta=0 this
    is exactly the upright model.
    """
    if abs(beta) > math.pi / 6 + 1e-12:
        raise ValueError(f"tilt model is valid for |beta| <= 30 deg, got {beta} rad")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0,1], got {alpha}")
    pen = np.asarray(pen_pos, dtype=float)
    mag = np.asarray(magnet_pos, dtype=float)
    r = mag - pen
    d = math.hypot(r[0], r[1])
    if beta == 0.0:
        return actuation_force(model, alpha, pen_pos, magnet_pos)
    u = d / model.h
    g1 = tilt_gain(u, model.h_p / model.h)
    mag_f = alpha * model.F0 * (force_strength_ratio(u) + beta * math.cos(gamma) * g1)
    if d == 0.0:
        # direction degenerates with the separation; keep the upright convention
        return np.zeros(2)
    return (mag_f / d) * r


def exact_inplane_force_ratio(model, d, beta, gamma):
    """e_d component of the exact dipole-dipole force, divided by alpha*F0.

    Full trigonometric geometry, no small-angle approximation; serves as the
    independent oracle for the first-order tilt model.
    """
    h, hp = model.h, model.h_p
    sb, cb = math.sin(beta), math.cos(beta)
    cg, sg = math.cos(gamma), math.sin(gamma)
    # pen dipole direction and dipole-to-dipole vector in the (e_d, e_t, e_z) frame
    mpd, mpt, mpz = -sb * cg, sb * sg, cb
    rd = -(d + hp * sb * cg)
    rt = hp * sb * sg
    rz = h - (1.0 - cb) * hp
    r2 = rd * rd + rt * rt + rz * rz
    a = mpd * rd + mpt * rt + mpz * rz   # m_p.r / m_p
    b = rz                               # m_m.r / (alpha*m_m)
    c = mpz                              # m_p.m_m / (alpha*m_m*m_p)
    fd = (b * mpd + c * rd - 5.0 * a * b * rd / r2) / r2**2.5
    return fd * h**4


@dataclass(frozen=True)
class FieldFit:
    """Result of fitting the vertical dipole field to a hall-sensor scan.

    c1: field amplitude [T m^3] (signed, sensor orientation preserved)
    c2: fitted vertical separation [m]
    m_m, h: recovered electromagnet dipole strength and height
    """

    c1: float
    c2: float
    m_m: float
    h: float
    rms_residual: float
    iterations: int

    def __post_init__(self):
        if self.c2 <= 0.0:
            raise ValueError("c2 must be > 0")
        if self.rms_residual < 0.0:
            raise ValueError("rms_residual must be >= 0")

    def as_dict(self):
        return {
            "c1": self.c1,
            "c2": self.c2,
            "m_m": self.m_m,
            "h": self.h,
            "rms_residual": self.rms_residual,
            "iterations": self.iterations,
        }


def field_bz(source, c2_or_ds, d_s=None):
    """Vertical dipole field at sensor height vs in-plane distance d_s.

    B_z(d_s) = c1*(2*c2^2 - d_s^2) / (d_s^2 + c2^2)^(5/2). Call as
    field_bz(c1, c2, d_s), field_bz(fit, d_s) or field_bz(model, d_s).
    """
    if isinstance(source, FieldFit):
        c1, c2, d_s = source.c1, source.c2, c2_or_ds
    elif isinstance(source, MagnetModel):
        c1 = source.mu0 * source.m_m / (4.0 * math.pi)
        c2, d_s = source.h, c2_or_ds
    else:
        if d_s is None:
            raise TypeError("field_bz(c1, c2, d_s) requires the distance argument")
        c1, c2 = source, c2_or_ds
    ds = np.asarray(d_s, dtype=float)
    out = c1 * (2.0 * c2**2 - ds * ds) / (ds * ds + c2**2) ** 2.5
    if np.ndim(d_s) == 0:
        return float(out)
    return out


def _residuals(c1, c2, ds, bz):
    return field_bz(c1, c2, ds) - bz


def fit_dipole(samples, max_iter=200, rtol=1e-10):
    """Least-squares fit of (c1, c2) to (d_s, B_z) hall-sensor samples.

    Damped Gauss-Newton seeded from a coarse grid over (c1, c2); the grid seed
    avoids the sign-symmetric local minimum. Recovers m_m = |c1|*4*pi/mu0 and
    h = c2. Raises FitError (carrying the best iterate) if the damping loop
    cannot make progress within max_iter iterations.
    """
    pts = np.asarray(list(samples), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 8:
        raise ValueError("need at least 8 (d_s, bz) samples")
    ds, bz = pts[:, 0], pts[:, 1]
    if np.ptp(ds) <= 0.0:
        raise ValueError("all d_s identical; fit is unidentifiable")

    peak = float(np.max(np.abs(bz)))
    if peak == 0.0:
        raise ValueError("all-zero field scan")
    span = max(float(np.max(ds)), 1e-3)

    # coarse grid seed
    c2_grid = np.geomspace(span / 40.0, span, 48)
    best = None
    for c2 in c2_grid:
        shape = (2.0 * c2**2 - ds * ds) / (ds * ds + c2**2) ** 2.5
        denom = float(shape @ shape)
        if denom == 0.0:
            continue
        c1 = float(shape @ bz) / denom  # optimal amplitude for this c2
        sse = float(np.sum((c1 * shape - bz) ** 2))
        if best is None or sse < best[0]:
            best = (sse, c1, c2)
    sse, c1, c2 = best

    lam = 1e-3
    iterations = 0
    for iterations in range(1, max_iter + 1):
        r = _residuals(c1, c2, ds, bz)
        sse = float(r @ r)
        # Jacobian of the residuals w.r.t. (c1, c2)
        q = ds * ds + c2**2
        j1 = (2.0 * c2**2 - ds * ds) / q**2.5
        j2 = c1 * (4.0 * c2 / q**2.5 - 5.0 * c2 * (2.0 * c2**2 - ds * ds) / q**3.5)
        J = np.column_stack([j1, j2])
        g = J.T @ r
        H = J.T @ J
        stepped = False
        for _ in range(40):
            try:
                delta = np.linalg.solve(H + lam * np.diag(np.diag(H)), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            c1n, c2n = c1 + delta[0], c2 + delta[1]
            if c2n <= 0.0:
                lam *= 10.0
                continue
            rn = _residuals(c1n, c2n, ds, bz)
            ssen = float(rn @ rn)
            if ssen <= sse:
                stepped = True
                lam = max(lam * 0.3, 1e-12)
                converged = sse - ssen <= rtol * max(sse, 1e-300)
                c1, c2, sse = c1n, c2n, ssen
                break
            lam *= 10.0
        if not stepped:
            break
        if converged:
            rms = math.sqrt(sse / len(ds))
            return FieldFit(c1=c1, c2=c2, m_m=abs(c1) * 4.0 * math.pi / MU0,
                            h=c2, rms_residual=rms, iterations=iterations)

    rms = math.sqrt(sse / len(ds))
    fit = FieldFit(c1=c1, c2=c2, m_m=abs(c1) * 4.0 * math.pi / MU0,
                   h=c2, rms_residual=rms, iterations=iterations)
    raise FitError(f"dipole fit did not converge in {iterations} iterations", fit)


def read_field_scan(path):
    """Read a hall-sensor scan CSV with header ``d_s_m,bz_t`` (SI units)."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["d_s_m", "bz_t"]:
            raise ValueError(f"{path}: expected header 'd_s_m,bz_t', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(f"{path}: row {lineno}: expected 2 columns, got {len(row)}")
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError as exc:
                raise ValueError(f"{path}: row {lineno}: {exc}") from exc
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return np.asarray(rows, dtype=float)
