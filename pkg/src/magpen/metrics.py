"""Accuracy and guidance metrics.

The accuracy metric is a Hausdorff-like distance: both curves are resampled
equidistantly and the mean nearest-point distance is taken in each direction
(drawn->reference and reference->drawn). Session metrics summarize per-tick
pen-to-path, along-path setpoint and pen-to-magnet distances.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MetricsReport:
    mean_pen_path: float
    sd_pen_path: float
    mean_pen_setpoint_alongpath: float
    mean_pen_em: float
    sd_pen_em: float
    frac_em_beyond_15mm: float
    hausdorff_drawn_to_ref: float
    hausdorff_ref_to_drawn: float

    def __post_init__(self):
        for name in ("mean_pen_path", "sd_pen_path", "mean_pen_setpoint_alongpath",
                     "mean_pen_em", "sd_pen_em",
                     "hausdorff_drawn_to_ref", "hausdorff_ref_to_drawn"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 <= self.frac_em_beyond_15mm <= 1.0:
            raise ValueError("frac_em_beyond_15mm must be in [0, 1]")

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2)

    def csv_row(self):
        keys = list(self.__dataclass_fields__)
        return ",".join(keys), ",".join(repr(getattr(self, k)) for k in keys)


def polyline_length(poly):
    poly = np.asarray(poly, dtype=float)
    return float(np.sum(np.linalg.norm(np.diff(poly, axis=0), axis=1)))


def resample_equidistant(polyline, step):
    """Points spaced exactly `step` along the polyline, endpoints preserved.

    The final interval may be shorter so the last input point is kept.
    """
    poly = np.asarray(polyline, dtype=float)
    if len(poly) < 2:
        raise ValueError("polyline needs at least 2 points")
    if step <= 0.0:
        raise ValueError("step must be > 0")
    seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0.0:
        raise ValueError("degenerate zero-length polyline")
    n_full = int(np.floor(total / step + 1e-9))
    s = np.arange(n_full + 1) * step
    x = np.interp(s, cum, poly[:, 0])
    y = np.interp(s, cum, poly[:, 1])
    out = np.column_stack([x, y])
    if total - s[-1] > 1e-9 * max(total, 1.0):
        out = np.vstack([out, poly[-1]])
    else:
        out[-1] = poly[-1]
    return out


def nearest_point_distances(points, polyline):
    """Distance from each point to the nearest point on the polyline (segments)."""
    poly = np.asarray(polyline, dtype=float)
    pts = np.asarray(points, dtype=float)
    a = poly[:-1]
    ab = poly[1:] - a
    denom = np.maximum(np.sum(ab * ab, axis=1), 1e-300)
    out = np.empty(len(pts))
    for i, p in enumerate(pts):
        ap = p - a
        t = np.clip(np.sum(ap * ab, axis=1) / denom, 0.0, 1.0)
        proj = a + t[:, None] * ab
        out[i] = np.sqrt(np.min(np.sum((proj - p) ** 2, axis=1)))
    return out


def hausdorff_like(drawn, reference, step=0.5e-3):
    """Mean nearest-point distance in both directions after resampling.

    Returns (mean drawn->reference, mean reference->drawn) in meters.
    """
    d = resample_equidistant(drawn, step)
    r = resample_equidistant(reference, step)
    return (float(np.mean(nearest_point_distances(d, r))),
            float(np.mean(nearest_point_distances(r, d))))


def session_metrics(trace, path, em_threshold=15e-3, resample_step=0.5e-3):
    """MetricsReport for a recorded session against its reference path."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    pen = trace.points("pen")
    mag = trace.points("mag")
    theta = trace.column("theta")

    ref_poly = path.polyline(resample_step)
    pen_path = nearest_point_distances(pen, ref_poly)

    # along-path distance between the setpoint and the pen's own projection
    along = np.empty(len(pen))
    hint = None
    for i, p in enumerate(pen):
        hint = path.closest_theta(p, hint_theta=hint)
        along[i] = abs(hint - theta[i])

    pen_em = np.linalg.norm(pen - mag, axis=1)
    h_dr, h_rd = hausdorff_like(pen, ref_poly, resample_step) if len(pen) >= 2 \
        else (float(pen_path[0]), float(pen_path[0]))
    return MetricsReport(
        mean_pen_path=float(np.mean(pen_path)),
        sd_pen_path=float(np.std(pen_path)),
        mean_pen_setpoint_alongpath=float(np.mean(along)),
        mean_pen_em=float(np.mean(pen_em)),
        sd_pen_em=float(np.std(pen_em)),
        frac_em_beyond_15mm=float(np.mean(pen_em > em_threshold)),
        hausdorff_drawn_to_ref=h_dr,
        hausdorff_ref_to_drawn=h_rd,
    )
