"""Polyline geometry: arclength parametrization, projection, curvature.

All map and route computations reduce to operations on 2-D polylines.
The Polyline class precomputes per-segment data once so projections and
lookups in the filter's inner loop stay cheap.
"""

from __future__ import annotations

import math

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = -((-angle + math.pi) % TWO_PI - math.pi)
    return a if a != -math.pi else math.pi


def wrap_angle_array(angles: np.ndarray) -> np.ndarray:
    a = -((-np.asarray(angles) + np.pi) % TWO_PI - np.pi)
    return np.where(a == -np.pi, np.pi, a)


def circular_mean(angles: np.ndarray, weights: np.ndarray | None = None) -> float:
    """Weighted mean of angles on the circle."""
    angles = np.asarray(angles, dtype=float)
    if weights is None:
        weights = np.ones_like(angles)
    s = float(np.sum(weights * np.sin(angles)))
    c = float(np.sum(weights * np.cos(angles)))
    return wrap_angle(math.atan2(s, c))


def circumradius(p1: np.ndarray, p2: np.ndarray, p3: np.ndarray) -> tuple[float, float]:
    """Radius and turn sign of the circle through three points.

    Returns (radius, sign) with radius = inf for collinear points; sign is
    +1 for a left turn, -1 for a right turn, 0 when straight.
    """
    a = p2 - p1
    b = p3 - p1
    cross = a[0] * b[1] - a[1] * b[0]
    la = math.hypot(a[0], a[1])
    lb = math.hypot(b[0], b[1])
    lc = math.hypot(p3[0] - p2[0], p3[1] - p2[1])
    if abs(cross) < 1e-12 * max(la * lb, 1e-12):
        return math.inf, 0.0
    radius = (la * lb * lc) / (2.0 * abs(cross))
    return radius, math.copysign(1.0, cross)


class Polyline:
    """A 2-D polyline with cached arclength and segment data."""

    def __init__(self, points: np.ndarray):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("polyline needs an (n, 2) array with n >= 2")
        seg = np.diff(pts, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(seg_len <= 0):
            raise ValueError("polyline has repeated consecutive points")
        self.points = pts
        self.seg_dir = seg / seg_len[:, None]
        self.seg_len = seg_len
        self.cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        self.length = float(self.cum[-1])
        self.seg_heading = np.arctan2(self.seg_dir[:, 1], self.seg_dir[:, 0])

    def point_at(self, s: float) -> np.ndarray:
        s = min(max(s, 0.0), self.length)
        i = min(int(np.searchsorted(self.cum, s, side="right")) - 1, len(self.seg_len) - 1)
        i = max(i, 0)
        return self.points[i] + self.seg_dir[i] * (s - self.cum[i])

    def heading_at(self, s: float) -> float:
        s = min(max(s, 0.0), self.length)
        i = min(int(np.searchsorted(self.cum, s, side="right")) - 1, len(self.seg_len) - 1)
        i = max(i, 0)
        return float(self.seg_heading[i])

    def project(self, x: float, y: float) -> tuple[float, float, int]:
        """Project a point onto the polyline.

        Returns (arclength, signed offset, segment index); the offset is
        positive to the left of travel and its magnitude is the distance
        to the nearest point, so it stays honest past the endpoints.
        """
        px = x - self.points[:-1, 0]
        py = y - self.points[:-1, 1]
        t = px * self.seg_dir[:, 0] + py * self.seg_dir[:, 1]
        t = np.clip(t, 0.0, self.seg_len)
        dx = px - t * self.seg_dir[:, 0]
        dy = py - t * self.seg_dir[:, 1]
        d2 = dx * dx + dy * dy
        i = int(np.argmin(d2))
        side = px[i] * -self.seg_dir[i, 1] + py[i] * self.seg_dir[i, 0]
        lat = math.copysign(math.sqrt(float(d2[i])), side)
        return float(self.cum[i] + t[i]), lat, i

    def curvature_samples(self, spacing: float = 1.0, window: float = 5.0):
        """Three-point circumradius sampled along the line.

        Returns (arclengths, radii, signed curvature); radii are inf on
        straight stretches.  The fit spans +-window/2 of arclength.
        """
        if self.length <= spacing:
            return np.zeros(0), np.zeros(0), np.zeros(0)
        half = window / 2.0
        svals = np.arange(0.0, self.length + 1e-9, spacing)
        radii = np.empty(len(svals))
        kappa = np.empty(len(svals))
        for k, s in enumerate(svals):
            p1 = self.point_at(max(s - half, 0.0))
            p2 = self.point_at(s)
            p3 = self.point_at(min(s + half, self.length))
            r, sign = circumradius(p1, p2, p3)
            radii[k] = r
            kappa[k] = 0.0 if math.isinf(r) else sign / r
        return svals, radii, kappa
