"""Planar circle shape and the elliptic ground-truth phantom geometry."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import ShapeFunction, _as_batch

__all__ = ["CircleShape", "EllipsePhantomShape"]


class CircleShape(ShapeFunction):
    """Quadratic circle shape function, positive inside.

    ``value(x) = radius**2 - |x - center|**2``, so the value carries squared
    length units; the reference length used with it follows the same scale.
    Parameters are ``(center_x, center_y, radius)``; there is no separate
    rigid pose.
    """

    ndim = 2
    param_names = ("center_x", "center_y", "radius")

    def __init__(self, center_bounds=((-1e3, 1e3), (-1e3, 1e3)), radius_bounds=(1e-6, 1e3)):
        self._bounds = np.array(
            [center_bounds[0], center_bounds[1], radius_bounds], dtype=np.float64
        )

    @property
    def bounds(self):
        return self._bounds

    def evaluate(self, params, points):
        cx, cy, radius = np.asarray(params, dtype=np.float64)
        pts, single = _as_batch(points, self.ndim)
        d2 = np.square(pts[:, 0] - cx) + np.square(pts[:, 1] - cy)
        values = radius * radius - d2
        return float(values[0]) if single else values

    def parameter_gradient(self, params, points):
        cx, cy, radius = np.asarray(params, dtype=np.float64)
        pts, single = _as_batch(points, self.ndim)
        grad = np.empty((pts.shape[0], 3))
        grad[:, 0] = 2.0 * (pts[:, 0] - cx)
        grad[:, 1] = 2.0 * (pts[:, 1] - cy)
        grad[:, 2] = 2.0 * radius
        return grad[0] if single else grad

    def spatial_gradient(self, params, points):
        cx, cy, _ = np.asarray(params, dtype=np.float64)
        pts, single = _as_batch(points, self.ndim)
        grad = -2.0 * (pts - np.array([cx, cy]))
        return grad[0] if single else grad


@dataclass(frozen=True)
class EllipsePhantomShape:
    """Rotated ellipse used only to generate ground-truth masks.

    ``semi_axes`` are the half-lengths along the rotated axes; ``angle`` is
    the rotation of the first axis in radians.
    """

    center: tuple
    semi_axes: tuple
    angle: float = 0.0

    def __post_init__(self):
        if min(self.semi_axes) <= 0:
            raise ValueError(f"semi-axes must be positive, got {self.semi_axes}")

    @property
    def area(self):
        return float(np.pi * self.semi_axes[0] * self.semi_axes[1])

    def contains(self, points):
        """Boolean inside test for points ``(n, 2)`` (or a single point)."""
        pts, single = _as_batch(points, 2)
        dx = pts[:, 0] - self.center[0]
        dy = pts[:, 1] - self.center[1]
        ca, sa = np.cos(self.angle), np.sin(self.angle)
        u = (dx * ca + dy * sa) / self.semi_axes[0]
        v = (-dx * sa + dy * ca) / self.semi_axes[1]
        inside = u * u + v * v <= 1.0
        return bool(inside[0]) if single else inside
