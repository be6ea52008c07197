"""Shape-function abstraction.

A shape function maps (parameters, point) to a signed scalar: positive
inside the object, negative outside, zero on the boundary.  Moving inward
from a boundary point increases the value.  Shapes with a rigid pose expose
which parameter indices hold the rotation vector and translation so that
pose gradients can be computed in closed form.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

__all__ = [
    "ShapeFunction",
    "PosedShapeFunction",
    "RigidSplit",
    "rotation_matrix",
    "cross_matrix",
    "validate_params",
    "clip_params",
]


def rotation_matrix(rotvec):
    """3x3 rotation matrix from a rotation vector (angle * unit axis)."""
    return Rotation.from_rotvec(np.asarray(rotvec, dtype=np.float64)).as_matrix()


def cross_matrix(v):
    """Antisymmetric matrix S such that S @ w == cross(v, w)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


@dataclass(frozen=True)
class RigidSplit:
    """Index layout of a posed parameter vector."""

    deformable: tuple
    rotation: tuple
    translation: tuple


class ShapeFunction(ABC):
    """Base class for parametric shape functions.

    Subclasses define ``param_names``, ``bounds`` (array of per-parameter
    ``[lo, hi]``) and :meth:`evaluate`.  ``rigid_split`` is ``None`` unless
    the shape carries a rigid pose.  Instances hold only read-only model
    constants, so they are safe to share across threads.
    """

    ndim = 3
    param_names = ()

    @property
    def n_params(self):
        return len(self.param_names)

    @property
    def bounds(self):
        """Per-parameter ``[lo, hi]`` array, shape ``(n_params, 2)``."""
        raise NotImplementedError

    @property
    def rigid_split(self):
        return None

    @abstractmethod
    def evaluate(self, params, points):
        """Signed shape-function value at one point (``(ndim,)``) or a batch
        of points (``(n, ndim)``)."""

    def parameter_gradient(self, params, points):
        """Analytic gradient w.r.t. all parameters, or ``None`` if the shape
        only supports finite differences.  Shape ``(n, n_params)``."""
        return None


def _as_batch(points, ndim):
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != ndim:
        raise ValueError(f"points must have {ndim} coordinates, got shape {pts.shape}")
    return pts, single


class PosedShapeFunction(ShapeFunction):
    """Shape function composed of a canonical shape and a rigid pose.

    The parameter vector is laid out as the deformable parameters followed
    by the rotation vector (radians * axis) and the translation (mm).  The
    shape value at ``x`` is the canonical value at ``R x + t``.
    """

    ndim = 3
    deformable_names = ()

    @property
    def param_names(self):
        return tuple(self.deformable_names) + (
            "rot_x", "rot_y", "rot_z", "trans_x", "trans_y", "trans_z",
        )

    @property
    def rigid_split(self):
        nd = len(self.deformable_names)
        return RigidSplit(
            deformable=tuple(range(nd)),
            rotation=(nd, nd + 1, nd + 2),
            translation=(nd + 3, nd + 4, nd + 5),
        )

    def split(self, params):
        params = np.asarray(params, dtype=np.float64)
        nd = len(self.deformable_names)
        return params[:nd], params[nd : nd + 3], params[nd + 3 : nd + 6]

    def transform_points(self, params, points):
        """Apply the pose: world points to canonical-frame points."""
        _, rot, trans = self.split(params)
        pts, single = _as_batch(points, self.ndim)
        out = pts @ rotation_matrix(rot).T + trans
        return out[0] if single else out

    def evaluate(self, params, points):
        deform, _, _ = self.split(params)
        pts, single = _as_batch(points, self.ndim)
        values = self.evaluate_canonical(deform, self.transform_points(params, pts))
        return float(values[0]) if single else values

    @abstractmethod
    def evaluate_canonical(self, deformable, points):
        """Shape value in the canonical (pose-free) frame, batch only."""

    def spatial_gradient_canonical(self, deformable, points, step=1e-3):
        """Spatial gradient of the canonical shape by central differences."""
        pts, single = _as_batch(points, self.ndim)
        grad = np.empty_like(pts)
        for axis in range(self.ndim):
            shift = np.zeros(self.ndim)
            shift[axis] = step
            hi = self.evaluate_canonical(deformable, pts + shift)
            lo = self.evaluate_canonical(deformable, pts - shift)
            grad[:, axis] = (hi - lo) / (2.0 * step)
        return grad[0] if single else grad


def validate_params(shape, params):
    """Check bounds and, for posed shapes, the rotation-vector norm.

    Returns the parameter vector as a float array; raises ``ValueError``
    on violation.
    """
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (shape.n_params,):
        raise ValueError(
            f"expected {shape.n_params} parameters for {type(shape).__name__}, "
            f"got shape {params.shape}"
        )
    bounds = np.asarray(shape.bounds, dtype=np.float64)
    low, high = bounds[:, 0], bounds[:, 1]
    bad = (params < low) | (params > high)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(
            f"parameter {shape.param_names[i]}={params[i]:g} outside bounds "
            f"[{low[i]:g}, {high[i]:g}]"
        )
    split = shape.rigid_split
    if split is not None:
        rot = params[list(split.rotation)]
        norm = float(np.linalg.norm(rot))
        if norm >= np.pi:
            raise ValueError(f"rotation vector norm {norm:g} must be < pi")
    return params


def clip_params(shape, params):
    """Clip a parameter vector to the shape's bounds."""
    bounds = np.asarray(shape.bounds, dtype=np.float64)
    return np.clip(np.asarray(params, dtype=np.float64), bounds[:, 0], bounds[:, 1])
