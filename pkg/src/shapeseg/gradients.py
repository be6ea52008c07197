"""Gradients of shape functions with respect to their parameters.

Pose gradients (rotation vector and translation) have a closed form built
from the spatial gradient of the canonical shape; deformable parameters of
non-analytic shapes fall back to central finite differences.  All routines
accept a single point or a batch of points.
"""

from __future__ import annotations

import numpy as np

from .shapes.base import _as_batch, cross_matrix, rotation_matrix

__all__ = [
    "fd_gradient",
    "rigid_gradient",
    "rigid_pose_block",
    "parameter_gradient_field",
    "values_and_gradient",
]

#: below this rotation-vector norm the pose Jacobian uses its first-order
#: series; the exact formula divides by the squared norm.
SMALL_ANGLE = 1e-4


def default_fd_steps(shape):
    """Per-parameter central-difference steps: 1e-3 of each bound width."""
    bounds = np.asarray(shape.bounds, dtype=np.float64)
    width = bounds[:, 1] - bounds[:, 0]
    return 1e-3 * width


def fd_gradient(shape, params, points, delta=None):
    """Central-difference gradient of the shape value w.r.t. all parameters.

    Perturbed parameter values are clipped to the shape's bounds and the
    difference is divided by the actual spread, so evaluation never leaves
    the valid parameter box.

    Returns an array of shape ``(n_points, n_params)`` (or ``(n_params,)``
    for a single point).
    """
    params = np.asarray(params, dtype=np.float64)
    pts, single = _as_batch(points, shape.ndim)
    if delta is None:
        delta = default_fd_steps(shape)
    delta = np.broadcast_to(np.asarray(delta, dtype=np.float64), params.shape)
    if np.any(delta <= 0):
        raise ValueError("finite-difference steps must be positive")
    bounds = np.asarray(shape.bounds, dtype=np.float64)

    grad = np.empty((pts.shape[0], params.size))
    for i in range(params.size):
        hi = params.copy()
        lo = params.copy()
        hi[i] = min(params[i] + delta[i], bounds[i, 1])
        lo[i] = max(params[i] - delta[i], bounds[i, 0])
        spread = hi[i] - lo[i]
        if spread <= 0:
            raise ValueError(
                f"cannot perturb parameter {shape.param_names[i]}: zero-width bounds"
            )
        grad[:, i] = (shape.evaluate(hi, pts) - shape.evaluate(lo, pts)) / spread
    return grad[0] if single else grad


def _pose_jacobian_factor(rotvec):
    """Matrix M with d(R x)/dr = -R S_x M; series branch near zero angle."""
    norm_sq = float(rotvec @ rotvec)
    if norm_sq < SMALL_ANGLE**2:
        return np.eye(3)
    rot = rotation_matrix(rotvec)
    outer = np.outer(rotvec, rotvec)
    return (outer + (rot.T - np.eye(3)) @ cross_matrix(rotvec)) / norm_sq


def rigid_pose_block(rotvec, points, spatial_grad):
    """Pose gradient ``[rotation(3), translation(3)]`` from the spatial
    gradient of the canonical shape at the transformed points.

    The translation block is the spatial gradient itself; the rotation
    block contracts it with the rotation-vector Jacobian, whose rows are
    ``cross(x, R^T grad) @ M``.
    """
    rot = rotation_matrix(rotvec)
    factor = _pose_jacobian_factor(rotvec)
    out = np.empty((points.shape[0], 6))
    out[:, :3] = np.cross(points, spatial_grad @ rot) @ factor
    out[:, 3:] = spatial_grad
    return out


def rigid_gradient(shape, params, points, spatial_step=1e-3):
    """Closed-form gradient w.r.t. the pose: ``[rotation(3), translation(3)]``.

    Returns shape ``(n_points, 6)`` (or ``(6,)`` for a single point).
    """
    split = shape.rigid_split
    if split is None:
        raise ValueError(f"{type(shape).__name__} has no rigid pose")
    deform, rotvec, _ = shape.split(params)
    pts, single = _as_batch(points, shape.ndim)
    canon = shape.transform_points(params, pts)
    spatial = shape.spatial_gradient_canonical(deform, canon, step=spatial_step)
    out = rigid_pose_block(rotvec, pts, spatial)
    return out[0] if single else out


def values_and_gradient(shape, params, points, delta=None, spatial_step=1e-3):
    """Shape values and the parameter-gradient matrix in one call.

    Shapes may provide a fused fast path (sharing nearest-point state, for
    instance); otherwise this falls back to separate evaluation.
    """
    fast = getattr(shape, "values_and_gradient", None)
    if fast is not None:
        return fast(params, points, delta=delta, spatial_step=spatial_step)
    values = shape.evaluate(params, points)
    grad = parameter_gradient_field(shape, params, points, delta=delta,
                                    spatial_step=spatial_step)
    return values, grad


def parameter_gradient_field(shape, params, points, delta=None, spatial_step=1e-3):
    """Gradient of the shape value w.r.t. every parameter over a point batch.

    Uses the analytic gradient when the shape provides one.  For posed
    shapes the points are transformed once, deformable parameters are
    differenced in the canonical frame and the pose block is analytic,
    which keeps the number of full evaluations at ``2 * n_deformable + 6``.
    """
    params = np.asarray(params, dtype=np.float64)
    pts, single = _as_batch(points, shape.ndim)

    analytic = shape.parameter_gradient(params, pts)
    if analytic is not None:
        return analytic

    split = shape.rigid_split
    if split is None:
        grad = fd_gradient(shape, params, pts, delta=delta)
        return grad[0] if single else grad

    deform, _, _ = shape.split(params)
    if delta is None:
        delta = default_fd_steps(shape)
    delta = np.asarray(delta, dtype=np.float64)
    bounds = np.asarray(shape.bounds, dtype=np.float64)
    canon = shape.transform_points(params, pts)

    grad = np.empty((pts.shape[0], params.size))
    for j, i in enumerate(split.deformable):
        hi = deform.copy()
        lo = deform.copy()
        hi[j] = min(params[i] + delta[i], bounds[i, 1])
        lo[j] = max(params[i] - delta[i], bounds[i, 0])
        spread = hi[j] - lo[j]
        if spread <= 0:
            raise ValueError(
                f"cannot perturb parameter {shape.param_names[i]}: zero-width bounds"
            )
        grad[:, i] = (
            shape.evaluate_canonical(hi, canon) - shape.evaluate_canonical(lo, canon)
        ) / spread
    pose = rigid_gradient(shape, params, pts, spatial_step=spatial_step)
    grad[:, list(split.rotation) + list(split.translation)] = pose
    return grad[0] if single else grad
