import numpy as np
import pytest

from shapeseg import (CircleShape, CochleaShape, fd_gradient,
                      parameter_gradient_field, rigid_gradient)
from shapeseg.shapes.base import PosedShapeFunction, ShapeFunction


class OffsetShape(ShapeFunction):
    """Constant field equal to its single parameter."""

    ndim = 3
    param_names = ("offset",)
    bounds = np.array([[-10.0, 10.0]])

    def evaluate(self, params, points):
        pts = np.atleast_2d(points)
        out = np.full(pts.shape[0], float(np.asarray(params)[0]))
        return float(out[0]) if np.asarray(points).ndim == 1 else out


class PlanarShape(PosedShapeFunction):
    """Canonical half-space n.x + offset with a rigid pose and no
    deformable parameters."""

    deformable_names = ()
    normal = np.array([0.3, -1.1, 0.7])
    offset = 0.25

    @property
    def bounds(self):
        return np.array([[-2.5, 2.5]] * 3 + [[-5.0, 5.0]] * 3)

    def evaluate_canonical(self, deformable, points):
        return points @ self.normal + self.offset

    def spatial_gradient_canonical(self, deformable, points, step=1e-3, **_):
        return np.broadcast_to(self.normal, (np.atleast_2d(points).shape[0], 3)).copy()


class QuadricShape(PosedShapeFunction):
    """Smooth posed test shape: size^2 minus an anisotropic quadratic."""

    deformable_names = ("size",)

    def __init__(self, matrix, center):
        self.matrix = matrix
        self.center = center

    @property
    def bounds(self):
        return np.array([[0.1, 10.0]] + [[-2.5, 2.5]] * 3 + [[-5.0, 5.0]] * 3)

    def evaluate_canonical(self, deformable, points):
        diff = np.atleast_2d(points) - self.center
        return deformable[0] ** 2 - np.einsum("ni,ij,nj->n", diff, self.matrix, diff)

    def spatial_gradient_canonical(self, deformable, points, step=1e-3, **_):
        diff = np.atleast_2d(points) - self.center
        return -2.0 * diff @ self.matrix


def _random_quadric(rng):
    a = rng.normal(size=(3, 3))
    return QuadricShape(matrix=a @ a.T + 0.5 * np.eye(3), center=rng.normal(size=3))


def _rel_err(approx, ref):
    return np.linalg.norm(approx - ref) / max(np.linalg.norm(ref), 1e-30)


def test_fd_on_constant_offset_shape():
    grad = fd_gradient(OffsetShape(), np.array([2.0]), np.array([0.3, 0.1, -0.4]))
    assert grad == pytest.approx(np.array([1.0]), abs=1e-12)


def test_fd_matches_circle_analytic_gradient():
    shape = CircleShape(center_bounds=((-2, 2), (-2, 2)), radius_bounds=(0.01, 1.5))
    params = np.array([0.2, -0.1, 0.7])
    pts = np.array([[0.5, 0.5], [-0.3, 0.9], [0.2, -0.1]])
    fd = fd_gradient(shape, params, pts)
    analytic = shape.parameter_gradient(params, pts)
    assert np.allclose(fd, analytic, atol=1e-8)
    # radius column is 2R for the inside-positive quadratic circle
    assert np.allclose(analytic[:, 2], 2 * 0.7)


def test_fd_rejects_nonpositive_step():
    with pytest.raises(ValueError):
        fd_gradient(OffsetShape(), np.array([0.0]), np.zeros(3), delta=0.0)


def test_fd_clips_steps_at_bounds():
    shape = OffsetShape()
    grad = fd_gradient(shape, np.array([10.0]), np.zeros(3), delta=1.0)
    # forward step clipped to the bound; one-sided difference still exact here
    assert grad == pytest.approx(np.array([1.0]), abs=1e-12)


def test_fd_truncation_error_scales_quadratically():
    rng = np.random.default_rng(3)
    shape = _random_quadric(rng)
    params = np.array([1.3, 0.4, -0.2, 0.3, 0.5, -0.4, 0.8])
    x = rng.normal(size=3)

    def exact_rotation_gradient():
        return rigid_gradient(shape, params, x)[:3]

    # cubic in the rotation entries, so central differences carry an O(h^2) error
    err = {}
    for h in (4e-2, 2e-2):
        fd = fd_gradient(shape, params, x, delta=h)[1:4]
        err[h] = np.linalg.norm(fd - exact_rotation_gradient())
    assert err[2e-2] < err[4e-2] / 3.0  # ~4x for exact O(h^2)


def test_cochlea_fd_matches_richardson_oracle(cochlea_shape):
    params = cochlea_shape.default_params()
    probe = np.array([2.5, 1.5, 1.0])
    h = 5e-3

    def central(step):
        out = np.empty(4)
        for i in range(4):
            hi = params.copy()
            lo = params.copy()
            hi[i] += step
            lo[i] -= step
            out[i] = (cochlea_shape.evaluate(hi, probe) - cochlea_shape.evaluate(lo, probe)) / (2 * step)
        return out

    richardson = (4.0 * central(h / 2) - central(h)) / 3.0
    fd = fd_gradient(cochlea_shape, params, probe)[:4]
    assert _rel_err(fd, richardson) < 1e-4


def test_planar_translation_gradient_is_normal():
    shape = PlanarShape()
    params = np.array([0.3, -0.2, 0.5, 0.7, -0.4, 0.2])
    grads = rigid_gradient(shape, params, np.array([[0.5, 1.0, -0.3], [0.0, 0.0, 0.0]]))
    assert np.allclose(grads[:, 3:], shape.normal, atol=1e-12)


def test_small_angle_rotation_block_matches_fd():
    rng = np.random.default_rng(5)
    shape = _random_quadric(rng)
    for _ in range(10):
        rot = rng.normal(size=3)
        rot *= 1e-5 / np.linalg.norm(rot)
        params = np.concatenate([[1.2], rot, rng.normal(size=3)])
        x = rng.normal(size=3)
        rigid = rigid_gradient(shape, params, x)
        fd = fd_gradient(shape, params, x, delta=1e-6)
        assert _rel_err(rigid[:3], fd[1:4]) < 1e-6
        assert _rel_err(rigid[3:], fd[4:7]) < 1e-6


def test_rigid_gradient_matches_fd_on_random_instances():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        shape = _random_quadric(rng)
        rot = rng.normal(size=3)
        rot *= rng.uniform(0.1, 2.0) / np.linalg.norm(rot)
        params = np.concatenate([[rng.uniform(0.5, 2.0)], rot, rng.uniform(-1, 1, 3)])
        x = rng.normal(size=3)
        rigid = rigid_gradient(shape, params, x)
        fd = fd_gradient(shape, params, x, delta=1e-5)
        worst = max(worst, _rel_err(rigid, fd[1:]))
    assert worst < 1e-5


def test_cochlea_rotation_block_at_half_radian(cochlea_shape):
    rng = np.random.default_rng(17)
    rot = rng.normal(size=3)
    rot *= 0.5 / np.linalg.norm(rot)
    params = cochlea_shape.default_params()
    params[4:7] = rot
    params[7:10] = (0.4, -0.3, 0.2)
    # probes at moderate distance from the centerline, away from kink sets
    probes = np.array([[2.5, 1.5, 1.0], [-2.0, 1.0, 0.6], [0.5, -3.0, 0.8], [3.5, 0.5, 2.0]])
    for probe in probes:
        rigid = rigid_gradient(cochlea_shape, params, probe)
        fd = fd_gradient(cochlea_shape, params, probe, delta=1e-5)
        assert _rel_err(rigid, fd[4:]) < 1e-5


def test_rigid_gradient_requires_pose():
    with pytest.raises(ValueError):
        rigid_gradient(CircleShape(), np.array([0.0, 0.0, 1.0]), np.array([0.1, 0.2]))


def test_parameter_gradient_field_uses_analytic_circle():
    shape = CircleShape(center_bounds=((-2, 2), (-2, 2)), radius_bounds=(0.01, 1.5))
    params = np.array([0.0, 0.0, 1.0])
    pts = np.array([[0.5, 0.5], [1.0, -1.0]])
    field = parameter_gradient_field(shape, params, pts)
    assert np.allclose(field, shape.parameter_gradient(params, pts))


def test_parameter_gradient_field_cochlea_consistent(cochlea_shape):
    params = cochlea_shape.default_params()
    params[4:7] = (0.05, -0.1, 0.2)
    pts = np.array([[2.5, 1.5, 1.0], [-2.0, 1.0, 0.6]])
    field = parameter_gradient_field(cochlea_shape, params, pts)
    pose = rigid_gradient(cochlea_shape, params, pts)
    assert np.allclose(field[:, 4:], pose, rtol=1e-6, atol=1e-8)
    fd = fd_gradient(cochlea_shape, params, pts)
    assert _rel_err(field[:, :4], fd[:, :4]) < 1e-4


def test_fast_values_and_gradient_matches_slow_path(cochlea_shape, small_grid):
    params = cochlea_shape.default_params()
    params[4:7] = (0.03, 0.02, -0.04)
    params[7:10] = (0.2, -0.1, 0.3)
    pts = small_grid.points()
    values, grad = cochlea_shape.values_and_gradient(params, pts)
    assert np.allclose(values, cochlea_shape.evaluate(params, pts), atol=1e-9)
    slow = parameter_gradient_field(cochlea_shape, params, pts)
    # frozen nearest angles differ only near medial/discontinuity sets
    agree = np.isclose(grad, slow, rtol=1e-3, atol=1e-4).all(axis=1)
    assert agree.mean() > 0.995
