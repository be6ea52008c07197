"""Parametric cochlea shape: spiral centerline plus a swept circular tube.

The centerline lives in cylindrical coordinates over a polar angle running
from 0 to ``theta_max``.  Its radial component starts as a quadratic in the
basal region and continues as a decaying exponential; its height combines a
damped sinusoid with a linear rise and is flattened by a quadratic over the
last half turn.  Both pieces are joined with matching value and slope, so
the curve is continuously differentiable everywhere.

Four deformable parameters control the centerline (radial scale and decay,
axial amplitude and phase); six pose parameters place it in the image.  The
shape function is a pseudo signed distance: tube radius at the nearest
centerline point minus the distance to that point, positive inside the
tube.  Cross-sections are circular with a linearly tapering radius; the
taper endpoints are model constants, keeping the free parameter count at
ten.

Nearest-point searches drive the cost of every evaluation.  A coarse scan
over uniformly spaced angles brackets the best candidate in the two closest
turns (neighbouring turns of the spiral can be almost equidistant, and the
scan alone cannot tell them apart reliably); golden-section plus a
safeguarded Newton polish then refines both and the smaller true distance
wins.  Evaluations can be warm-started from known nearest angles, which
lets gradient code skip the coarse scan for slightly perturbed parameters
or points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import PosedShapeFunction, _as_batch

__all__ = [
    "CochleaModel",
    "CochleaShape",
    "radial",
    "radial_derivative",
    "longitudinal",
    "longitudinal_derivative",
    "centerline",
    "centerline_point",
    "sdm_grid",
]

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
_GOLDEN2 = (3.0 - np.sqrt(5.0)) / 2.0


@dataclass(frozen=True)
class CochleaModel:
    """Fixed constants and parameter bounds of the cochlea shape.

    ``theta_max`` defaults to two and a half turns.  The tube radius tapers
    linearly from ``tube_radius_base`` at the basal end to
    ``tube_radius_apex`` at the apex; both are fixed constants, not free
    parameters.
    """

    theta_max: float = 5.0 * np.pi
    seam_angle: float = 5.0 * np.pi / 6.0       # radial quadratic/exponential seam
    base_radius: float = 5.0                    # mm, radial value at angle 0
    axial_decay: float = 0.2                    # 1/rad
    axial_slope: float = 0.225                  # mm/rad
    tube_radius_base: float = 1.0               # mm
    tube_radius_apex: float = 0.4               # mm
    radial_scale_bounds: tuple = (2.0, 7.0)
    radial_decay_bounds: tuple = (0.05, 0.4)
    axial_amplitude_bounds: tuple = (0.1, 2.0)
    axial_phase_bounds: tuple = (-np.pi, np.pi)
    rotation_limit: float = np.pi / 4.0
    translation_limit: float = 3.0

    def __post_init__(self):
        if not self.theta_max > self.seam_angle + np.pi:
            raise ValueError("theta_max must exceed seam_angle + pi")
        if self.tube_radius_base <= 0 or self.tube_radius_apex <= 0:
            raise ValueError("tube radii must be positive")

    @property
    def flatten_angle(self):
        """Start of the flattened final half turn."""
        return self.theta_max - np.pi

    def tube_radius(self, theta):
        t = np.asarray(theta, dtype=np.float64) / self.theta_max
        return self.tube_radius_base + (self.tube_radius_apex - self.tube_radius_base) * t

    def default_deformable(self):
        return np.array([4.0, 0.15, 0.6, 0.2])


def _check_angle(model, theta):
    theta = np.asarray(theta, dtype=np.float64)
    if np.any(theta < 0.0) or np.any(theta > model.theta_max):
        raise ValueError(
            f"polar angle outside [0, {model.theta_max:g}]: "
            f"min={theta.min():g} max={theta.max():g}"
        )
    return theta


def radial_coefficients(model, radial_scale, radial_decay):
    """Quadratic coefficients (c2, c1) joining the exponential branch with
    matching value and slope at the seam angle."""
    t0 = model.seam_angle
    seam_value = radial_scale * np.exp(-radial_decay * t0)
    seam_slope = -seam_value * radial_decay
    c2 = (seam_slope * t0 - seam_value + model.base_radius) / t0**2
    c1 = (-seam_slope * t0 + 2.0 * seam_value - 2.0 * model.base_radius) / t0
    return c2, c1


def _radial_raw(model, theta, radial_scale, radial_decay):
    c2, c1 = radial_coefficients(model, radial_scale, radial_decay)
    quad = (c2 * theta + c1) * theta + model.base_radius
    expo = radial_scale * np.exp(-radial_decay * theta)
    return np.where(theta < model.seam_angle, quad, expo)


def radial(model, theta, radial_scale, radial_decay):
    """Radial centerline component in mm over ``theta`` in [0, theta_max]."""
    return _radial_raw(model, _check_angle(model, theta), radial_scale, radial_decay)


def radial_derivative(model, theta, radial_scale, radial_decay):
    theta = _check_angle(model, theta)
    c2, c1 = radial_coefficients(model, radial_scale, radial_decay)
    quad = 2.0 * c2 * theta + c1
    expo = -radial_decay * radial_scale * np.exp(-radial_decay * theta)
    return np.where(theta < model.seam_angle, quad, expo)


def axial_coefficients(model, amplitude, phase):
    """Quadratic coefficients (a2, a1, a0) of the flattened final half turn.

    Chosen so height and slope are continuous at the flatten angle and the
    slope vanishes at ``theta_max``.
    """
    t1 = model.flatten_angle
    decay = np.exp(-model.axial_decay * t1)
    value = amplitude * decay * np.cos(t1 + phase) + model.axial_slope * t1
    slope = (
        amplitude * decay * (-model.axial_decay * np.cos(t1 + phase) - np.sin(t1 + phase))
        + model.axial_slope
    )
    a2 = -slope / (2.0 * np.pi)
    a1 = -2.0 * a2 * model.theta_max
    a0 = value - (a2 * t1 + a1) * t1
    return a2, a1, a0


def _longitudinal_raw(model, theta, amplitude, phase):
    a2, a1, a0 = axial_coefficients(model, amplitude, phase)
    osc = (
        amplitude * np.exp(-model.axial_decay * theta) * np.cos(theta + phase)
        + model.axial_slope * theta
    )
    quad = (a2 * theta + a1) * theta + a0
    return np.where(theta < model.flatten_angle, osc, quad)


def longitudinal(model, theta, amplitude, phase):
    """Height of the centerline in mm over ``theta`` in [0, theta_max]."""
    return _longitudinal_raw(model, _check_angle(model, theta), amplitude, phase)


def longitudinal_derivative(model, theta, amplitude, phase):
    theta = _check_angle(model, theta)
    a2, a1, _ = axial_coefficients(model, amplitude, phase)
    decay = np.exp(-model.axial_decay * theta)
    osc = (
        amplitude * decay * (-model.axial_decay * np.cos(theta + phase) - np.sin(theta + phase))
        + model.axial_slope
    )
    quad = 2.0 * a2 * theta + a1
    return np.where(theta < model.flatten_angle, osc, quad)


def centerline_point(model, deformable, theta):
    """Cartesian centerline points for (checked) polar angles, shape (n, 3)."""
    radial_scale, radial_decay, amplitude, phase = deformable
    theta = np.asarray(theta, dtype=np.float64)
    r = _radial_raw(model, theta, radial_scale, radial_decay)
    z = _longitudinal_raw(model, theta, amplitude, phase)
    return np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=-1)


def centerline(model, deformable, n_samples):
    """Uniformly sampled centerline polyline over the full angular range."""
    if n_samples < 2:
        raise ValueError(f"n_samples must be >= 2, got {n_samples}")
    theta = np.linspace(0.0, model.theta_max, int(n_samples))
    return centerline_point(model, deformable, _check_angle(model, theta))


class _DistanceField:
    """Squared distance to the centerline as a function of the polar angle,
    fused for per-point angle vectors.

    Per-point terms (x, y, z, x^2 + y^2) are fixed at construction; each
    call evaluates the curve and the squared distance (optionally with its
    first two angle derivatives) at one angle per point using four
    transcendental array operations.
    """

    def __init__(self, model, deformable, points):
        self.model = model
        self.scale, self.decay, self.amplitude, self.phase = (float(v) for v in deformable)
        self.px = points[:, 0]
        self.py = points[:, 1]
        self.pz = points[:, 2]
        self.rho2 = self.px * self.px + self.py * self.py
        self.c2, self.c1 = radial_coefficients(model, self.scale, self.decay)
        self.a2, self.a1, self.a0 = axial_coefficients(model, self.amplitude, self.phase)
        self.cos_phase = np.cos(self.phase)
        self.sin_phase = np.sin(self.phase)

    def __call__(self, theta, derivs=False):
        m = self.model
        cos_t = np.cos(theta)
        sin_t = np.sin(theta)
        exp_r = np.exp(-self.decay * theta)
        exp_z = np.exp(-m.axial_decay * theta)
        in_quad = theta < m.seam_angle
        in_osc = theta < m.flatten_angle

        r = np.where(in_quad, (self.c2 * theta + self.c1) * theta + m.base_radius,
                     self.scale * exp_r)
        cos_tp = cos_t * self.cos_phase - sin_t * self.sin_phase
        z = np.where(in_osc,
                     self.amplitude * exp_z * cos_tp + m.axial_slope * theta,
                     (self.a2 * theta + self.a1) * theta + self.a0)
        proj = self.px * cos_t + self.py * sin_t
        dz = z - self.pz
        d2 = self.rho2 + r * r - 2.0 * r * proj + dz * dz
        if not derivs:
            return d2

        sin_tp = sin_t * self.cos_phase + cos_t * self.sin_phase
        rp = np.where(in_quad, 2.0 * self.c2 * theta + self.c1,
                      -self.decay * self.scale * exp_r)
        rpp = np.where(in_quad, 2.0 * self.c2,
                       self.decay * self.decay * self.scale * exp_r)
        beta = m.axial_decay
        zp = np.where(in_osc,
                      self.amplitude * exp_z * (-beta * cos_tp - sin_tp) + m.axial_slope,
                      2.0 * self.a2 * theta + self.a1)
        zpp = np.where(in_osc,
                       self.amplitude * exp_z * ((beta * beta - 1.0) * cos_tp
                                                 + 2.0 * beta * sin_tp),
                       2.0 * self.a2)
        projp = -self.px * sin_t + self.py * cos_t
        g = 2.0 * (r * rp - rp * proj - r * projp + dz * zp)
        h = 2.0 * (rp * rp + r * rpp - rpp * proj - 2.0 * rp * projp + r * proj
                   + zp * zp + dz * zpp)
        return d2, g, h

    def newton_polish(self, theta, lo, hi, iters):
        """Clamped Newton steps on the squared distance; never worsens the
        incoming angle (the best candidate seen is returned)."""
        best_theta = theta
        best_d2 = None
        for _ in range(iters):
            d2, g, h = self(theta, derivs=True)
            if best_d2 is None:
                best_theta, best_d2 = theta, d2
            else:
                better = d2 < best_d2
                best_theta = np.where(better, theta, best_theta)
                best_d2 = np.where(better, d2, best_d2)
            step = np.where(h > 1e-12, -g / np.where(h > 1e-12, h, 1.0), 0.0)
            np.clip(step, -0.1, 0.1, out=step)
            theta = np.clip(theta + step, lo, hi)
        d2 = self(theta)
        better = d2 < best_d2
        return np.where(better, theta, best_theta), np.where(better, d2, best_d2)

    def golden(self, lo, hi, iters):
        a, b = lo.copy(), hi.copy()
        c = a + _GOLDEN2 * (b - a)
        d = a + _GOLDEN * (b - a)
        fc = self(c)
        fd = self(d)
        for _ in range(iters):
            left = fc < fd  # minimum bracketed in [a, d]
            a = np.where(left, a, c)
            b = np.where(left, d, b)
            c_old, fc_old = c, fc
            span = b - a
            c = np.where(left, a + _GOLDEN2 * span, d)
            d = np.where(left, c_old, a + _GOLDEN * span)
            probe = np.where(left, c, d)  # one freshly placed probe per lane
            f_probe = self(probe)
            fc = np.where(left, f_probe, fd)
            fd = np.where(left, fc_old, f_probe)
        theta = np.where(fc < fd, c, d)
        return theta, a, b


class CochleaShape(PosedShapeFunction):
    """Pseudo signed-distance shape function of the swept cochlea tube."""

    deformable_names = ("radial_scale", "radial_decay", "axial_amplitude", "axial_phase")

    def __init__(self, model=None, coarse_samples=512, golden_iters=8,
                 newton_iters=3, chunk_size=16384):
        self.model = model if model is not None else CochleaModel()
        self.coarse_samples = int(coarse_samples)
        self.golden_iters = int(golden_iters)
        self.newton_iters = int(newton_iters)
        self.chunk_size = int(chunk_size)
        m = self.model
        self._bounds = np.array(
            [
                m.radial_scale_bounds,
                m.radial_decay_bounds,
                m.axial_amplitude_bounds,
                m.axial_phase_bounds,
            ]
            + [(-m.rotation_limit, m.rotation_limit)] * 3
            + [(-m.translation_limit, m.translation_limit)] * 3,
            dtype=np.float64,
        )

    @property
    def bounds(self):
        return self._bounds

    def default_params(self):
        """Deformable defaults with an identity pose."""
        return np.concatenate([self.model.default_deformable(), np.zeros(6)])

    def _coarse_candidates(self, deformable, pts):
        """Indices of the best coarse sample and of the best one in a
        non-neighbouring half-turn band (the competing spiral turn).

        Selection runs in float32 (the winners are re-measured exactly
        afterwards).  Samples are grouped into half-turn bands so the
        runner-up search is a cheap band-level argmin instead of a
        per-row window mask.
        """
        m = self.model
        n_samples = self.coarse_samples
        theta_grid = np.linspace(0.0, m.theta_max, n_samples)
        cl32 = centerline_point(m, deformable, theta_grid).astype(np.float32)
        cl_sq = np.einsum("ij,ij->i", cl32, cl32)
        pts32 = pts.astype(np.float32)

        n_bands = max(int(round(m.theta_max / np.pi)), 1)
        width = -(-n_samples // n_bands)  # ceil
        pad = n_bands * width - n_samples
        band_ids = np.arange(n_bands)

        n = pts.shape[0]
        idx1 = np.empty(n, dtype=np.intp)
        idx2 = np.empty(n, dtype=np.intp)
        neg2cl = np.ascontiguousarray(-2.0 * cl32.T)
        buf = np.full((min(self.chunk_size, n), n_bands * width), np.inf, dtype=np.float32)
        for start in range(0, n, self.chunk_size):
            sl = slice(start, min(start + self.chunk_size, n))
            chunk = pts32[sl]
            rows = np.arange(chunk.shape[0])
            d2 = buf[: chunk.shape[0]]
            # |p - c|^2 minus the constant |p|^2 term: enough for selection
            np.matmul(chunk, neg2cl, out=d2[:, :n_samples])
            d2[:, :n_samples] += cl_sq
            banded = d2.reshape(chunk.shape[0], n_bands, width)
            band_arg = np.argmin(banded, axis=2)
            band_min = banded[rows[:, np.newaxis], band_ids, band_arg]
            best_band = np.argmin(band_min, axis=1)
            idx1[sl] = best_band * width + band_arg[rows, best_band]
            # exclude the winning band and its neighbours, then take the best
            for offset in (-1, 0, 1):
                nb = best_band + offset
                ok = (nb >= 0) & (nb < n_bands)
                band_min[rows[ok], nb[ok]] = np.inf
            second_band = np.argmin(band_min, axis=1)
            flat = second_band * width + band_arg[rows, second_band]
            idx2[sl] = np.where(np.isfinite(band_min[rows, second_band]), flat, idx1[sl])
        return theta_grid, np.minimum(idx1, n_samples - 1), np.minimum(idx2, n_samples - 1)

    def _nearest_full(self, field, deformable, pts):
        theta_grid, idx1, idx2 = self._coarse_candidates(deformable, pts)
        spacing = theta_grid[1] - theta_grid[0]
        n = pts.shape[0]
        theta_best = None
        d2_best = None
        for idx in (idx1, idx2):
            lo = np.maximum(theta_grid[idx] - spacing, 0.0)
            hi = np.minimum(theta_grid[idx] + spacing, self.model.theta_max)
            theta, a, b = field.golden(lo, hi, self.golden_iters)
            theta, d2 = field.newton_polish(theta, a, b, self.newton_iters)
            if theta_best is None:
                theta_best, d2_best = theta, d2
            else:
                better = d2 < d2_best
                theta_best = np.where(better, theta, theta_best)
                d2_best = np.where(better, d2, d2_best)
        if not np.all(np.isfinite(theta_best)):
            raise FloatingPointError("nearest-point search failed to bracket a minimum")
        return theta_best, d2_best

    def _nearest_warm(self, field, theta0, window=0.05):
        lo = np.maximum(theta0 - window, 0.0)
        hi = np.minimum(theta0 + window, self.model.theta_max)
        return field.newton_polish(theta0, lo, hi, self.newton_iters + 1)

    def nearest_parameter(self, deformable, points):
        """Angle of the nearest centerline point for each query point."""
        pts, single = _as_batch(points, 3)
        field = _DistanceField(self.model, deformable, pts)
        theta, _ = self._nearest_full(field, deformable, pts)
        return float(theta[0]) if single else theta

    def evaluate_canonical(self, deformable, points, init_theta=None):
        """Shape value in the canonical frame.

        ``init_theta`` warm-starts the nearest-point search; it must come
        from an evaluation at nearby parameters and points.  The result
        matches a cold evaluation to solver precision wherever the nearest
        turn of the spiral is unambiguous; exactly on the medial surface
        between turns the value is discontinuous anyway and the warm path
        keeps the incumbent turn.
        """
        pts, single = _as_batch(points, 3)
        field = _DistanceField(self.model, deformable, pts)
        if init_theta is None:
            theta, d2 = self._nearest_full(field, deformable, pts)
        else:
            theta, d2 = self._nearest_warm(field, init_theta)
        values = self.model.tube_radius(theta) - np.sqrt(np.maximum(d2, 0.0))
        return float(values[0]) if single else values

    def evaluate_canonical_with_state(self, deformable, points):
        """Canonical values plus the nearest angles (for warm restarts)."""
        pts, _ = _as_batch(points, 3)
        field = _DistanceField(self.model, deformable, pts)
        theta, d2 = self._nearest_full(field, deformable, pts)
        return self.model.tube_radius(theta) - np.sqrt(np.maximum(d2, 0.0)), theta

    def spatial_gradient_canonical(self, deformable, points, step=1e-3, init_theta=None):
        pts, single = _as_batch(points, 3)
        if init_theta is None:
            _, init_theta = self.evaluate_canonical_with_state(deformable, pts)
        grad = np.empty_like(pts)
        for axis in range(3):
            shift = np.zeros(3)
            shift[axis] = step
            hi = self.evaluate_canonical(deformable, pts + shift, init_theta=init_theta)
            lo = self.evaluate_canonical(deformable, pts - shift, init_theta=init_theta)
            grad[:, axis] = (hi - lo) / (2.0 * step)
        return grad[0] if single else grad

    def values_and_gradient(self, params, points, delta=None, spatial_step=1e-3):
        """Shape values and the full parameter-gradient matrix in one pass.

        The cold nearest-point search runs once; every perturbed evaluation
        (deformable central differences and the spatial gradient feeding
        the pose block) is warm-started from its angles.
        """
        from ..gradients import default_fd_steps, rigid_pose_block

        params = np.asarray(params, dtype=np.float64)
        pts, _ = _as_batch(points, 3)
        deform, _, _ = self.split(params)
        canon = self.transform_points(params, pts)
        values, theta0 = self.evaluate_canonical_with_state(deform, canon)

        if delta is None:
            delta = default_fd_steps(self)
        delta = np.asarray(delta, dtype=np.float64)
        grad = np.empty((pts.shape[0], self.n_params))
        split = self.rigid_split
        for j, i in enumerate(split.deformable):
            hi = deform.copy()
            lo = deform.copy()
            hi[j] = min(params[i] + delta[i], self._bounds[i, 1])
            lo[j] = max(params[i] - delta[i], self._bounds[i, 0])
            spread = hi[j] - lo[j]
            grad[:, i] = (
                self.evaluate_canonical(hi, canon, init_theta=theta0)
                - self.evaluate_canonical(lo, canon, init_theta=theta0)
            ) / spread
        spatial = self.spatial_gradient_canonical(
            deform, canon, step=spatial_step, init_theta=theta0
        )
        pose = rigid_pose_block(params[4:7], pts, spatial)
        grad[:, 4:] = pose
        return values, grad


def sdm_grid(shape, params, grid):
    """Shape-function values of a posed cochlea over a grid, as a Volume."""
    from ..prior import shape_value_volume

    return shape_value_volume(shape, params, grid)
