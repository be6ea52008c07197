"""Logistic shape prior and its expected-posterior response curve.

A shape function assigns each point a signed value, positive inside the
object and negative outside.  Passing that value through a sigmoid with a
reference length turns it into a per-voxel foreground prior probability.
The reference length sets the slope at the boundary and thereby how far the
segmentation may deviate from the modeled shape.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .volume import Volume

__all__ = ["logistic_prior", "expected_posterior", "prior_field"]


def logistic_prior(value, ref_length):
    """Foreground prior probability sigma(value / ref_length).

    Parameters
    ----------
    value : float or ndarray
        Shape-function value(s), positive inside the object.
    ref_length : float
        Reference length, strictly positive, in the units of ``value``.

    Returns
    -------
    float or ndarray
        Probability in [0, 1].  ``logistic_prior(-v, l)`` is the
        complementary background probability.
    """
    if not ref_length > 0:
        raise ValueError(f"ref_length must be > 0, got {ref_length}")
    value = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(value)):
        raise ValueError("shape-function value must be finite")
    out = expit(value / ref_length)
    return float(out) if out.ndim == 0 else out


# Odd Taylor series of the closed form around zero; the x**5 term is far
# below double rounding for |x| < 1e-3 but keeps the join smooth.
_TAYLOR_C1 = 1.0 / 6.0
_TAYLOR_C3 = -1.0 / 180.0
_TAYLOR_C5 = 1.0 / 5040.0


def expected_posterior(scaled_distance):
    """Mean posterior foreground probability at a given boundary offset.

    Under a uniformly distributed appearance posterior, the expected label
    posterior at a point whose shape-function value is ``scaled_distance``
    times the reference length has the closed form
    ``(1 - (1 + x) * exp(-x)) / (exp(-x) - 1)**2``.

    The removable singularity at zero is evaluated by series expansion, and
    the negative branch is rescaled to avoid overflow, so the function is
    total over finite inputs.
    """
    x = np.asarray(scaled_distance, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("scaled_distance must be finite")
    out = np.empty_like(x)

    near = np.abs(x) < 1e-3
    xn = x[near]
    out[near] = 0.5 + xn * (_TAYLOR_C1 + xn * xn * (_TAYLOR_C3 + xn * xn * _TAYLOR_C5))

    pos = ~near & (x > 0)
    xp = x[pos]
    em = np.exp(-xp)
    out[pos] = (1.0 - (1.0 + xp) * em) / np.square(1.0 - em)

    neg = ~near & (x < 0)
    xm = x[neg]
    ep = np.exp(xm)  # both numerator and denominator scaled by exp(2x)
    out[neg] = (ep * ep - (1.0 + xm) * ep) / np.square(1.0 - ep)

    return float(out) if out.ndim == 0 else out


def prior_field(shape, params, grid, ref_length):
    """Per-voxel logistic prior of ``shape`` over a grid.

    Parameters
    ----------
    shape : ShapeFunction
    params : ndarray
        Full parameter vector for ``shape``.
    grid : Volume
        Provides voxel positions; its data values are ignored.
    ref_length : float

    Returns
    -------
    Volume
        Probability field on the same grid.
    """
    values = evaluate_on_grid(shape, params, grid)
    return grid.like(logistic_prior(values, ref_length))


def evaluate_on_grid(shape, params, grid):
    """Shape-function values at all voxel centers, as a flat float array."""
    pts = grid.points()[:, : shape.ndim]
    values = shape.evaluate(params, pts)
    bad = ~np.isfinite(values)
    if np.any(bad):
        idx = int(np.flatnonzero(bad)[0])
        raise FloatingPointError(
            f"shape function returned non-finite value at voxel {idx} "
            f"(position {pts[idx]})"
        )
    return values


def shape_value_volume(shape, params, grid):
    """Shape-function values as a :class:`Volume` (signed, mm for SDF shapes)."""
    return grid.like(evaluate_on_grid(shape, params, grid))


__all__ += ["evaluate_on_grid", "shape_value_volume"]
