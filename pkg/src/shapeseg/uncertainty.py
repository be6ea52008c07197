"""Segmentation uncertainty from the Laplace shape-parameter posterior.

Monte-Carlo marginal posterior maps average the label posterior over shape
parameters drawn from the fitted Gaussian approximation, which widens the
uncertain band around the segmentation compared with the plug-in posterior
at the single best parameter vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .inference import _log_likelihood_fields
from .parallel import ordered_map
from .prior import evaluate_on_grid

__all__ = [
    "PosteriorSamples",
    "sample_posterior",
    "marginal_posterior",
    "log_euclidean_mean",
]


@dataclass(frozen=True)
class PosteriorSamples:
    """Draws from the Gaussian shape-parameter posterior.

    ``n_clipped`` counts draws that had at least one coordinate clipped to
    the parameter bounds.
    """

    samples: np.ndarray
    seed: int
    n_clipped: int = 0

    def __len__(self):
        return self.samples.shape[0]


def sample_posterior(posterior, n_samples, seed, bounds=None):
    """Draw from N(params, covariance) by Cholesky; clip to bounds.

    ``posterior`` is anything with ``params`` and ``covariance`` attributes
    (a ShapePosterior or a FitResult's ``shape_posterior``).  Identical
    seeds give identical samples.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    mean = np.asarray(posterior.params, dtype=np.float64)
    cov = np.asarray(posterior.covariance, dtype=np.float64)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            "posterior covariance is not positive definite; "
            "the upstream curvature was degenerate"
        ) from exc
    rng = np.random.default_rng(seed)
    draws = mean + rng.standard_normal((int(n_samples), mean.size)) @ chol.T
    n_clipped = 0
    if bounds is not None:
        bounds = np.asarray(bounds, dtype=np.float64)
        clipped = np.clip(draws, bounds[:, 0], bounds[:, 1])
        n_clipped = int(np.count_nonzero(np.any(clipped != draws, axis=1)))
        draws = clipped
    return PosteriorSamples(samples=draws, seed=int(seed), n_clipped=n_clipped)


def marginal_posterior(image, shape, samples, intensity, ref_length, workers=None):
    """Voxelwise average of the label posterior over shape-parameter draws.

    Per-sample fields may be computed in parallel; the average accumulates
    in sample order, so the result does not depend on the worker count.
    """
    draws = samples.samples if isinstance(samples, PosteriorSamples) else np.asarray(samples)
    if draws.ndim != 2 or draws.shape[0] == 0:
        raise ValueError("samples must be a non-empty (n, n_params) array")
    values = np.asarray(image.data, dtype=np.float64).reshape(-1)
    ll0, ll1 = _log_likelihood_fields(values, intensity)
    llr = ll1 - ll0

    def field(row):
        scaled = evaluate_on_grid(shape, row, image) / ref_length
        return expit(llr + scaled)

    total = np.zeros(values.size)
    for u in ordered_map(field, list(draws), workers=workers):
        total += u
    return image.like(total / draws.shape[0])


def log_euclidean_mean(covariances):
    """Log-Euclidean mean of symmetric positive-definite matrices.

    Computes exp(mean(log(S_i))) through eigendecompositions; the result is
    symmetric positive definite and independent of input order.
    """
    mats = [np.asarray(c, dtype=np.float64) for c in covariances]
    if not mats:
        raise ValueError("need at least one covariance matrix")
    dim = mats[0].shape[0]
    acc = np.zeros((dim, dim))
    for i, mat in enumerate(mats):
        if mat.shape != (dim, dim):
            raise ValueError(f"covariance {i} has shape {mat.shape}, expected {(dim, dim)}")
        if not np.allclose(mat, mat.T, atol=1e-10):
            raise ValueError(f"covariance {i} is not symmetric")
        eigvals, eigvecs = np.linalg.eigh(mat)
        if np.any(eigvals <= 0):
            raise ValueError(f"covariance {i} is not positive definite")
        acc += (eigvecs * np.log(eigvals)) @ eigvecs.T
    acc /= len(mats)
    eigvals, eigvecs = np.linalg.eigh(acc)
    mean = (eigvecs * np.exp(eigvals)) @ eigvecs.T
    return 0.5 * (mean + mean.T)
