"""Scikit-learn style estimator wrapping the fitting loop.

The estimator follows the usual conventions: constructor arguments are
stored verbatim (so ``get_params`` / ``set_params`` / ``clone`` work),
``fit`` returns ``self`` and exposes trailing-underscore attributes, and
``predict`` / ``predict_proba`` raise ``NotFittedError`` before fitting.
Inputs are volumes; plain 2-D/3-D arrays are accepted and wrapped with
unit spacing.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .inference import FitConfig, ShapePrior, e_step, fit, hard_segmentation
from .shapes import CircleShape, CochleaShape
from .volume import Volume

__all__ = ["LogisticShapeSegmenter", "as_volume"]


def as_volume(X, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)):
    """Validate input as a Volume; wrap bare arrays with the given geometry."""
    if isinstance(X, Volume):
        return X
    X = np.asarray(X)
    if X.ndim not in (2, 3):
        raise ValueError(f"expected a Volume or a 2-D/3-D array, got ndim={X.ndim}")
    if not np.issubdtype(X.dtype, np.number):
        raise ValueError(f"image array must be numeric, got dtype {X.dtype}")
    return Volume(X, spacing, origin)


def resolve_shape(shape):
    """Turn a shape spec ('cochlea', 'circle' or an instance) into a shape."""
    if isinstance(shape, str):
        if shape == "cochlea":
            return CochleaShape()
        if shape == "circle":
            return CircleShape()
        raise ValueError(f"unknown shape {shape!r}; use 'cochlea', 'circle' or an instance")
    return shape


class LogisticShapeSegmenter(BaseEstimator):
    """Binary segmentation with a parametric shape prior.

    Parameters
    ----------
    shape : str or ShapeFunction, default="cochlea"
        Shape model to fit.
    ref_length : float, default=0.1
        Reference length of the logistic prior during fitting.
    ref_length_hard : float or None, default=0.25
        Reference length of the final hard segmentation (None: ``ref_length``).
    initial_params : array-like or None
        Starting parameter vector; None uses the shape's defaults.
    intensity : IntensityParams or None
        Initial appearance model; None uses the CT defaults.
    shape_prior_covariance : array-like or None
        Gaussian penalty on shape steps; None means uniform.
    outer_tol, inner_tol, max_cycles, ms_max_outer, ms_max_inner, seed
        Forwarded to :class:`FitConfig`.

    Attributes
    ----------
    shape_params_ : ndarray
        Optimized shape parameters.
    covariance_ : ndarray
        Laplace covariance of the shape parameters.
    intensity_ : IntensityParams
        Fitted appearance model.
    result_ : FitResult
        Full fit record (trace, fields, masks).
    """

    def __init__(self, shape="cochlea", ref_length=0.1, ref_length_hard=0.25,
                 initial_params=None, intensity=None, shape_prior_covariance=None,
                 outer_tol=0.1, inner_tol=1e-3, max_cycles=10, ms_max_outer=10,
                 ms_max_inner=30, seed=0):
        self.shape = shape
        self.ref_length = ref_length
        self.ref_length_hard = ref_length_hard
        self.initial_params = initial_params
        self.intensity = intensity
        self.shape_prior_covariance = shape_prior_covariance
        self.outer_tol = outer_tol
        self.inner_tol = inner_tol
        self.max_cycles = max_cycles
        self.ms_max_outer = ms_max_outer
        self.ms_max_inner = ms_max_inner
        self.seed = seed

    def _config(self):
        return FitConfig(
            ref_length=self.ref_length, ref_length_hard=self.ref_length_hard,
            outer_tol=self.outer_tol, inner_tol=self.inner_tol,
            max_cycles=self.max_cycles, ms_max_outer=self.ms_max_outer,
            ms_max_inner=self.ms_max_inner, seed=self.seed,
        )

    def fit(self, X, y=None):
        """Fit shape and intensity parameters to the image ``X``."""
        image = as_volume(X)
        shape = resolve_shape(self.shape)
        prior = (ShapePrior(np.asarray(self.shape_prior_covariance, dtype=np.float64))
                 if self.shape_prior_covariance is not None else None)
        result = fit(
            image, shape, self._config(),
            intensity=self.intensity,
            initial_params=self.initial_params,
            shape_prior=prior,
        )
        self.shape_ = shape
        self.result_ = result
        self.shape_params_ = result.shape_params
        self.covariance_ = result.covariance
        self.intensity_ = result.intensity
        self.converged_ = result.converged
        self.n_cycles_ = len(result.trace)
        return self

    def _check_fitted(self):
        if not hasattr(self, "result_"):
            raise NotFittedError(
                f"this {type(self).__name__} instance is not fitted yet; call fit first"
            )

    def predict_proba(self, X=None):
        """Posterior foreground probability field.

        With ``X=None`` the fitted image's field is returned (cheap); a new
        volume is evaluated with the fitted parameters.
        """
        self._check_fitted()
        ref = self.result_.config.hard_ref_length
        if X is None:
            return self.result_.posterior(ref)
        return e_step(as_volume(X), self.shape_, self.shape_params_,
                      self.intensity_, ref)

    def predict(self, X=None):
        """Hard foreground mask (probability >= 1/2) as a uint8 Volume."""
        return hard_segmentation(self.predict_proba(X))

    def segmented_shape(self):
        """Mask of the fitted shape itself, independent of the appearance."""
        self._check_fitted()
        return self.result_.ssi_mask()
