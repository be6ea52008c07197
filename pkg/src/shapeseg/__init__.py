"""Bayesian logistic shape-model inference for binary image segmentation.

A generative model couples a parametric shape prior (a sigmoid of a signed
shape function) with a Student-t mixture appearance model.  Fitting
alternates expectation steps, Gauss-Newton shape updates and closed-form
intensity updates, and returns a Laplace approximation of the
shape-parameter posterior that drives Monte-Carlo uncertainty maps.
"""

__version__ = "0.1.0"

from .appearance import (IntensityParams, StudentTComponent, class_likelihood,
                         class_log_likelihood, default_ct_intensity, mi_step,
                         t_logpdf, t_pdf)
from .estimator import LogisticShapeSegmenter, as_volume
from .gradients import fd_gradient, parameter_gradient_field, rigid_gradient
from .inference import (CycleRecord, FitConfig, FitDivergenceError, FitResult,
                        MsStepResult, ShapePosterior, ShapePrior, e_step, fit,
                        hard_segmentation, log_joint, ms_step)
from .io import (MissingDataFileError, UnknownElementTypeError, VolumeIOError,
                 VolumeSizeMismatchError, read_volume, write_volume)
from .metrics import dice, hausdorff, surface_points
from .phantoms import PhantomSpec, synth_phantom
from .prior import expected_posterior, logistic_prior, prior_field, shape_value_volume
from .shapes import (CircleShape, CochleaModel, CochleaShape, EllipsePhantomShape,
                     PosedShapeFunction, ShapeFunction, clip_params, validate_params)
from .sweep import SweepRow, lref_sweep, write_sweep_csv
from .uncertainty import (PosteriorSamples, log_euclidean_mean, marginal_posterior,
                          sample_posterior)
from .volume import Volume

__all__ = [
    "__version__",
    "Volume", "as_volume", "read_volume", "write_volume",
    "VolumeIOError", "VolumeSizeMismatchError", "UnknownElementTypeError",
    "MissingDataFileError",
    "logistic_prior", "expected_posterior", "prior_field", "shape_value_volume",
    "ShapeFunction", "PosedShapeFunction", "CircleShape", "EllipsePhantomShape",
    "CochleaModel", "CochleaShape", "validate_params", "clip_params",
    "fd_gradient", "rigid_gradient", "parameter_gradient_field",
    "StudentTComponent", "IntensityParams", "t_pdf", "t_logpdf",
    "class_likelihood", "class_log_likelihood", "mi_step", "default_ct_intensity",
    "FitConfig", "ShapePrior", "ShapePosterior", "FitResult", "FitDivergenceError",
    "CycleRecord", "MsStepResult", "e_step", "log_joint", "ms_step", "fit",
    "hard_segmentation",
    "LogisticShapeSegmenter",
    "dice", "hausdorff", "surface_points",
    "PhantomSpec", "synth_phantom",
    "SweepRow", "lref_sweep", "write_sweep_csv",
    "PosteriorSamples", "sample_posterior", "marginal_posterior",
    "log_euclidean_mean",
]
