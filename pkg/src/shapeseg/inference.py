"""EM engine for logistic shape-model segmentation.

The outer loop alternates three blocks: an expectation step that sets the
per-voxel foreground responsibilities to the current label posterior, a
Gauss-Newton shape update, and closed-form appearance updates.  It stops
when the foreground intensity parameters change by less than a relative
threshold.

The shape update minimizes the voxel cross-entropy between the
responsibilities and the logistic shape prior,

    J(step) = -sum_n [ u_n log s(z_n) + (1 - u_n) log s(-z_n) ] + penalty,
    z = scaled shape values + gradient_matrix^T step,

whose gradient and curvature have the familiar reweighted-least-squares
form.  The curvature (plus any Gaussian step penalty) is positive
semi-definite by construction; its inverse at the optimum doubles as the
Laplace covariance of the shape parameters.  The shape function is
re-linearized in an outer loop, and each Newton step is truncated to the
parameter bounds and backtracked until the objective decreases, so the
inner objective never increases across accepted iterations.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import expit, log_expit

from .appearance import FOREGROUND, class_log_likelihood, default_ct_intensity, mi_step
from .gradients import values_and_gradient
from .prior import evaluate_on_grid
from .shapes.base import validate_params
from .volume import Volume

__all__ = [
    "FitConfig",
    "ShapePrior",
    "ShapePosterior",
    "MsStepResult",
    "CycleRecord",
    "FitResult",
    "FitDivergenceError",
    "e_step",
    "log_joint",
    "ms_step",
    "fit",
    "hard_segmentation",
]

_CHUNK = 1 << 16
_TINY = 1e-30


class FitDivergenceError(RuntimeError):
    """The log-joint dropped far below its running range; the fit aborted."""


@dataclass
class FitConfig:
    """Knobs of the outer fitting loop.

    ``ref_length`` scales the shape function inside the prior during
    inference; ``ref_length_hard`` is used for the final hard segmentation
    (``None`` falls back to ``ref_length``).  ``outer_tol`` is the relative
    change of the foreground intensity parameters that stops the outer
    loop; ``inner_tol`` stops both loops of the shape update.
    """

    ref_length: float = 0.1
    ref_length_hard: float = 0.25
    outer_tol: float = 0.1
    inner_tol: float = 1e-3
    max_cycles: int = 10
    ms_max_outer: int = 10
    ms_max_inner: int = 30
    ms_halvings: int = 12
    mi_max_rounds: int = 50
    mi_tol: float = 1e-3
    nu_update: str = "fixed"
    min_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("ref_length", "outer_tol", "inner_tol", "mi_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.ref_length_hard is not None and not self.ref_length_hard > 0:
            raise ValueError(f"ref_length_hard must be positive, got {self.ref_length_hard}")

    @property
    def hard_ref_length(self):
        return self.ref_length if self.ref_length_hard is None else self.ref_length_hard


@dataclass(frozen=True)
class ShapePrior:
    """Gaussian penalty on the per-outer-iteration shape step.

    ``covariance=None`` is the uniform (no-penalty) default; a matrix must
    be symmetric positive definite.  The penalty acts on the parameter
    increment within each re-linearization, so it regularizes step size
    rather than anchoring the parameters globally.
    """

    covariance: np.ndarray = None

    def __post_init__(self):
        if self.covariance is not None:
            cov = np.asarray(self.covariance, dtype=np.float64)
            if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
                raise ValueError(f"covariance must be square, got {cov.shape}")
            if not np.allclose(cov, cov.T, atol=1e-12):
                raise ValueError("covariance must be symmetric")
            try:
                cho_factor(cov)
            except LinAlgError as exc:
                raise ValueError("covariance must be positive definite") from exc
            object.__setattr__(self, "covariance", cov)

    def precision(self, n_params):
        if self.covariance is None:
            return np.zeros((n_params, n_params))
        if self.covariance.shape[0] != n_params:
            raise ValueError(
                f"prior covariance is {self.covariance.shape[0]}x..., "
                f"expected {n_params}"
            )
        return cho_solve(cho_factor(self.covariance), np.eye(n_params))


@dataclass(frozen=True)
class ShapePosterior:
    """Laplace approximation of the shape-parameter posterior."""

    params: np.ndarray
    covariance: np.ndarray


def _log_likelihood_fields(values, intensity):
    ll0 = class_log_likelihood(values, 0, intensity)
    ll1 = class_log_likelihood(values, 1, intensity)
    both = np.isneginf(ll0) & np.isneginf(ll1)
    if np.any(both):
        idx = int(np.flatnonzero(both)[0])
        raise FloatingPointError(
            f"both class densities vanish at voxel {idx} (value {values[idx]!r})"
        )
    return ll0, ll1


def e_step(image, shape, params, intensity, ref_length):
    """Posterior foreground probability per voxel as a Volume.

    Computed in log space as sigmoid(log-likelihood ratio + scaled shape
    value), which is exact and immune to under/overflow.
    """
    values = np.asarray(image.data, dtype=np.float64).reshape(-1)
    ll0, ll1 = _log_likelihood_fields(values, intensity)
    scaled = evaluate_on_grid(shape, params, image) / ref_length
    return image.like(expit((ll1 - ll0) + scaled))


def _log_joint_from_fields(ll0, ll1, scaled):
    per_voxel = np.logaddexp(ll0 + log_expit(-scaled), ll1 + log_expit(scaled))
    return float(np.sum(per_voxel))


def log_joint(image, shape, params, intensity, ref_length):
    """Log of the joint probability of the image and the parameters.

    Parameter priors are uniform, so they contribute no varying term; the
    value is the sum over voxels of the log mixture of class likelihoods
    weighted by the logistic prior.
    """
    values = np.asarray(image.data, dtype=np.float64).reshape(-1)
    ll0, ll1 = _log_likelihood_fields(values, intensity)
    scaled = evaluate_on_grid(shape, params, image) / ref_length
    return _log_joint_from_fields(ll0, ll1, scaled)


def _cross_entropy(u, z):
    return -float(np.sum(u * log_expit(z) + (1.0 - u) * log_expit(-z)))


def _gauss_newton_terms(d, resid, curv, chunk=_CHUNK):
    """g = d^T resid and H = d^T diag(curv) d accumulated in fixed-size
    chunks; the reduction order is independent of array size and thread
    count, so repeated runs are bit-identical."""
    n, p = d.shape
    g = np.zeros(p)
    h = np.zeros((p, p))
    for s in range(0, n, chunk):
        sl = slice(s, min(s + chunk, n))
        dc = d[sl]
        g += dc.T @ resid[sl]
        h += (dc * curv[sl, np.newaxis]).T @ dc
    return g, h


def _solve_spd(h, g):
    """Solve h x = g, Levenberg-damping h if the factorization fails."""
    damped = False
    lam = 0.0
    scale = max(float(np.trace(h)) / h.shape[0], _TINY)
    for _ in range(12):
        try:
            factor = cho_factor(h + lam * np.eye(h.shape[0]), lower=True)
            return cho_solve(factor, g), factor, damped
        except LinAlgError:
            damped = True
            lam = scale * 1e-8 if lam == 0.0 else lam * 100.0
    raise LinAlgError("curvature matrix could not be factorized even with damping")


@dataclass
class MsStepResult:
    """Outcome of one shape update (Gauss-Newton with Laplace covariance)."""

    params: np.ndarray
    covariance: np.ndarray
    scaled_values: np.ndarray          # shape values / ref_length at params
    responsibility: np.ndarray         # refreshed when a likelihood ratio is given
    inner_costs: list = field(default_factory=list)   # one J sequence per outer pass
    outer_steps: list = field(default_factory=list)
    converged: bool = False
    damped: bool = False
    line_search_failures: int = 0

    @property
    def posterior(self):
        return ShapePosterior(self.params, self.covariance)


def ms_step(image, responsibility, shape, params, ref_length, *,
            log_lik_ratio=None, shape_prior=None, max_outer=10, max_inner=30,
            tol=1e-3, halvings=12, fd_delta=None, spatial_step=1e-3):
    """Gauss-Newton update of the shape parameters against responsibilities.

    Two nested loops: the outer one re-evaluates the shape values and the
    parameter-gradient matrix (the expensive part), the inner one takes
    damped, bound-truncated Newton steps on the linearized cross-entropy
    objective with backtracking.  When ``log_lik_ratio`` is given, the
    responsibilities are refreshed from the current shape between outer
    passes, which accelerates the surrounding EM loop.

    Returns a :class:`MsStepResult`; its covariance is the inverse
    curvature at the optimum (Laplace approximation).
    """
    u = np.clip(np.asarray(
        responsibility.data if isinstance(responsibility, Volume) else responsibility,
        dtype=np.float64).reshape(-1), 0.0, 1.0)
    params = validate_params(shape, params).copy()
    bounds = np.asarray(shape.bounds, dtype=np.float64)
    prior = shape_prior if shape_prior is not None else ShapePrior()
    precision = prior.precision(shape.n_params)
    pts = image.points()[:, : shape.ndim]

    result = MsStepResult(
        params=params, covariance=np.eye(shape.n_params),
        scaled_values=None, responsibility=u,
    )

    def objective(scaled_lin, delta):
        return _cross_entropy(u, scaled_lin) + 0.5 * float(delta @ precision @ delta)

    d = None
    for outer in range(max_outer):
        values, grad = values_and_gradient(
            shape, params, pts, delta=fd_delta, spatial_step=spatial_step
        )
        scaled = values / ref_length
        d = grad / ref_length
        if outer > 0 and log_lik_ratio is not None:
            u = expit(log_lik_ratio + scaled)
        delta = np.zeros(shape.n_params)
        cost = objective(scaled, delta)
        costs = [cost]
        for _ in range(max_inner):
            z = scaled + d @ delta
            mu = expit(z)
            g, h = _gauss_newton_terms(d, mu - u, mu * (1.0 - mu))
            g += precision @ delta
            h += precision
            step, _, damped = _solve_spd(h, -g)
            if damped:
                result.damped = True
                warnings.warn(
                    "curvature not positive definite; Levenberg damping applied",
                    RuntimeWarning, stacklevel=2,
                )
            accepted = False
            scale = 1.0
            for _ in range(halvings + 1):
                candidate = np.clip(params + delta + scale * step,
                                    bounds[:, 0], bounds[:, 1]) - params
                cand_cost = objective(scaled + d @ candidate, candidate)
                if cand_cost < cost:
                    accepted = True
                    break
                scale *= 0.5
            if not accepted:
                result.line_search_failures += 1
                break
            moved = float(np.linalg.norm(candidate - delta))
            delta, cost = candidate, cand_cost
            costs.append(cost)
            if moved / max(float(np.linalg.norm(params + delta)), _TINY) < tol:
                break
        result.inner_costs.append(costs)
        params = params + delta
        step_norm = float(np.linalg.norm(delta))
        result.outer_steps.append(step_norm)
        if step_norm / max(float(np.linalg.norm(params)), _TINY) < tol:
            result.converged = True
            break

    # final shape values at the optimum; curvature there gives the Laplace
    # covariance (gradient matrix from the last linearization)
    scaled = evaluate_on_grid(shape, params, image) / ref_length
    if log_lik_ratio is not None:
        u = expit(log_lik_ratio + scaled)
    mu = expit(scaled)
    _, h = _gauss_newton_terms(d, mu - u, mu * (1.0 - mu))
    h += precision
    identity = np.eye(shape.n_params)
    try:
        cov = cho_solve(cho_factor(h, lower=True), identity)
    except LinAlgError:
        warnings.warn(
            "final curvature not positive definite; covariance from damped inverse",
            RuntimeWarning, stacklevel=2,
        )
        _, factor, _ = _solve_spd(h, np.zeros(shape.n_params))
        cov = cho_solve(factor, identity)
    result.params = params
    result.covariance = 0.5 * (cov + cov.T)
    result.scaled_values = scaled
    result.responsibility = u
    return result


@dataclass
class CycleRecord:
    """One row of the fit trace."""

    cycle: int
    log_joint: float
    shape_params: np.ndarray
    step_norm: float
    fg_change: float
    foreground: list                 # (mean, scale) per foreground component


@dataclass
class FitResult:
    """Everything produced by one fit.

    ``shape_values`` holds the signed shape function at the optimum (in the
    shape's own units), from which the best-fit shape mask and the
    posterior at any reference length are derived without re-evaluating
    the shape.
    """

    shape_params: np.ndarray
    covariance: np.ndarray
    intensity: object
    shape_values: Volume
    log_lik_ratio: Volume
    responsibility: Volume
    config: FitConfig
    converged: bool
    trace: list
    ms_results: list

    @property
    def shape_posterior(self):
        return ShapePosterior(self.shape_params, self.covariance)

    def posterior(self, ref_length=None):
        """Posterior foreground probability field at a reference length."""
        l = self.config.ref_length if ref_length is None else ref_length
        return self.shape_values.like(
            expit(self.log_lik_ratio.data + self.shape_values.data / l)
        )

    def sroi_mask(self):
        """Hard segmentation of the posterior at the hard reference length."""
        return hard_segmentation(self.posterior(self.config.hard_ref_length))

    def ssi_mask(self):
        """Hard mask of the fitted shape itself (prior probability >= 1/2)."""
        return self.shape_values.like((self.shape_values.data >= 0.0).astype(np.uint8))

    @property
    def log_joints(self):
        return [rec.log_joint for rec in self.trace]


def fit(image, shape, config=None, *, intensity=None, initial_params=None,
        shape_prior=None):
    """Fit shape and intensity parameters to an image.

    Each cycle refreshes the responsibilities, runs the Gauss-Newton shape
    update, then updates the intensity mixtures until they stabilize.  The
    loop ends when the foreground intensity parameters change by less than
    ``config.outer_tol`` in relative norm, and aborts with
    :class:`FitDivergenceError` if the log-joint falls by more than 10% of
    its running range in one cycle.
    """
    config = config if config is not None else FitConfig()
    if initial_params is None:
        if not hasattr(shape, "default_params"):
            raise ValueError("initial_params is required for this shape")
        initial_params = shape.default_params()
    params = validate_params(shape, initial_params).copy()
    intensity = intensity if intensity is not None else default_ct_intensity()

    values = np.asarray(image.data, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(values)):
        raise ValueError("image contains non-finite values")
    ll0, ll1 = _log_likelihood_fields(values, intensity)
    llr = ll1 - ll0
    scaled = evaluate_on_grid(shape, params, image) / config.ref_length

    trace, ms_results, log_joints = [], [], []
    converged = False
    for cycle in range(config.max_cycles):
        u = expit(llr + scaled)
        ms = ms_step(
            image, u, shape, params, config.ref_length,
            log_lik_ratio=llr, shape_prior=shape_prior,
            max_outer=config.ms_max_outer, max_inner=config.ms_max_inner,
            tol=config.inner_tol, halvings=config.ms_halvings,
        )
        step_norm = float(np.linalg.norm(ms.params - params))
        params, scaled, u = ms.params, ms.scaled_values, ms.responsibility

        fg_old = intensity.class_vector(FOREGROUND)
        intensity, _ = mi_step(
            values, u, intensity, max_rounds=config.mi_max_rounds,
            tol=config.mi_tol, nu_update=config.nu_update,
            min_scale=config.min_scale,
        )
        ll0, ll1 = _log_likelihood_fields(values, intensity)
        llr = ll1 - ll0
        fg_new = intensity.class_vector(FOREGROUND)
        fg_change = float(np.linalg.norm(fg_new - fg_old)) / max(
            float(np.linalg.norm(fg_old)), _TINY
        )

        current = _log_joint_from_fields(ll0, ll1, scaled)
        if log_joints:
            span = max(log_joints) - min(log_joints)
            if span > 0 and current < log_joints[-1] - 0.1 * span:
                raise FitDivergenceError(
                    f"log-joint dropped from {log_joints[-1]:.6g} to {current:.6g} "
                    f"(more than 10% of its range {span:.6g}) at cycle {cycle}"
                )
        log_joints.append(current)
        trace.append(CycleRecord(
            cycle=cycle, log_joint=current, shape_params=params.copy(),
            step_norm=step_norm, fg_change=fg_change,
            foreground=[(c.mean, c.scale) for c in intensity.foreground],
        ))
        ms_results.append(ms)
        if fg_change < config.outer_tol:
            converged = True
            break

    responsibility = image.like(expit(llr + scaled))
    return FitResult(
        shape_params=params,
        covariance=ms_results[-1].covariance if ms_results else np.eye(shape.n_params),
        intensity=intensity,
        shape_values=image.like(scaled * config.ref_length),
        log_lik_ratio=image.like(llr),
        responsibility=responsibility,
        config=config,
        converged=converged,
        trace=trace,
        ms_results=ms_results,
    )


def hard_segmentation(probability, threshold=0.5):
    """Threshold a probability field into a binary mask (ties go foreground)."""
    data = probability.data if isinstance(probability, Volume) else np.asarray(probability)
    if np.any(data < 0) or np.any(data > 1):
        raise ValueError("probability field must lie in [0, 1]")
    mask = (data >= threshold).astype(np.uint8)
    if isinstance(probability, Volume):
        return probability.like(mask)
    return mask
