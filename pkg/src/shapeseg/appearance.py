"""Student-t mixture-of-mixtures appearance model.

Background and foreground intensities are each modeled by a mixture of
Student's t-distributions, whose heavy tails make the estimates robust to
extreme values.  Each component has a mixing weight, a mean, a scale and a
degrees-of-freedom parameter, so a model with M0 + M1 components carries
4 * (M0 + M1) parameters.

The voxel-weighted EM update (the appearance half of the outer fitting
loop) treats every t-distribution as a Gaussian scale mixture: hidden
per-component responsibilities and Gamma precision weights are computed in
an expectation pass, after which weights, means and scales have closed-form
maximizers.  Degrees of freedom are kept fixed by default; a bracketed
1-D root solve of their stationarity condition is available.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq
from scipy.special import digamma, gammaln, logsumexp

__all__ = [
    "StudentTComponent",
    "IntensityParams",
    "t_pdf",
    "t_logpdf",
    "class_likelihood",
    "class_log_likelihood",
    "mi_step",
    "MiStepInfo",
    "default_ct_intensity",
]

BACKGROUND = 0
FOREGROUND = 1


@dataclass(frozen=True)
class StudentTComponent:
    """One mixture component: weight, mean (HU), scale (HU), degrees of freedom."""

    weight: float
    mean: float
    scale: float
    dof: float

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"weight must be in [0, 1], got {self.weight}")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if not self.dof > 0:
            raise ValueError(f"degrees of freedom must be positive, got {self.dof}")


@dataclass(frozen=True)
class IntensityParams:
    """Per-class component lists; weights within each class sum to one."""

    background: tuple
    foreground: tuple

    def __post_init__(self):
        object.__setattr__(self, "background", tuple(self.background))
        object.__setattr__(self, "foreground", tuple(self.foreground))
        for name, comps in (("background", self.background), ("foreground", self.foreground)):
            if not comps:
                raise ValueError(f"{name} must have at least one component")
            total = sum(c.weight for c in comps)
            if abs(total - 1.0) > 1e-12:
                raise ValueError(f"{name} weights sum to {total!r}, expected 1")

    def components(self, k):
        if k == BACKGROUND:
            return self.background
        if k == FOREGROUND:
            return self.foreground
        raise ValueError(f"class index must be 0 or 1, got {k}")

    @property
    def n_params(self):
        return 4 * (len(self.background) + len(self.foreground))

    def arrays(self, k):
        """Component parameters as (weights, means, scales, dofs) arrays."""
        comps = self.components(k)
        return tuple(
            np.array([getattr(c, f) for c in comps])
            for f in ("weight", "mean", "scale", "dof")
        )

    def class_vector(self, k):
        """Flat parameter vector of one class (used for convergence checks)."""
        return np.concatenate(self.arrays(k))

    def to_dict(self):
        return {
            name: [
                {"weight": c.weight, "mean": c.mean, "scale": c.scale, "dof": c.dof}
                for c in comps
            ]
            for name, comps in (("background", self.background), ("foreground", self.foreground))
        }

    @classmethod
    def from_dict(cls, data):
        def build(entries):
            return tuple(
                StudentTComponent(
                    weight=float(e["weight"]),
                    mean=float(e["mean"]),
                    scale=float(e["scale"]),
                    dof=float(e["dof"]),
                )
                for e in entries
            )

        return cls(background=build(data["background"]), foreground=build(data["foreground"]))


def default_ct_intensity():
    """Default CT initialization in Hounsfield units.

    Foreground: inner fluid near 0 HU and bony walls near 500 HU.
    Background: fluid, dense bone, air and surrounding temporal bone.
    Scales start wide; degrees of freedom start at 5.
    """
    fg_means = (0.0, 500.0)
    bg_means = (0.0, 2000.0, -1000.0, 600.0)
    return IntensityParams(
        background=tuple(
            StudentTComponent(1.0 / len(bg_means), m, 150.0, 5.0) for m in bg_means
        ),
        foreground=tuple(
            StudentTComponent(1.0 / len(fg_means), m, 150.0, 5.0) for m in fg_means
        ),
    )


def t_logpdf(x, mean, scale, dof):
    """Log density of the location-scale Student's t-distribution."""
    x = np.asarray(x, dtype=np.float64)
    if not (np.all(np.isfinite(x)) and np.isfinite(mean) and np.isfinite(scale) and np.isfinite(dof)):
        raise ValueError("t_logpdf arguments must be finite")
    if scale <= 0 or dof <= 0:
        raise ValueError(f"scale and dof must be positive, got scale={scale}, dof={dof}")
    z2 = np.square((x - mean) / scale)
    out = (
        gammaln((dof + 1.0) / 2.0)
        - gammaln(dof / 2.0)
        - 0.5 * np.log(np.pi * dof)
        - np.log(scale)
        - (dof + 1.0) / 2.0 * np.log1p(z2 / dof)
    )
    return float(out) if out.ndim == 0 else out


def t_pdf(x, mean, scale, dof):
    """Density of the location-scale Student's t-distribution."""
    return np.exp(t_logpdf(x, mean, scale, dof))


def _component_logpdfs(values, weights, means, scales, dofs):
    """Matrix of log(weight * pdf) with shape (n_values, n_components)."""
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    cols = [
        np.log(w) + t_logpdf(values, m, s, d) if w > 0 else np.full(values.size, -np.inf)
        for w, m, s, d in zip(weights, means, scales, dofs)
    ]
    return np.stack(cols, axis=1)


def class_log_likelihood(values, k, params):
    """Log of the class mixture density at each intensity value."""
    lw = _component_logpdfs(values, *params.arrays(k))
    return logsumexp(lw, axis=1)


def class_likelihood(values, k, params):
    """Mixture density of class ``k`` at the given intensities."""
    values = np.asarray(values, dtype=np.float64)
    out = np.exp(class_log_likelihood(values, k, params))
    return float(out[0]) if values.ndim == 0 else out.reshape(values.shape)


@dataclass
class MiStepInfo:
    """Diagnostics of one appearance update call."""

    rounds: int
    log_likelihoods: list = field(default_factory=list)
    frozen_components: int = 0
    converged: bool = False


def _dof_root(dof_old, mean_log_w_minus_w):
    """Stationarity root of the degrees of freedom on [0.1, 200]."""

    def f(nu):
        return (
            np.log(nu / 2.0)
            - digamma(nu / 2.0)
            + 1.0
            + mean_log_w_minus_w
            + digamma((nu + 1.0) / 2.0)
            - np.log((nu + 1.0) / 2.0)
        )

    lo, hi = 0.1, 200.0
    flo, fhi = f(lo), f(hi)
    if flo > 0 and fhi > 0:
        return hi
    if flo < 0 and fhi < 0:
        return lo
    return brentq(f, lo, hi, xtol=1e-8)


def _update_class(values, u_k, comps, nu_update, min_scale, freeze_fraction):
    """One weighted scale-mixture EM round for one class; returns new comps."""
    n = values.size
    total_u = float(np.sum(u_k))
    if total_u <= n * 1e-15:
        return comps, 0  # no effective data for this class: leave untouched

    weights, means, scales, dofs = (
        np.array([getattr(c, f) for c in comps]) for f in ("weight", "mean", "scale", "dof")
    )
    lw = _component_logpdfs(values, weights, means, scales, dofs)
    log_norm = logsumexp(lw, axis=1, keepdims=True)
    resp = np.exp(lw - log_norm)                      # tau, rows sum to 1
    gamma = resp * u_k[:, np.newaxis]                 # class-weighted responsibilities
    n_m = gamma.sum(axis=0)

    frozen = n_m < freeze_fraction * n
    n_frozen = int(np.count_nonzero(frozen))
    if n_frozen:
        warnings.warn(
            f"{n_frozen} mixture component(s) with effective weight below "
            f"{freeze_fraction:g} * n frozen for this round",
            RuntimeWarning,
            stacklevel=3,
        )

    z2 = np.square((values[:, np.newaxis] - means) / scales)
    w = (dofs + 1.0) / (dofs + z2)                    # Gamma precision weights

    new_weight = n_m / total_u
    new_weight = new_weight / new_weight.sum()
    new_means = means.copy()
    new_scales = scales.copy()
    new_dofs = dofs.copy()
    for m in range(len(comps)):
        if frozen[m]:
            continue
        gw = gamma[:, m] * w[:, m]
        denom = float(gw.sum())
        if denom <= 0:
            continue
        mu = float(gw @ values) / denom
        var = float(gamma[:, m] @ (w[:, m] * np.square(values - mu))) / float(n_m[m])
        new_means[m] = mu
        new_scales[m] = max(np.sqrt(var), min_scale)
        if nu_update == "solve":
            log_w_term = gamma[:, m] @ (np.log(w[:, m]) - w[:, m]) / n_m[m]
            new_dofs[m] = _dof_root(dofs[m], float(log_w_term))

    new_comps = tuple(
        StudentTComponent(float(new_weight[m]), float(new_means[m]),
                          float(new_scales[m]), float(new_dofs[m]))
        for m in range(len(comps))
    )
    return new_comps, n_frozen


def weighted_log_likelihood(values, fg_weight, params):
    """Class-weighted data log-likelihood: sum over voxels and classes of
    u_k * log p(value | class k)."""
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    u = np.asarray(fg_weight, dtype=np.float64).reshape(-1)
    ll0 = class_log_likelihood(values, BACKGROUND, params)
    ll1 = class_log_likelihood(values, FOREGROUND, params)
    return float(np.sum((1.0 - u) * ll0) + np.sum(u * ll1))


def mi_step(values, fg_weight, params, *, max_rounds=50, tol=1e-3,
            nu_update="fixed", min_scale=1.0, freeze_fraction=1e-8):
    """Update the intensity parameters against soft labels.

    Runs weighted EM rounds (both classes, background weighted by ``1 - u``)
    until the relative change of the foreground parameter vector drops below
    ``tol`` or ``max_rounds`` is reached.  The class-weighted log-likelihood
    is recorded per round and is non-decreasing.

    Parameters
    ----------
    values : ndarray
        Flat (or any-shape) intensity samples.
    fg_weight : ndarray
        Foreground probability per sample, in [0, 1].
    params : IntensityParams
    nu_update : {"fixed", "solve"}
        Keep degrees of freedom at their current values or re-solve their
        stationarity condition each round.

    Returns
    -------
    (IntensityParams, MiStepInfo)
    """
    if nu_update not in ("fixed", "solve"):
        raise ValueError(f"nu_update must be 'fixed' or 'solve', got {nu_update!r}")
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    u = np.asarray(fg_weight, dtype=np.float64).reshape(-1)
    if values.shape != u.shape:
        raise ValueError(f"values {values.shape} and fg_weight {u.shape} differ")
    if np.any(u < 0) or np.any(u > 1):
        raise ValueError("fg_weight values must lie in [0, 1]")

    info = MiStepInfo(rounds=0)
    info.log_likelihoods.append(weighted_log_likelihood(values, u, params))
    for _ in range(max_rounds):
        fg_old = params.class_vector(FOREGROUND)
        bg, frozen_bg = _update_class(values, 1.0 - u, params.background,
                                      nu_update, min_scale, freeze_fraction)
        fg, frozen_fg = _update_class(values, u, params.foreground,
                                      nu_update, min_scale, freeze_fraction)
        params = IntensityParams(background=bg, foreground=fg)
        info.frozen_components += frozen_bg + frozen_fg
        info.rounds += 1
        info.log_likelihoods.append(weighted_log_likelihood(values, u, params))
        fg_new = params.class_vector(FOREGROUND)
        denom = float(np.linalg.norm(fg_old))
        change = float(np.linalg.norm(fg_new - fg_old)) / max(denom, 1e-30)
        if change < tol:
            info.converged = True
            break
    return params, info


__all__ += ["weighted_log_likelihood", "BACKGROUND", "FOREGROUND"]
