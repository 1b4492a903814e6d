"""Copula estimation from a training burst: MLE per family, AIC, selection."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import optimize, special, stats

from .copulas import (
    EPS,
    CopulaError,
    CopulaFamily,
    CopulaLibrary,
    CopulaModel,
    clamp_unit,
    log_density_for,
    n_params,
    tau_to_param,
)
from .marginals import MarginalModel

log = logging.getLogger(__name__)


class FitError(RuntimeError):
    """A copula fit failed (degenerate data or optimiser non-convergence)."""


@dataclass(frozen=True)
class PseudoObservations:
    """Training vectors mapped through the known marginal CDFs of one hypothesis."""

    U: np.ndarray
    hypothesis: Optional[int] = None

    def __post_init__(self):
        U = np.array(self.U, dtype=float)
        if U.ndim != 2 or U.shape[0] < 2 or U.shape[1] < 2:
            raise ValueError(f"pseudo-observations need shape (N>=2, L>=2), got {U.shape}")
        U = clamp_unit(U)
        U.setflags(write=False)
        object.__setattr__(self, "U", U)

    @property
    def n(self) -> int:
        return self.U.shape[0]

    @property
    def dim(self) -> int:
        return self.U.shape[1]


@dataclass(frozen=True)
class FittedCopula:
    model: CopulaModel
    log_likelihood: float
    aic: float
    n_obs: int

    @property
    def family(self) -> CopulaFamily:
        return self.model.family

    @property
    def n_params(self) -> int:
        return self.model.n_params


def pseudo_observations(Y, marginals: Sequence[MarginalModel], hypothesis: Optional[int] = None) -> PseudoObservations:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[1] != len(marginals):
        raise ValueError(f"Y has shape {Y.shape} but {len(marginals)} marginals were given")
    U = np.column_stack([m.cdf(Y[:, l]) for l, m in enumerate(marginals)])
    return PseudoObservations(U, hypothesis)


def _aic(loglik: float, q: int, conventional: bool = False) -> float:
    return (-2.0 if conventional else -1.0) * loglik + 2.0 * q


def aic_score(fit: FittedCopula, conventional: bool = False) -> float:
    """AIC as ``-loglik + 2q``; ``conventional=True`` gives ``-2 loglik + 2q``."""
    return _aic(fit.log_likelihood, fit.n_params, conventional)


def sample_kendall_tau(U: np.ndarray) -> float:
    """Average pairwise sample Kendall's tau over all coordinate pairs."""
    d = U.shape[1]
    taus = [stats.kendalltau(U[:, i], U[:, j])[0] for i in range(d) for j in range(i + 1, d)]
    return float(np.mean(taus))


# parameter domains used by the bounded search, in an unconstrained-ish coordinate
_SCALAR_MAX = 50.0


def _search_space(family: CopulaFamily, dim: int):
    """Return (to_param, lo, hi) for the scalar search coordinate."""
    if family is CopulaFamily.CLAYTON:
        return math.exp, math.log(1e-4), math.log(_SCALAR_MAX)
    if family is CopulaFamily.GUMBEL:
        return (lambda x: 1.0 + math.exp(x)), math.log(1e-6), math.log(_SCALAR_MAX)
    if family is CopulaFamily.FRANK:
        lo = -_SCALAR_MAX if dim == 2 else 1e-4
        return float, lo, _SCALAR_MAX
    raise CopulaError(f"no scalar search space for {family.value}")


def _tau_initializer(family: CopulaFamily, tau: float, dim: int) -> Optional[float]:
    try:
        return float(tau_to_param(family, tau, dim))
    except CopulaError:
        return None


def _check_degenerate(U: np.ndarray) -> None:
    for l in range(U.shape[1]):
        if np.ptp(U[:, l]) == 0.0:
            raise FitError(f"pseudo-observation column {l} is constant")


def nearest_correlation(R: np.ndarray, min_eig: float = 1e-6) -> np.ndarray:
    """Project a symmetric matrix onto correlation matrices by eigenvalue clipping."""
    R = 0.5 * (R + R.T)
    w, V = np.linalg.eigh(R)
    R = (V * np.maximum(w, min_eig)) @ V.T
    s = np.sqrt(np.diag(R))
    R = R / np.outer(s, s)
    np.fill_diagonal(R, 1.0)
    return R


def _fit_gaussian(U: np.ndarray):
    # z-space moment estimator projected onto correlation matrices; near-MLE
    # and keeps the estimate equal to the normal-scores correlation
    z = special.ndtri(U)
    R = nearest_correlation(np.corrcoef(z, rowvar=False))
    try:
        model = CopulaModel.gaussian(R)
    except CopulaError as exc:
        raise FitError(f"no valid Gaussian correlation estimate: {exc}") from exc
    return model, float(np.sum(model.log_density(U)))


def _fit_scalar(family: CopulaFamily, U: np.ndarray, xatol: float, maxiter: int):
    d = U.shape[1]
    to_param, lo, hi = _search_space(family, d)

    def loglik(theta):
        return float(np.sum(log_density_for(family, d, theta, U)))

    def objective(x):
        val = loglik(to_param(x))
        return -val if math.isfinite(val) else 1e300

    res = optimize.minimize_scalar(objective, bounds=(lo, hi), method="bounded",
                                   options={"xatol": xatol, "maxiter": maxiter})
    if not res.success:
        raise FitError(f"{family.value} MLE did not converge: {res.message}")
    theta, ll = to_param(res.x), -float(res.fun)
    # keep the tau-inversion start if the bounded search ended somewhere worse
    init = _tau_initializer(family, sample_kendall_tau(U), d)
    if init is not None:
        init = min(max(init, to_param(lo)), to_param(hi))
        ll_init = loglik(init)
        if ll_init > ll:
            theta, ll = init, ll_init
    if family is CopulaFamily.FRANK and theta == 0.0:
        theta = 1e-8
    return CopulaModel(family, d, theta), ll


def fit_mle(family, U: PseudoObservations, *, conventional_aic: bool = False,
            xatol: float = 1e-6, maxiter: int = 500) -> FittedCopula:
    """Maximise the copula pseudo-log-likelihood of one family."""
    family = CopulaFamily(family)
    if not isinstance(U, PseudoObservations):
        U = PseudoObservations(U)
    data = U.U
    d = U.dim
    _check_degenerate(data)
    if family is CopulaFamily.INDEPENDENCE:
        model, ll = CopulaModel.independence(d), 0.0
    elif family is CopulaFamily.GAUSSIAN:
        model, ll = _fit_gaussian(data)
    else:
        model, ll = _fit_scalar(family, data, xatol, maxiter)
    return FittedCopula(model, ll, _aic(ll, model.n_params, conventional_aic), U.n)


def select_best(library: CopulaLibrary, U: PseudoObservations, *, conventional_aic: bool = False,
                return_all: bool = False):
    """Fit every candidate and return the AIC minimiser (ties go to library order)."""
    if not isinstance(U, PseudoObservations):
        U = PseudoObservations(U)
    if library.dim != U.dim:
        raise ValueError(f"library dimension {library.dim} does not match data dimension {U.dim}")
    fits = []
    errors = []
    for family in library:
        try:
            fits.append(fit_mle(family, U, conventional_aic=conventional_aic))
        except (FitError, CopulaError) as exc:
            log.debug("fit of %s failed: %s", family.value, exc)
            errors.append((family, exc))
    if not fits:
        raise FitError(f"every candidate fit failed: {errors}")
    best = fits[0]
    for f in fits[1:]:
        if f.aic < best.aic:
            best = f
    return (best, fits) if return_all else best


__all__ = [
    "EPS",
    "FitError",
    "FittedCopula",
    "PseudoObservations",
    "aic_score",
    "fit_mle",
    "n_params",
    "nearest_correlation",
    "pseudo_observations",
    "sample_kendall_tau",
    "select_best",
]
