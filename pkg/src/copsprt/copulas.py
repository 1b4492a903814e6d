"""Parametric copula families.

Densities are evaluated in log space and vectorised over rows: ``u`` may be
a single point of shape ``(d,)`` or a batch of shape ``(n, d)``.  The
Archimedean families use the general ``d``-dimensional density
``c(u) = (-1)^d psi^(d)(t) * prod |psi^-1'(u_i)|`` with ``t = sum psi^-1(u_i)``
and are sampled exactly with the Marshall-Olkin frailty construction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np
from scipy import integrate, optimize, special

#: Pseudo-observations are clamped to ``[EPS, 1 - EPS]`` before evaluation.
EPS = 1e-10

Params = Union[None, float, np.ndarray]


class CopulaFamily(str, enum.Enum):
    INDEPENDENCE = "independence"
    GAUSSIAN = "gaussian"
    CLAYTON = "clayton"
    GUMBEL = "gumbel"
    FRANK = "frank"

    @property
    def is_archimedean(self) -> bool:
        return self in (CopulaFamily.CLAYTON, CopulaFamily.GUMBEL, CopulaFamily.FRANK)


class CopulaError(ValueError):
    """Invalid copula construction or unsupported operation."""


def clamp_unit(u, eps: float = EPS) -> np.ndarray:
    return np.clip(np.asarray(u, dtype=float), eps, 1.0 - eps)


def n_params(family: CopulaFamily, dim: int) -> int:
    """Number of free dependence parameters ``q`` of a family in ``dim`` dimensions."""
    family = CopulaFamily(family)
    if family is CopulaFamily.INDEPENDENCE:
        return 0
    if family is CopulaFamily.GAUSSIAN:
        return dim * (dim - 1) // 2
    return 1


def equicorrelation(dim: int, rho: float) -> np.ndarray:
    R = np.full((dim, dim), float(rho))
    np.fill_diagonal(R, 1.0)
    return R


@dataclass(frozen=True, eq=False)
class CopulaModel:
    """A copula family together with its dependence parameter.

    ``params`` is ``None`` for independence, a correlation matrix for the
    Gaussian family and a scalar for the Archimedean families.  Instances
    are immutable; the Cholesky factor of a Gaussian correlation matrix is
    computed once at construction.
    """

    family: CopulaFamily
    dim: int
    params: Params = None
    _chol: Optional[np.ndarray] = field(default=None, repr=False)
    _gumbel_coef: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        family = CopulaFamily(self.family)
        object.__setattr__(self, "family", family)
        if self.dim < 2:
            raise CopulaError(f"copula dimension must be >= 2, got {self.dim}")
        if family is CopulaFamily.INDEPENDENCE:
            object.__setattr__(self, "params", None)
        elif family is CopulaFamily.GAUSSIAN:
            R = np.array(self.params, dtype=float)
            if R.shape != (self.dim, self.dim):
                raise CopulaError(f"Gaussian copula needs a {self.dim}x{self.dim} matrix")
            if not np.allclose(R, R.T, atol=1e-12) or not np.allclose(np.diag(R), 1.0, atol=1e-12):
                raise CopulaError("correlation matrix must be symmetric with unit diagonal")
            try:
                chol = np.linalg.cholesky(R)
            except np.linalg.LinAlgError as exc:
                raise CopulaError("correlation matrix is not positive definite") from exc
            R.setflags(write=False)
            chol.setflags(write=False)
            object.__setattr__(self, "params", R)
            object.__setattr__(self, "_chol", chol)
        else:
            theta = float(self.params)
            _check_archimedean(family, theta, self.dim)
            object.__setattr__(self, "params", theta)
            if family is CopulaFamily.GUMBEL:
                object.__setattr__(self, "_gumbel_coef", _gumbel_log_coefficients(self.dim, 1.0 / theta))

    # constructors -----------------------------------------------------

    @classmethod
    def independence(cls, dim: int) -> "CopulaModel":
        return cls(CopulaFamily.INDEPENDENCE, dim)

    @classmethod
    def gaussian(cls, corr) -> "CopulaModel":
        corr = np.asarray(corr, dtype=float)
        return cls(CopulaFamily.GAUSSIAN, corr.shape[0], corr)

    @classmethod
    def gaussian_equicorrelated(cls, dim: int, rho: float) -> "CopulaModel":
        return cls.gaussian(equicorrelation(dim, rho))

    @classmethod
    def clayton(cls, theta: float, dim: int = 2) -> "CopulaModel":
        return cls(CopulaFamily.CLAYTON, dim, theta)

    @classmethod
    def gumbel(cls, theta: float, dim: int = 2) -> "CopulaModel":
        return cls(CopulaFamily.GUMBEL, dim, theta)

    @classmethod
    def frank(cls, theta: float, dim: int = 2) -> "CopulaModel":
        return cls(CopulaFamily.FRANK, dim, theta)

    # properties -------------------------------------------------------

    @property
    def n_params(self) -> int:
        return n_params(self.family, self.dim)

    @property
    def chol(self) -> Optional[np.ndarray]:
        return self._chol

    @property
    def log_det_corr(self) -> float:
        if self._chol is None:
            return 0.0
        return 2.0 * float(np.sum(np.log(np.diag(self._chol))))

    def same_as(self, other: "CopulaModel") -> bool:
        if self.family is not other.family or self.dim != other.dim:
            return False
        if self.family is CopulaFamily.INDEPENDENCE:
            return True
        return bool(np.array_equal(np.asarray(self.params), np.asarray(other.params)))

    def describe(self) -> str:
        if self.family is CopulaFamily.INDEPENDENCE:
            return f"independence(d={self.dim})"
        if self.family is CopulaFamily.GAUSSIAN:
            iu = np.triu_indices(self.dim, 1)
            rhos = " ".join(f"{r:.6g}" for r in self.params[iu])
            return f"gaussian(d={self.dim}; rho=[{rhos}])"
        return f"{self.family.value}(d={self.dim}; theta={self.params:.6g})"

    # evaluation -------------------------------------------------------

    def log_density(self, u) -> Union[float, np.ndarray]:
        u = np.asarray(u, dtype=float)
        single = u.ndim == 1
        u2 = np.atleast_2d(u)
        if u2.shape[-1] != self.dim:
            raise CopulaError(f"expected points of dimension {self.dim}, got {u2.shape[-1]}")
        u2 = clamp_unit(u2)
        out = _LOG_DENSITY[self.family](self, u2)
        return float(out[0]) if single else out

    def density(self, u):
        return np.exp(self.log_density(u))

    def cdf(self, u):
        """Copula distribution function (independence and Archimedean families)."""
        u = np.asarray(u, dtype=float)
        single = u.ndim == 1
        u2 = clamp_unit(np.atleast_2d(u))
        if self.family is CopulaFamily.INDEPENDENCE:
            out = np.prod(u2, axis=1)
        elif self.family.is_archimedean:
            out = _psi(self, np.sum(_psi_inv(self, u2), axis=1))
        else:
            raise CopulaError("CDF evaluation is not provided for the Gaussian copula")
        return float(out[0]) if single else out

    def sample(self, rng: np.random.Generator, n: Optional[int] = None) -> np.ndarray:
        """Draw ``n`` points (shape ``(n, d)``), or a single point of shape ``(d,)``."""
        m = 1 if n is None else int(n)
        if m < 0:
            raise ValueError("n must be non-negative")
        u = _SAMPLERS[self.family](self, rng, m)
        return u[0] if n is None else u

    def kendall_tau(self):
        return kendall_tau(self)


def _check_archimedean(family: CopulaFamily, theta: float, dim: int) -> None:
    if not math.isfinite(theta):
        raise CopulaError(f"{family.value} parameter must be finite")
    if family is CopulaFamily.CLAYTON and not theta > 0:
        raise CopulaError(f"Clayton requires theta > 0, got {theta}")
    if family is CopulaFamily.GUMBEL and not theta >= 1:
        raise CopulaError(f"Gumbel requires theta >= 1, got {theta}")
    if family is CopulaFamily.FRANK:
        if theta == 0:
            raise CopulaError("Frank requires theta != 0")
        if dim > 2 and theta < 0:
            raise CopulaError("Frank with negative theta exists only for d = 2")


# ---------------------------------------------------------------------------
# log densities
# ---------------------------------------------------------------------------


def _independence_logpdf(c: CopulaModel, u: np.ndarray) -> np.ndarray:
    return np.zeros(u.shape[0])


def _gaussian_logpdf(c: CopulaModel, u: np.ndarray) -> np.ndarray:
    z = special.ndtri(u)
    # solve L w = z^T so that |w|^2 = z^T R^-1 z
    w = np.linalg.solve(c.chol, z.T)
    quad = np.sum(w * w, axis=0) - np.sum(z * z, axis=1)
    return -0.5 * quad - 0.5 * c.log_det_corr


def _log1p_sum_expm1(a: np.ndarray) -> np.ndarray:
    """``log(1 + sum_i (exp(a_i) - 1))`` for ``a_i >= 0`` without overflow."""
    m = np.max(a, axis=1, keepdims=True)
    inner = np.exp(-m[:, 0]) + np.sum(np.exp(a - m) - np.exp(-m), axis=1)
    return m[:, 0] + np.log(inner)


def _clayton_logpdf(c: CopulaModel, u: np.ndarray) -> np.ndarray:
    theta, d = c.params, c.dim
    logu = np.log(u)
    const = sum(math.log1p(k * theta) for k in range(d))
    return (
        const
        - (1.0 + theta) * np.sum(logu, axis=1)
        - (d + 1.0 / theta) * _log1p_sum_expm1(-theta * logu)
    )


@lru_cache(maxsize=64)
def _gumbel_log_coefficients_cached(dim: int, alpha: float) -> tuple:
    # (-1)^n psi^(n)(t) = psi(t) * sum_k coef[n, k] * t^(k*alpha - n), psi(t) = exp(-t^alpha)
    coef = np.zeros(dim + 1)
    coef[0] = 1.0
    for n in range(dim):
        nxt = np.zeros(dim + 1)
        for k in range(n + 1):
            if coef[k] == 0.0:
                continue
            nxt[k + 1] += alpha * coef[k]
            nxt[k] -= (k * alpha - n) * coef[k]
        coef = nxt
    with np.errstate(divide="ignore"):
        return tuple(np.log(np.maximum(coef, 0.0)))


def _gumbel_log_coefficients(dim: int, alpha: float) -> np.ndarray:
    return np.array(_gumbel_log_coefficients_cached(dim, alpha))


def _gumbel_logpdf(c: CopulaModel, u: np.ndarray) -> np.ndarray:
    theta, d = c.params, c.dim
    alpha = 1.0 / theta
    logu = np.log(u)
    x = -logu
    logx = np.log(x)
    t = np.sum(np.exp(theta * logx), axis=1)
    logt = np.log(t)
    k = np.arange(d + 1)
    terms = c._gumbel_coef[None, :] + (k * alpha - d)[None, :] * logt[:, None]
    log_g = special.logsumexp(terms, axis=1)
    log_jac = np.sum(math.log(theta) + (theta - 1.0) * logx - logu, axis=1)
    return -np.exp(alpha * logt) + log_g + log_jac


@lru_cache(maxsize=16)
def _polylog_neg_log_coefficients(n: int) -> tuple:
    # Li_{-n}(x) = sum_{k=0}^{n} k! S(n+1, k+1) (x / (1 - x))^(k+1)
    out = []
    for k in range(n + 1):
        out.append(math.lgamma(k + 1) + math.log(_stirling2(n + 1, k + 1)))
    return tuple(out)


def _stirling2(n: int, k: int) -> int:
    return sum((-1) ** j * math.comb(k, j) * (k - j) ** n for j in range(k + 1)) // math.factorial(k)


def _frank_logpdf(c: CopulaModel, u: np.ndarray) -> np.ndarray:
    return _frank_logpdf_theta(u, c.params)


def _frank_logpdf_theta(u: np.ndarray, theta: float) -> np.ndarray:
    n, d = u.shape
    if abs(theta) < 1e-10:
        return np.zeros(n)
    em1 = math.expm1(-theta)
    if d == 2:
        a = np.expm1(-theta * u[:, 0])
        b = np.expm1(-theta * u[:, 1])
        denom = -em1 - a * b
        return math.log(theta * -em1) - theta * (u[:, 0] + u[:, 1]) - 2.0 * np.log(np.abs(denom))
    # theta > 0 here
    log_r = np.log(np.expm1(-theta * u) / em1)
    log_x = math.log(-em1) + np.sum(log_r, axis=1)
    log_w = log_x - np.log(-np.expm1(log_x))
    coefs = np.array(_polylog_neg_log_coefficients(d - 1))
    kk = np.arange(d)
    log_li = special.logsumexp(coefs[None, :] + (kk + 1)[None, :] * log_w[:, None], axis=1)
    log_jac = np.sum(math.log(theta) - np.log(np.expm1(theta * u)), axis=1)
    return -math.log(theta) + log_li + log_jac


_LOG_DENSITY = {
    CopulaFamily.INDEPENDENCE: _independence_logpdf,
    CopulaFamily.GAUSSIAN: _gaussian_logpdf,
    CopulaFamily.CLAYTON: _clayton_logpdf,
    CopulaFamily.GUMBEL: _gumbel_logpdf,
    CopulaFamily.FRANK: _frank_logpdf,
}


def log_density(c: CopulaModel, u) -> Union[float, np.ndarray]:
    return c.log_density(u)


def log_density_for(family: CopulaFamily, dim: int, params, u: np.ndarray) -> np.ndarray:
    """Evaluate a family's log density at ``params`` without building a model.

    Used by the optimiser, which probes parameters outside the model's
    validated domain (e.g. Frank near 0).
    """
    family = CopulaFamily(family)
    u = clamp_unit(np.atleast_2d(u))
    if family is CopulaFamily.FRANK:
        return _frank_logpdf_theta(u, float(params))
    return CopulaModel(family, dim, params).log_density(u)


# ---------------------------------------------------------------------------
# generators and sampling
# ---------------------------------------------------------------------------


def _psi(c: CopulaModel, t):
    theta = c.params
    if c.family is CopulaFamily.CLAYTON:
        return np.exp(-np.log1p(t) / theta)
    if c.family is CopulaFamily.GUMBEL:
        return np.exp(-np.power(t, 1.0 / theta))
    return -np.log1p(math.expm1(-theta) * np.exp(-t)) / theta


def _psi_inv(c: CopulaModel, u):
    theta = c.params
    if c.family is CopulaFamily.CLAYTON:
        return np.expm1(-theta * np.log(u))
    if c.family is CopulaFamily.GUMBEL:
        return np.power(-np.log(u), theta)
    return -np.log(np.expm1(-theta * u) / math.expm1(-theta))


def _sample_independence(c, rng, n):
    return clamp_unit(rng.random((n, c.dim)))


def _sample_gaussian(c, rng, n):
    z = rng.standard_normal((n, c.dim)) @ c.chol.T
    return clamp_unit(special.ndtr(z))


def positive_stable(alpha: float, rng: np.random.Generator, n: int) -> np.ndarray:
    """Positive stable draws with Laplace transform ``exp(-t**alpha)`` (Kanter)."""
    if alpha == 1.0:
        return np.ones(n)
    w = rng.uniform(0.0, math.pi, n)
    e = rng.standard_exponential(n)
    a = np.sin(alpha * w) / np.sin(w) ** (1.0 / alpha)
    return a * (np.sin((1.0 - alpha) * w) / e) ** ((1.0 - alpha) / alpha)


def _frailty(c: CopulaModel, rng, n):
    theta = c.params
    if c.family is CopulaFamily.CLAYTON:
        return rng.gamma(1.0 / theta, 1.0, n)
    if c.family is CopulaFamily.GUMBEL:
        return positive_stable(1.0 / theta, rng, n)
    return rng.logseries(-math.expm1(-theta), n).astype(float)


def _sample_archimedean(c, rng, n):
    if c.family is CopulaFamily.FRANK and c.params < 0:
        return _sample_frank_conditional(c.params, rng, n)
    v = _frailty(c, rng, n)
    e = rng.standard_exponential((n, c.dim))
    return clamp_unit(_psi(c, e / v[:, None]))


def _sample_frank_conditional(theta, rng, n):
    # bivariate conditional inversion; valid for either sign of theta
    u = rng.random(n)
    p = rng.random(n)
    a = p * math.expm1(-theta) / (np.exp(-theta * u) - p * np.expm1(-theta * u))
    v = -np.log1p(a) / theta
    return clamp_unit(np.column_stack([u, v]))


_SAMPLERS = {
    CopulaFamily.INDEPENDENCE: _sample_independence,
    CopulaFamily.GAUSSIAN: _sample_gaussian,
    CopulaFamily.CLAYTON: _sample_archimedean,
    CopulaFamily.GUMBEL: _sample_archimedean,
    CopulaFamily.FRANK: _sample_archimedean,
}


def sample(c: CopulaModel, rng: np.random.Generator, n: Optional[int] = None) -> np.ndarray:
    return c.sample(rng, n)


# ---------------------------------------------------------------------------
# Kendall's tau
# ---------------------------------------------------------------------------


def _debye1(theta: float) -> float:
    if theta == 0:
        return 1.0
    val, _ = integrate.quad(lambda t: t / math.expm1(t) if t != 0 else 1.0, 0.0, theta,
                            epsabs=1e-14, epsrel=1e-13, limit=200)
    return val / theta


def frank_tau(theta: float) -> float:
    if theta == 0:
        return 0.0
    return 1.0 + 4.0 * (_debye1(theta) - 1.0) / theta


def kendall_tau(c: CopulaModel):
    """Population Kendall's tau.

    Archimedean families return the common pairwise value; the Gaussian
    family returns a scalar for ``d = 2`` and the pairwise matrix otherwise.
    """
    fam = c.family
    if fam is CopulaFamily.INDEPENDENCE:
        return 0.0
    if fam is CopulaFamily.GAUSSIAN:
        tau = 2.0 / math.pi * np.arcsin(np.clip(c.params, -1.0, 1.0))
        return float(tau[0, 1]) if c.dim == 2 else tau
    theta = c.params
    if fam is CopulaFamily.CLAYTON:
        return theta / (theta + 2.0)
    if fam is CopulaFamily.GUMBEL:
        return 1.0 - 1.0 / theta
    return frank_tau(theta)


def gaussian_tau(rho: float) -> float:
    return 2.0 / math.pi * math.asin(rho)


_FRANK_THETA_MAX = 700.0


def tau_to_param(family: CopulaFamily, tau: float, dim: int = 2):
    """Invert Kendall's tau; Gaussian returns the correlation coefficient."""
    family = CopulaFamily(family)
    tau = float(tau)
    if not -1.0 <= tau <= 1.0:
        raise CopulaError(f"Kendall's tau must lie in [-1, 1], got {tau}")
    if family is CopulaFamily.INDEPENDENCE:
        if tau != 0.0:
            raise CopulaError("independence copula only attains tau = 0")
        return None
    if family is CopulaFamily.GAUSSIAN:
        return math.sin(math.pi * tau / 2.0)
    if family is CopulaFamily.CLAYTON:
        if not 0.0 < tau < 1.0:
            raise CopulaError(f"Clayton attains tau in (0, 1), got {tau}")
        return 2.0 * tau / (1.0 - tau)
    if family is CopulaFamily.GUMBEL:
        if not 0.0 <= tau < 1.0:
            raise CopulaError(f"Gumbel attains tau in [0, 1), got {tau}")
        return 1.0 / (1.0 - tau)
    lo_tau, hi_tau = frank_tau(-_FRANK_THETA_MAX), frank_tau(_FRANK_THETA_MAX)
    if tau == 0.0 or not lo_tau < tau < hi_tau:
        raise CopulaError(f"Frank tau {tau} outside attainable range")
    if dim > 2 and tau < 0:
        raise CopulaError("Frank with negative dependence exists only for d = 2")
    if tau > 0:
        lo, hi = 1e-12, _FRANK_THETA_MAX
    else:
        lo, hi = -_FRANK_THETA_MAX, -1e-12
    return optimize.brentq(lambda th: frank_tau(th) - tau, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=500)


# ---------------------------------------------------------------------------
# Kullback-Leibler divergence
# ---------------------------------------------------------------------------


def kl_divergence(c0: CopulaModel, c1: CopulaModel, n_mc: int, rng: np.random.Generator):
    """Monte Carlo estimate of ``D(c0 || c1)`` and its standard error."""
    if c0.dim != c1.dim:
        raise CopulaError(f"dimension mismatch: {c0.dim} vs {c1.dim}")
    if n_mc < 1000:
        raise ValueError("n_mc must be at least 1000")
    if c0.same_as(c1):
        return 0.0, 0.0
    u = c0.sample(rng, n_mc)
    diff = c0.log_density(u) - c1.log_density(u)
    return float(np.mean(diff)), float(np.std(diff, ddof=1) / math.sqrt(n_mc))


def gaussian_kl(c0: CopulaModel, c1: CopulaModel) -> float:
    """Closed-form KL between Gaussian/independence copulas.

    Copula KL equals the KL of the underlying unit-variance normals.
    """
    mats = []
    for c in (c0, c1):
        if c.family is CopulaFamily.INDEPENDENCE:
            mats.append(np.eye(c.dim))
        elif c.family is CopulaFamily.GAUSSIAN:
            mats.append(c.params)
        else:
            raise CopulaError("closed form only for Gaussian or independence copulas")
    R0, R1 = mats
    _, ld0 = np.linalg.slogdet(R0)
    _, ld1 = np.linalg.slogdet(R1)
    tr = np.trace(np.linalg.solve(R1, R0))
    return 0.5 * (tr - c0.dim + ld1 - ld0)


# ---------------------------------------------------------------------------
# candidate library
# ---------------------------------------------------------------------------

DEFAULT_FAMILIES = (
    CopulaFamily.INDEPENDENCE,
    CopulaFamily.GAUSSIAN,
    CopulaFamily.CLAYTON,
    CopulaFamily.GUMBEL,
    CopulaFamily.FRANK,
)


@dataclass(frozen=True)
class CopulaLibrary:
    """Ordered candidate families for model selection in a fixed dimension."""

    dim: int
    families: tuple = DEFAULT_FAMILIES

    def __post_init__(self):
        fams = tuple(CopulaFamily(f) for f in self.families)
        if not fams:
            raise CopulaError("copula library must not be empty")
        if len(set(fams)) != len(fams):
            raise CopulaError("copula library lists a family twice")
        object.__setattr__(self, "families", fams)

    def n_params(self, family: CopulaFamily) -> int:
        return n_params(family, self.dim)

    def __iter__(self):
        return iter(self.families)

    def __len__(self):
        return len(self.families)

    @classmethod
    def from_names(cls, dim: int, names: Sequence[str]) -> "CopulaLibrary":
        return cls(dim, tuple(CopulaFamily(n.lower()) for n in names))
