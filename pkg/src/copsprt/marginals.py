"""Univariate marginal distributions received at the fusion center."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class MarginalFamily(str, enum.Enum):
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class MarginalModel:
    """A continuous univariate distribution with location and scale.

    Only the Gaussian family is provided; ``family`` is kept as an enum so
    other location-scale families can slot in without touching callers.
    All methods accept scalars or numpy arrays.
    """

    location: float = 0.0
    scale: float = 1.0
    family: MarginalFamily = MarginalFamily.GAUSSIAN

    def __post_init__(self):
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")
        if not math.isfinite(self.location):
            raise ValueError(f"location must be finite, got {self.location}")
        object.__setattr__(self, "family", MarginalFamily(self.family))

    def _standardize(self, x):
        return (np.asarray(x, dtype=float) - self.location) / self.scale

    def logpdf(self, x):
        z = self._standardize(x)
        return -0.5 * z * z - _LOG_SQRT_2PI - math.log(self.scale)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        return special.ndtr(self._standardize(x))

    def quantile(self, p):
        return self.location + self.scale * standard_quantile(p)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if n < 0:
            raise ValueError("n must be non-negative")
        return self.location + self.scale * rng.standard_normal(n)

    def kl_divergence(self, other: "MarginalModel") -> float:
        """Closed-form ``D(self || other)`` for two Gaussians."""
        ratio = (self.scale / other.scale) ** 2
        shift = (self.location - other.location) ** 2 / (2.0 * other.scale ** 2)
        return 0.5 * (ratio - 1.0 - math.log(ratio)) + shift


def standard_quantile(p):
    """Standard normal quantile, rejecting ``p`` outside ``(0, 1)``."""
    p = np.asarray(p, dtype=float)
    if not np.all((p > 0.0) & (p < 1.0)):
        raise ValueError("quantile requires probabilities strictly inside (0, 1)")
    z = special.ndtri(p)
    # one Newton step on the cdf tightens the round trip in the tails
    dens = np.exp(-0.5 * z * z - _LOG_SQRT_2PI)
    return z - (special.ndtr(z) - p) / dens


def gaussian(location: float = 0.0, scale: float = 1.0) -> MarginalModel:
    return MarginalModel(location=location, scale=scale)
