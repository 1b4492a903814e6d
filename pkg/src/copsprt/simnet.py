"""Generative model of the sensor network as seen by the fusion center.

Each sensor observes ``z = s * 1{H1} + v`` and forwards it over an additive
noise channel, so the fusion center receives ``y = z + w`` with marginal law
``N(s * 1{H1}, sigma_v**2 + sigma_w**2)``.  Spatial dependence is imposed
directly on the received vector through a copula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .copulas import CopulaModel
from .marginals import MarginalModel, standard_quantile

#: Recorded in every output that depends on the signal amplitude.
SNR_DEFINITION = "SNR = s^2 / mean_l(sigma_v^2 + sigma_w^2), signal power over total received-noise power per sensor"

RNG_NAME = "numpy PCG64 seeded by SeedSequence(seed, spawn_key=...)"

H0, H1 = 0, 1


def _per_sensor(value, n: int, name: str) -> Tuple[float, ...]:
    if np.isscalar(value):
        vals = (float(value),) * n
    else:
        vals = tuple(float(v) for v in value)
    if len(vals) != n:
        raise ValueError(f"{name} needs {n} entries, got {len(vals)}")
    if any(not (v > 0 and math.isfinite(v)) for v in vals):
        raise ValueError(f"{name} entries must be positive and finite")
    return vals


@dataclass(frozen=True)
class NetworkConfig:
    """Scenario parameters for ``L`` sensors reporting to one fusion center."""

    n_sensors: int = 3
    signal: float = 1.0
    sigma_v: Union[float, Sequence[float]] = 1.0
    sigma_w: Union[float, Sequence[float]] = math.sqrt(3.0)
    dep_h1: Optional[CopulaModel] = None
    dep_h0: Optional[CopulaModel] = None
    seed: int = 0

    def __post_init__(self):
        if self.n_sensors < 2:
            raise ValueError("the network needs at least two sensors")
        object.__setattr__(self, "sigma_v", _per_sensor(self.sigma_v, self.n_sensors, "sigma_v"))
        object.__setattr__(self, "sigma_w", _per_sensor(self.sigma_w, self.n_sensors, "sigma_w"))
        for name in ("dep_h1", "dep_h0"):
            dep = getattr(self, name)
            if dep is None:
                object.__setattr__(self, name, CopulaModel.independence(self.n_sensors))
            elif dep.dim != self.n_sensors:
                raise ValueError(f"{name} has dimension {dep.dim}, expected {self.n_sensors}")

    @property
    def noise_std(self) -> Tuple[float, ...]:
        return tuple(math.hypot(v, w) for v, w in zip(self.sigma_v, self.sigma_w))

    @property
    def noise_std_array(self) -> np.ndarray:
        return np.asarray(self.noise_std)

    def dependence(self, hypothesis: int) -> CopulaModel:
        return self.dep_h1 if hypothesis == H1 else self.dep_h0

    def with_snr(self, snr_db: float) -> "NetworkConfig":
        return replace(self, signal=snr_to_signal(snr_db, self))


def default_config(snr_db: float = -6.0, rho: float = 0.5, rho_h0: Optional[float] = None,
                   n_sensors: int = 3, seed: int = 0) -> NetworkConfig:
    """Three sensors, unit measurement noise, channel noise variance 3,
    equicorrelated Gaussian copula under H1 and independence under H0
    unless ``rho_h0`` is given."""
    dep_h1 = CopulaModel.gaussian_equicorrelated(n_sensors, rho)
    dep_h0 = None if rho_h0 is None else CopulaModel.gaussian_equicorrelated(n_sensors, rho_h0)
    cfg = NetworkConfig(n_sensors=n_sensors, dep_h1=dep_h1, dep_h0=dep_h0, seed=seed)
    return cfg.with_snr(snr_db)


def snr_to_signal(snr_db: float, cfg: NetworkConfig) -> float:
    noise_power = float(np.mean([s * s for s in cfg.noise_std]))
    return math.sqrt(noise_power * 10.0 ** (snr_db / 10.0))


def marginal_models(cfg: NetworkConfig, hypothesis: int) -> List[MarginalModel]:
    mean = cfg.signal if hypothesis == H1 else 0.0
    return [MarginalModel(mean, sd) for sd in cfg.noise_std]


@dataclass(frozen=True)
class FcObservation:
    index: int
    y: np.ndarray = field(repr=False)


def observations(cfg: NetworkConfig, hypothesis: int, rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` i.i.d. received vectors, shape ``(n, L)``."""
    u = cfg.dependence(hypothesis).sample(rng, n)
    # all marginals are Gaussian location-scale, so invert in one pass
    mean = cfg.signal if hypothesis == H1 else 0.0
    return mean + cfg.noise_std_array * standard_quantile(u)


def next_observation(cfg: NetworkConfig, hypothesis: int, rng: np.random.Generator, index: int = 1) -> FcObservation:
    return FcObservation(index, observations(cfg, hypothesis, rng, 1)[0])


def training_burst(cfg: NetworkConfig, hypothesis: int, n0: int, rng: np.random.Generator) -> np.ndarray:
    if n0 < 2:
        raise ValueError("a training burst needs at least two vectors")
    return observations(cfg, hypothesis, rng, n0)


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, key...)``; the same key always
    yields the same stream regardless of how many others were created."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))
