"""Copula-based sequential probability ratio test at the fusion center."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .copulas import CopulaModel, kl_divergence
from .marginals import MarginalModel

DEFAULT_CAP = 100_000


class SprtError(RuntimeError):
    pass


class Verdict(str, enum.Enum):
    CONTINUE = "continue"
    ACCEPT_H1 = "accept_h1"
    ACCEPT_H0 = "accept_h0"


@dataclass(frozen=True)
class WaldThresholds:
    alpha: float
    beta: float
    A: float
    B: float

    @property
    def lower(self) -> float:
        return -self.B


def wald_thresholds(alpha: float, beta: float) -> WaldThresholds:
    """``A = log((1 - beta) / alpha)`` and ``-B = log(beta / (1 - alpha))``."""
    for name, v in (("alpha", alpha), ("beta", beta)):
        if not 0.0 < v < 0.5:
            raise ValueError(f"{name} must lie in (0, 1/2), got {v}")
    A = math.log((1.0 - beta) / alpha)
    B = -math.log(beta / (1.0 - alpha))
    return WaldThresholds(alpha, beta, A, B)


@dataclass(frozen=True)
class DetectorSpec:
    """Per-sensor marginals and copulas under both hypotheses.

    With ``product_mode`` both copulas are replaced by independence, which
    is the baseline test that ignores spatial dependence.
    """

    marginals0: Tuple[MarginalModel, ...]
    marginals1: Tuple[MarginalModel, ...]
    copula0: Optional[CopulaModel] = None
    copula1: Optional[CopulaModel] = None
    product_mode: bool = False

    def __post_init__(self):
        m0, m1 = tuple(self.marginals0), tuple(self.marginals1)
        if len(m0) != len(m1) or len(m0) < 2:
            raise ValueError("both hypotheses need the same number (>= 2) of marginals")
        object.__setattr__(self, "marginals0", m0)
        object.__setattr__(self, "marginals1", m1)
        L = len(m0)
        for name in ("copula0", "copula1"):
            c = getattr(self, name)
            if self.product_mode or c is None:
                object.__setattr__(self, name, CopulaModel.independence(L))
            elif c.dim != L:
                raise ValueError(f"{name} has dimension {c.dim}, expected {L}")

    @property
    def n_sensors(self) -> int:
        return len(self.marginals0)

    @property
    def has_copula_term(self) -> bool:
        return not (self.product_mode or (self.copula0.family.value == "independence"
                                          and self.copula1.family.value == "independence"))

    def as_product(self) -> "DetectorSpec":
        return replace(self, product_mode=True)

    def increments(self, Y) -> Tuple[np.ndarray, np.ndarray]:
        """Marginal and copula log-likelihood-ratio terms for each row of ``Y``."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if Y.shape[-1] != self.n_sensors:
            raise ValueError(f"expected vectors of length {self.n_sensors}, got {Y.shape[-1]}")
        if not np.all(np.isfinite(Y)):
            raise ValueError("observations must be finite")
        marg = np.zeros(Y.shape[0])
        U0 = np.empty_like(Y)
        U1 = np.empty_like(Y)
        for l, (f0, f1) in enumerate(zip(self.marginals0, self.marginals1)):
            y = Y[:, l]
            marg += f1.logpdf(y) - f0.logpdf(y)
            U0[:, l] = f0.cdf(y)
            U1[:, l] = f1.cdf(y)
        if not self.has_copula_term:
            return marg, np.zeros(Y.shape[0])
        # hypothesis-specific CDFs: c1 sees F1(y), c0 sees F0(y)
        cop = self.copula1.log_density(U1) - self.copula0.log_density(U0)
        return marg, cop


def llr_increment(spec: DetectorSpec, y) -> Tuple[float, float]:
    marg, cop = spec.increments(np.asarray(y, dtype=float)[None, :])
    return float(marg[0]), float(cop[0])


@dataclass(frozen=True)
class SprtState:
    n: int = 0
    lam: float = 0.0
    comp: float = 0.0  # Kahan compensation
    verdict: Verdict = Verdict.CONTINUE
    decision_time: Optional[int] = None


def _kahan(total: float, comp: float, x: float) -> Tuple[float, float]:
    y = x - comp
    t = total + y
    return t, (t - total) - y


def apply_increment(state: SprtState, thresholds: WaldThresholds, marginal_term: float,
                    copula_term: float = 0.0) -> SprtState:
    if state.verdict is not Verdict.CONTINUE:
        raise SprtError("cannot step a test that has already terminated")
    lam, comp = _kahan(state.lam, state.comp, marginal_term)
    lam, comp = _kahan(lam, comp, copula_term)
    n = state.n + 1
    if lam >= thresholds.A:
        return SprtState(n, lam, comp, Verdict.ACCEPT_H1, n)
    if lam <= -thresholds.B:
        return SprtState(n, lam, comp, Verdict.ACCEPT_H0, n)
    return SprtState(n, lam, comp)


def step(state: SprtState, spec: DetectorSpec, thresholds: WaldThresholds, y) -> SprtState:
    return apply_increment(state, thresholds, *llr_increment(spec, y))


@dataclass(frozen=True)
class RunResult:
    verdict: Verdict
    T: int
    final_lambda: float
    truncated: bool = False


def _truncate(state: SprtState) -> RunResult:
    verdict = Verdict.ACCEPT_H1 if state.lam >= 0 else Verdict.ACCEPT_H0
    return RunResult(verdict, state.n, state.lam, truncated=True)


def run(spec: DetectorSpec, thresholds: WaldThresholds, stream: Iterable, cap: int = DEFAULT_CAP) -> RunResult:
    """Consume ``stream`` until the first threshold crossing or ``cap`` vectors.

    At the cap the decision falls back to the sign of the statistic and the
    result is flagged as truncated.
    """
    if cap < 1:
        raise ValueError("cap must be at least 1")
    state = SprtState()
    for y in stream:
        state = step(state, spec, thresholds, y)
        if state.verdict is not Verdict.CONTINUE:
            return RunResult(state.verdict, state.n, state.lam)
        if state.n >= cap:
            return _truncate(state)
    raise SprtError(f"stream exhausted after {state.n} vectors without a decision")


def run_increments(thresholds: WaldThresholds, increments: Iterable[Tuple[float, float]],
                   cap: int = DEFAULT_CAP) -> RunResult:
    """Same as :func:`run` for a stream of precomputed ``(marginal, copula)`` terms."""
    state = SprtState()
    for m, c in increments:
        state = apply_increment(state, thresholds, m, c)
        if state.verdict is not Verdict.CONTINUE:
            return RunResult(state.verdict, state.n, state.lam)
        if state.n >= cap:
            return _truncate(state)
    raise SprtError(f"stream exhausted after {state.n} increments without a decision")


@dataclass
class BatchResult:
    """Outcomes of many independent tests; ``decision`` is 1 for H1, 0 for H0."""

    decision: np.ndarray
    T: np.ndarray
    final_lambda: np.ndarray
    truncated: np.ndarray


def run_many(spec: DetectorSpec, thresholds: WaldThresholds, sources: Sequence[Callable[[int], np.ndarray]],
             cap: int = DEFAULT_CAP, chunk: int = 64) -> BatchResult:
    """Run one test per source, vectorised across tests.

    ``sources[i](k)`` must return the next ``k`` vectors of trial ``i``.
    Each trial draws in blocks of ``chunk`` vectors, so its outcome depends
    only on its own source, not on the other trials in the batch.
    """
    n = len(sources)
    L = spec.n_sensors
    lam = np.zeros(n)
    comp = np.zeros(n)
    T = np.zeros(n, dtype=np.int64)
    decision = np.full(n, -1, dtype=np.int64)
    truncated = np.zeros(n, dtype=bool)
    active = np.arange(n)
    A, lower = thresholds.A, -thresholds.B
    consumed = 0
    while active.size:
        k = min(chunk, cap - consumed)
        Y = np.concatenate([sources[i](k) for i in active]).reshape(active.size * k, L)
        marg, cop = spec.increments(Y)
        marg = marg.reshape(active.size, k)
        cop = cop.reshape(active.size, k)
        lam_a, comp_a = lam[active], comp[active]
        open_ = np.ones(active.size, dtype=bool)
        for j in range(k):
            for term in (marg[:, j], cop[:, j]):
                yk = term - comp_a
                t = lam_a + yk
                new_comp = (t - lam_a) - yk
                lam_a = np.where(open_, t, lam_a)
                comp_a = np.where(open_, new_comp, comp_a)
            up = open_ & (lam_a >= A)
            down = open_ & (lam_a <= lower)
            hit = up | down
            T[active[hit]] = consumed + j + 1
            decision[active[up]] = 1
            decision[active[down]] = 0
            open_ &= ~hit
        lam[active], comp[active] = lam_a, comp_a
        consumed += k
        if consumed >= cap:
            left = active[open_]
            T[left] = consumed
            decision[left] = (lam[left] >= 0).astype(np.int64)
            truncated[left] = True
            break
        active = active[open_]
    return BatchResult(decision, T, lam, truncated)


@dataclass(frozen=True)
class AsymptoticProfile:
    D0: float
    D1: float
    predicted_ET_H0: float
    predicted_ET_H1: float
    predicted_PF: float
    predicted_PM: float
    copula_kl01: float = 0.0
    copula_kl10: float = 0.0
    copula_kl01_se: float = 0.0
    copula_kl10_se: float = 0.0


def kl_drift(spec: DetectorSpec, n_mc: int, rng: np.random.Generator,
             thresholds: Optional[WaldThresholds] = None) -> AsymptoticProfile:
    """Per-vector KL drifts under each hypothesis and the asymptotic predictions.

    ``D0 = sum_l D(f0l || f1l) + D(c0 || c1)`` and symmetrically for ``D1``;
    expected stopping times are ``B / D0`` and ``A / D1``.
    """
    thresholds = thresholds or wald_thresholds(0.01, 0.01)
    marg01 = sum(f0.kl_divergence(f1) for f0, f1 in zip(spec.marginals0, spec.marginals1))
    marg10 = sum(f1.kl_divergence(f0) for f0, f1 in zip(spec.marginals0, spec.marginals1))
    kl01, se01 = kl_divergence(spec.copula0, spec.copula1, n_mc, rng)
    kl10, se10 = kl_divergence(spec.copula1, spec.copula0, n_mc, rng)
    D0, D1 = marg01 + kl01, marg10 + kl10
    if not (D0 > 0 and D1 > 0 and math.isfinite(D0) and math.isfinite(D1)):
        raise SprtError(f"drifts must be finite and positive, got D0={D0}, D1={D1}")
    return AsymptoticProfile(
        D0=D0,
        D1=D1,
        predicted_ET_H0=thresholds.B / D0,
        predicted_ET_H1=thresholds.A / D1,
        predicted_PF=math.exp(-thresholds.A),
        predicted_PM=math.exp(-thresholds.B),
        copula_kl01=kl01,
        copula_kl10=kl10,
        copula_kl01_se=se01,
        copula_kl10_se=se10,
    )
