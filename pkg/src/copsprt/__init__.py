"""Copula-based sequential detection for sensor networks with noisy channels."""

__version__ = "0.1.0"

from .copulas import CopulaFamily, CopulaLibrary, CopulaModel, kendall_tau, kl_divergence, tau_to_param
from .fitting import FittedCopula, PseudoObservations, aic_score, fit_mle, pseudo_observations, select_best
from .marginals import MarginalModel
from .simnet import NetworkConfig, default_config, marginal_models, snr_to_signal, training_burst
from .sprt import (
    DetectorSpec,
    SprtState,
    Verdict,
    WaldThresholds,
    kl_drift,
    llr_increment,
    run,
    run_many,
    step,
    wald_thresholds,
)
