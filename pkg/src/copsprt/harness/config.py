"""Experiment configuration: defaults, YAML ingestion and overrides."""

from __future__ import annotations

import copy
import enum
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import yaml

from ..copulas import CopulaLibrary, CopulaModel
from ..simnet import NetworkConfig


class DetectorMode(str, enum.Enum):
    KNOWN = "known"
    ESTIMATED = "estimated"
    PRODUCT = "product"


DEFAULTS: Dict[str, Any] = {
    "seed": 7,
    "trials": 10_000,
    "cap": 100_000,
    "chunk": 64,
    "workers": 1,
    "kl_n_mc": 200_000,
    "scenario": {
        "n_sensors": 3,
        "sigma_v": 1.0,
        "sigma_w": math.sqrt(3.0),
        "rho": 0.5,
        "rho_h0": 0.5,
    },
    "detector": {
        "n0": 100,
        "library": ["independence", "gaussian", "clayton", "gumbel", "frank"],
        "fit_replications": 100,
        "aic": "single",
    },
    "table1": {
        "alpha": [0.01],
        "beta": [0.3, 0.2, 0.1, 0.01, 0.001],
        "snr_db": [-6.0, -9.0],
        "modes": ["product", "known"],
    },
    "table2": {
        "alpha": [0.3, 0.2, 0.1, 0.01, 0.001],
        "beta": [0.01],
        "snr_db": [-6.0, -9.0],
        "modes": ["product", "known"],
    },
    "table3": {
        "alpha": [0.01],
        "beta": [0.01],
        "snr_db": [-6.0],
        "modes": ["product", "estimated"],
        "cases": [1, 2],
    },
    "curves": {
        "alpha_sweep": [0.3, 0.1, 0.01, 0.001],
        "beta_sweep": [0.3, 0.1, 0.01, 0.001],
        "fixed": 0.01,
        "snr_db": [-6.0, -9.0],
        "modes": ["product", "known"],
    },
    "fit_demo": {"snr_db": -6.0},
    "kl": {"snr_db": [-6.0, -9.0]},
}


def deep_merge(base: Dict[str, Any], extra: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in (extra or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: Optional[Path] = None, overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ValueError(f"{path}: top level must be a mapping")
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
        cfg = deep_merge(cfg, loaded)
    return deep_merge(cfg, overrides)


def config_hash(cfg: Dict[str, Any]) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def dump_config(cfg: Dict[str, Any], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True)


@dataclass(frozen=True)
class Cell:
    """One point of a sweep, run under one detector mode."""

    alpha: float
    beta: float
    snr_db: float
    mode: DetectorMode
    case: int = 1
    index: int = 0  # position in the sweep; keys the random streams


@dataclass(frozen=True)
class ExperimentPlan:
    name: str
    cells: tuple
    settings: Dict[str, Any]
    out_dir: Optional[Path] = None

    def __post_init__(self):
        if int(self.settings["trials"]) < 1:
            raise ValueError("trials must be at least 1")
        for c in self.cells:
            for v in (c.alpha, c.beta):
                if not 0.0 < v < 0.5:
                    raise ValueError(f"error constraints must lie in (0, 1/2), got {v}")

    @property
    def trials(self) -> int:
        return int(self.settings["trials"])

    @property
    def seed(self) -> int:
        return int(self.settings["seed"])

    def scenario(self, snr_db: float, case: int = 1) -> NetworkConfig:
        """Network for one cell; case 2 adds Gaussian dependence under H0."""
        sc = self.settings["scenario"]
        L = int(sc["n_sensors"])
        dep_h1 = CopulaModel.gaussian_equicorrelated(L, float(sc["rho"]))
        dep_h0 = CopulaModel.gaussian_equicorrelated(L, float(sc["rho_h0"])) if case == 2 else None
        cfg = NetworkConfig(n_sensors=L, sigma_v=sc["sigma_v"], sigma_w=sc["sigma_w"],
                            dep_h1=dep_h1, dep_h0=dep_h0, seed=self.seed)
        return cfg.with_snr(snr_db)

    def library(self) -> CopulaLibrary:
        return CopulaLibrary.from_names(int(self.settings["scenario"]["n_sensors"]),
                                        self.settings["detector"]["library"])


TABLE_CODES = {"table1": 1, "table2": 2, "table3": 3, "curves_alpha": 4, "curves_beta": 5}


def _modes(names: Sequence[str]) -> List[DetectorMode]:
    return [DetectorMode(m) for m in names]


def _as_list(v) -> list:
    return list(v) if isinstance(v, (list, tuple)) else [v]


def sweep_cells(alphas, betas, snrs, modes, cases=(1,)) -> tuple:
    cells = []
    idx = 0
    for case in cases:
        for snr in _as_list(snrs):
            for beta in _as_list(betas):
                for alpha in _as_list(alphas):
                    for mode in _modes(modes):
                        cells.append(Cell(float(alpha), float(beta), float(snr), mode, int(case), idx))
                    idx += 1
    return tuple(cells)


def table_plan(name: str, cfg: Dict[str, Any], out_dir: Optional[Path] = None) -> ExperimentPlan:
    t = cfg[name]
    cells = sweep_cells(t["alpha"], t["beta"], t["snr_db"], t["modes"], t.get("cases", (1,)))
    return ExperimentPlan(name, cells, cfg, out_dir)


def curve_plans(cfg: Dict[str, Any], out_dir: Optional[Path] = None) -> List[ExperimentPlan]:
    c = cfg["curves"]
    fixed = float(c["fixed"])
    alpha_plan = ExperimentPlan("curves_alpha", sweep_cells(c["alpha_sweep"], [fixed], c["snr_db"], c["modes"]),
                                cfg, out_dir)
    beta_plan = ExperimentPlan("curves_beta", sweep_cells([fixed], c["beta_sweep"], c["snr_db"], c["modes"]),
                               cfg, out_dir)
    return [alpha_plan, beta_plan]
