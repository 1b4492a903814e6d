"""Monte Carlo campaigns over sweep cells and their CSV/SVG outputs."""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .. import __version__
from ..copulas import CopulaModel
from ..fitting import FitError, pseudo_observations, select_best
from ..simnet import H0, H1, RNG_NAME, SNR_DEFINITION, NetworkConfig, marginal_models, observations, substream, training_burst
from ..sprt import AsymptoticProfile, BatchResult, DetectorSpec, kl_drift, run_many, wald_thresholds
from . import svg
from .config import TABLE_CODES, Cell, DetectorMode, ExperimentPlan, config_hash, dump_config

log = logging.getLogger(__name__)

#: stream key component reserved for training bursts and KL estimates
_FIT_STREAM = 2
_KL_STREAM = 3

COLUMNS = [
    "table", "case", "mode", "snr_db", "signal", "alpha", "beta", "A", "B", "trials",
    "P_F", "P_F_se", "P_M", "P_M_se",
    "ET_H0", "ET_H0_se", "ET_H1", "ET_H1_se", "ET_avg", "ET_avg_se",
    "truncated_H0", "truncated_H1", "fit_failures", "selected_H0", "selected_H1",
    "D0", "D1", "pred_ET_H0", "pred_ET_H1", "pred_PF", "pred_PM",
]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else f"{float(v):.6g}"
    return str(v)


def _binomial(k: int, n: int) -> Tuple[float, float]:
    p = k / n
    return p, (math.sqrt(p * (1.0 - p) / n) if n > 1 else float("nan"))


def _mean_se(x: np.ndarray) -> Tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return float("nan"), float("nan")
    se = float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else float("nan")
    return float(np.mean(x)), se


def true_spec(cfg: NetworkConfig, product: bool = False) -> DetectorSpec:
    return DetectorSpec(tuple(marginal_models(cfg, H0)), tuple(marginal_models(cfg, H1)),
                        cfg.dep_h0, cfg.dep_h1, product_mode=product)


def _sources(cfg: NetworkConfig, hypothesis: int, seed: int, key: Tuple[int, ...], trials: Sequence[int]):
    return [partial(observations, cfg, hypothesis, substream(seed, *key, hypothesis, t)) for t in trials]


def fit_detector(cfg: NetworkConfig, plan: ExperimentPlan, rng: np.random.Generator):
    """Fit both copulas from labelled training bursts; returns (spec, families, failures)."""
    det = plan.settings["detector"]
    n0 = int(det["n0"])
    conventional = det.get("aic", "single") == "conventional"
    lib = plan.library()
    copulas, families, failures = [], [], 0
    for hyp in (H0, H1):
        Y = training_burst(cfg, hyp, n0, rng)
        U = pseudo_observations(Y, marginal_models(cfg, hyp), hyp)
        try:
            best = select_best(lib, U, conventional_aic=conventional)
            copulas.append(best.model)
            families.append(best.family.value)
        except FitError as exc:
            log.warning("copula selection failed under H%d: %s", hyp, exc)
            failures += 1
            copulas.append(CopulaModel.independence(cfg.n_sensors))
            families.append("failed")
    spec = DetectorSpec(tuple(marginal_models(cfg, H0)), tuple(marginal_models(cfg, H1)), copulas[0], copulas[1])
    return spec, families, failures


@dataclass
class CellOutcome:
    row: Dict[str, Any]
    h0: BatchResult = field(repr=False)
    h1: BatchResult = field(repr=False)


def _run_hypothesis(plan: ExperimentPlan, cell: Cell, cfg: NetworkConfig, hyp: int, specs, assignment):
    seed, trials = plan.seed, plan.trials
    cap, chunk = int(plan.settings["cap"]), int(plan.settings["chunk"])
    thr = wald_thresholds(cell.alpha, cell.beta)
    key = (TABLE_CODES[plan.name], cell.index)
    decision = np.empty(trials, dtype=np.int64)
    T = np.empty(trials, dtype=np.int64)
    lam = np.empty(trials)
    trunc = np.empty(trials, dtype=bool)
    for r, spec in enumerate(specs):
        idx = np.flatnonzero(assignment == r)
        if idx.size == 0:
            continue
        res = run_many(spec, thr, _sources(cfg, hyp, seed, key, idx), cap=cap, chunk=chunk)
        decision[idx], T[idx], lam[idx], trunc[idx] = res.decision, res.T, res.final_lambda, res.truncated
    return BatchResult(decision, T, lam, trunc)


def _drift(plan: ExperimentPlan, cell: Cell, cfg: NetworkConfig) -> AsymptoticProfile:
    # estimated mode reports the drift of the generating copulas
    spec = true_spec(cfg, product=cell.mode is DetectorMode.PRODUCT)
    rng = substream(plan.seed, _KL_STREAM, TABLE_CODES[plan.name], cell.index)
    return kl_drift(spec, int(plan.settings["kl_n_mc"]), rng, wald_thresholds(cell.alpha, cell.beta))


def run_cell(plan: ExperimentPlan, cell: Cell) -> CellOutcome:
    cfg = plan.scenario(cell.snr_db, cell.case)
    trials = plan.trials
    selected = {H0: Counter(), H1: Counter()}
    failures = 0
    if cell.mode is DetectorMode.ESTIMATED:
        reps = max(1, min(int(plan.settings["detector"]["fit_replications"]), trials))
        specs = []
        for r in range(reps):
            rng = substream(plan.seed, _FIT_STREAM, TABLE_CODES[plan.name], cell.index, r)
            spec, fams, fails = fit_detector(cfg, plan, rng)
            specs.append(spec)
            selected[H0][fams[0]] += 1
            selected[H1][fams[1]] += 1
            failures += fails
        assignment = np.arange(trials) % reps
    else:
        specs = [true_spec(cfg, product=cell.mode is DetectorMode.PRODUCT)]
        assignment = np.zeros(trials, dtype=np.int64)

    h0 = _run_hypothesis(plan, cell, cfg, H0, specs, assignment)
    h1 = _run_hypothesis(plan, cell, cfg, H1, specs, assignment)
    thr = wald_thresholds(cell.alpha, cell.beta)
    prof = _drift(plan, cell, cfg)

    pf, pf_se = _binomial(int(np.sum(h0.decision == 1)), trials)
    pm, pm_se = _binomial(int(np.sum(h1.decision == 0)), trials)
    et0, et0_se = _mean_se(h0.T)
    et1, et1_se = _mean_se(h1.T)
    eta, eta_se = _mean_se(np.concatenate([h0.T, h1.T]))

    def fam_summary(c: Counter) -> str:
        return ";".join(f"{k}:{v}" for k, v in sorted(c.items())) if c else ""

    row = {
        "table": plan.name, "case": cell.case, "mode": cell.mode.value, "snr_db": cell.snr_db,
        "signal": cfg.signal, "alpha": cell.alpha, "beta": cell.beta, "A": thr.A, "B": thr.B,
        "trials": trials, "P_F": pf, "P_F_se": pf_se, "P_M": pm, "P_M_se": pm_se,
        "ET_H0": et0, "ET_H0_se": et0_se, "ET_H1": et1, "ET_H1_se": et1_se,
        "ET_avg": eta, "ET_avg_se": eta_se,
        "truncated_H0": int(np.sum(h0.truncated)), "truncated_H1": int(np.sum(h1.truncated)),
        "fit_failures": failures,
        "selected_H0": fam_summary(selected[H0]), "selected_H1": fam_summary(selected[H1]),
        "D0": prof.D0, "D1": prof.D1, "pred_ET_H0": prof.predicted_ET_H0, "pred_ET_H1": prof.predicted_ET_H1,
        "pred_PF": prof.predicted_PF, "pred_PM": prof.predicted_PM,
    }
    return CellOutcome(row, h0, h1)


def _cell_row(plan: ExperimentPlan, cell: Cell) -> Dict[str, Any]:
    return run_cell(plan, cell).row


def run_cells(plan: ExperimentPlan) -> List[Dict[str, Any]]:
    workers = int(plan.settings.get("workers", 1))
    if workers > 1 and len(plan.cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(partial(_cell_row, plan), plan.cells))
    return [_cell_row(plan, c) for c in plan.cells]


def metadata(plan: ExperimentPlan) -> List[Tuple[str, str]]:
    s = plan.settings
    sc = s["scenario"]
    case1 = plan.scenario(-6.0, 1)
    case2 = plan.scenario(-6.0, 2)
    return [
        ("artifact", f"copsprt {__version__}"),
        ("experiment", plan.name),
        ("config_hash", config_hash(s)),
        ("seed", str(plan.seed)),
        ("rng", RNG_NAME),
        ("snr_definition", SNR_DEFINITION),
        ("sensors", str(sc["n_sensors"])),
        ("sigma_v", _fmt(float(sc["sigma_v"])) if np.isscalar(sc["sigma_v"]) else str(sc["sigma_v"])),
        ("sigma_w", _fmt(float(sc["sigma_w"])) if np.isscalar(sc["sigma_w"]) else str(sc["sigma_w"])),
        ("dependence_h1", case1.dep_h1.describe()),
        ("dependence_h0_case1", case1.dep_h0.describe()),
        ("dependence_h0_case2", case2.dep_h0.describe()),
        ("n0", str(s["detector"]["n0"])),
        ("fit_replications", str(s["detector"]["fit_replications"])),
        ("copula_library", " ".join(s["detector"]["library"])),
        ("aic_form", "-loglik + 2q" if s["detector"].get("aic", "single") == "single" else "-2 loglik + 2q"),
        ("stopping_time", "vectors consumed by the test; the N0 training vectors are not counted"),
        ("ET_avg", "mean stopping time over the pooled H0 and H1 trials"),
        ("drift", "D0/D1 from the detector's copulas (generating copulas for estimated mode); copula KL by Monte Carlo"),
        ("cap", str(s["cap"])),
    ]


def write_csv(path: Path, meta: Sequence[Tuple[str, str]], columns: Sequence[str], rows: Sequence[Dict[str, Any]]) -> Path:
    buf = io.StringIO()
    for k, v in meta:
        buf.write(f"# {k}: {v}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    return path


def _prepare_out(plan: ExperimentPlan) -> Path:
    out = Path(plan.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    dump_config(plan.settings, out / "config.resolved.yaml")
    return out


def run_table(plan: ExperimentPlan) -> Path:
    out = _prepare_out(plan)
    rows = run_cells(plan)
    return write_csv(out / f"{plan.name}.csv", metadata(plan), COLUMNS, rows)


CURVE_COLUMNS = ["sweep", "mode", "snr_db", "alpha", "beta", "trials",
                 "ET_H0", "ET_H0_se", "ET_H1", "ET_H1_se", "ET_avg", "ET_avg_se", "P_F", "P_M"]


def curve_rows(plan: ExperimentPlan, rows: Sequence[Dict[str, Any]]) -> List[Dict[str, Any]]:
    swept = "alpha" if plan.name == "curves_alpha" else "beta"
    return [dict({c: r[c] for c in CURVE_COLUMNS if c in r}, sweep=swept) for r in rows]


def run_curves(plan: ExperimentPlan) -> Tuple[Path, Path]:
    out = _prepare_out(plan)
    rows = curve_rows(plan, run_cells(plan))
    csv_path = write_csv(out / f"{plan.name}.csv", metadata(plan), CURVE_COLUMNS, rows)
    swept = rows[0]["sweep"] if rows else ("alpha" if plan.name == "curves_alpha" else "beta")
    series: Dict[str, List[Tuple[float, float]]] = {}
    for r in rows:
        name = f"{r['mode']} SNR {r['snr_db']:g} dB"
        series.setdefault(name, []).append((r[swept], r["ET_avg"]))
    svg_path = out / f"{plan.name}.svg"
    svg.write_line_plot(
        svg_path,
        {k: sorted(v) for k, v in series.items()},
        title=f"Expected stopping time vs {swept}",
        xlabel=swept,
        ylabel="E[T]",
        logx=True,
    )
    return csv_path, svg_path
