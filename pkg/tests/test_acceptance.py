"""End-to-end acceptance checks, each printing one PASS/FAIL line.

All runs use seed 7 and the default scenario: three sensors, sigma_v = 1,
sigma_w = sqrt(3), equicorrelated Gaussian copula (rho = 0.5) under H1,
independence under H0.
"""

import itertools
import math
import time

import numpy as np
import pytest
from scipy import stats

from conftest import ACCEPTANCE_LINES
from copsprt.cli import main
from copsprt.copulas import CopulaFamily, CopulaLibrary, CopulaModel, kl_divergence
from copsprt.fitting import fit_mle, select_best
from copsprt.harness.config import Cell, DetectorMode, curve_plans, load_config, table_plan
from copsprt.harness.runner import run_cell, true_spec
from copsprt.simnet import substream
from copsprt.sprt import kl_drift, run_many, wald_thresholds

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

SEED = 7
TRIALS = 10_000
KNOWN, PRODUCT, ESTIMATED = DetectorMode.KNOWN, DetectorMode.PRODUCT, DetectorMode.ESTIMATED


def record(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def base_cfg(**extra):
    return load_config(None, {"seed": SEED, "trials": TRIALS, **extra})


# --- shared Monte Carlo runs -----------------------------------------------------------


@pytest.fixture(scope="module")
def alpha_sweep():
    """ET_avg etc. for alpha in {0.3, 0.1, 0.01, 0.001}, beta = 0.01, both SNRs, both modes."""
    plan = curve_plans(base_cfg())[0]
    rows = {}
    for cell in plan.cells:
        rows[(cell.alpha, cell.snr_db, cell.mode)] = run_cell(plan, cell).row
    return rows


# --- 1 ---------------------------------------------------------------------------------


def test_criterion_1_constraint_violation():
    cfg = base_cfg(table1={"beta": [0.01], "snr_db": [-6.0]})
    plan = table_plan("table1", cfg)
    start = time.perf_counter()
    rows = {c.mode: run_cell(plan, c).row for c in plan.cells}
    elapsed = time.perf_counter() - start
    p, k = rows[PRODUCT], rows[KNOWN]
    ok = (p["P_M"] >= 5 * 0.01 and k["P_M"] <= 0.01 and p["P_F"] <= 0.01 and k["P_F"] <= 0.01
          and elapsed < 120.0)
    record(1, "product P_M >= 5 beta, known P_M <= beta, both P_F <= alpha, < 2 min", ok,
           f"product P_F={p['P_F']:.4f} P_M={p['P_M']:.4f}; known P_F={k['P_F']:.4f} P_M={k['P_M']:.4f}; "
           f"truncated={p['truncated_H0'] + p['truncated_H1'] + k['truncated_H0'] + k['truncated_H1']}; "
           f"runtime={elapsed:.1f}s")


# --- 2 ---------------------------------------------------------------------------------


def test_criterion_2_speed_up(alpha_sweep):
    alphas = [0.3, 0.1, 0.01, 0.001]
    pairs = [(a, alpha_sweep[(a, -6.0, KNOWN)]["ET_avg"], alpha_sweep[(a, -6.0, PRODUCT)]["ET_avg"])
             for a in alphas]
    below = all(k < p for _, k, p in pairs)
    ratio = pairs[2][2] / pairs[2][1]
    detail = "; ".join(f"alpha={a:g}: copula {k:.3f} vs product {p:.3f}" for a, k, p in pairs)
    record(2, "copula E[T] < product E[T] at every alpha, ratio >= 2 at alpha=0.01", below and ratio >= 2.0,
           f"{detail}; ratio at 0.01 = {ratio:.3f}")


# --- 3 ---------------------------------------------------------------------------------


def test_criterion_3_snr_sensitivity(alpha_sweep):
    parts, ok = [], True
    for a in (0.3, 0.1, 0.01, 0.001):
        inc = {}
        for mode in (KNOWN, PRODUCT):
            lo, hi = alpha_sweep[(a, -6.0, mode)]["ET_avg"], alpha_sweep[(a, -9.0, mode)]["ET_avg"]
            inc[mode] = hi / lo - 1.0
        ok &= inc[KNOWN] < inc[PRODUCT]
        parts.append(f"alpha={a:g}: copula +{100 * inc[KNOWN]:.1f}% vs product +{100 * inc[PRODUCT]:.1f}%")
    record(3, "E[T] increase from -6 to -9 dB smaller for copula mode (beta=0.01, every alpha)", ok,
           "; ".join(parts))


# --- 4 ---------------------------------------------------------------------------------


def test_criterion_4_asymptotics():
    cfg = base_cfg()
    plan = table_plan("table1", cfg)
    net = plan.scenario(-6.0)
    spec = true_spec(net)
    thr = wald_thresholds(1e-4, 1e-4)
    prof = kl_drift(spec, 1_000_000, substream(SEED, 4, 0), thr)
    cell = Cell(1e-4, 1e-4, -6.0, KNOWN, index=99)
    out = run_cell(plan, cell)
    et1 = out.h1.T.mean()
    rel = abs(et1 - prof.predicted_ET_H1) / prof.predicted_ET_H1
    pf = out.row["P_F"]
    ok = rel <= 0.15 and pf <= 10 * math.exp(-thr.A)
    record(4, "|E[T|H1] - A/D1|/(A/D1) <= 0.15 and P_F <= 10 e^-A at alpha=beta=1e-4", ok,
           f"A={thr.A:.4f} D1={prof.D1:.5f} A/D1={prof.predicted_ET_H1:.3f} E[T|H1]={et1:.3f} "
           f"(se {out.row['ET_H1_se']:.3f}) rel={rel:.4f}; P_F={pf:.5f} bound={10 * math.exp(-thr.A):.5f}")


# --- 5 ---------------------------------------------------------------------------------

AXIOM_MODELS = {
    "independence": [CopulaModel.independence(2)] * 3,
    "gaussian": [CopulaModel.gaussian_equicorrelated(2, r) for r in (-0.5, 0.3, 0.7)],
    "clayton": [CopulaModel.clayton(t) for t in (0.5, 1.0, 2.0)],
    "gumbel": [CopulaModel.gumbel(t) for t in (1.2, 1.5, 2.0)],
    "frank": [CopulaModel.frank(t) for t in (-3.0, 2.0, 5.0)],
}


def test_criterion_5_copula_axioms():
    rng = np.random.default_rng(SEED)
    worst_norm = worst_tau = worst_fd = 0.0
    h = 1e-4
    grid = [np.array(p) for p in itertools.product((0.15, 0.4, 0.65, 0.9), repeat=2)]
    for fam, models in AXIOM_MODELS.items():
        for m in models:
            u = rng.random((1_000_000, 2))
            worst_norm = max(worst_norm, abs(float(np.mean(m.density(u))) - 1.0))
            s = m.sample(rng, 100_000)
            worst_tau = max(worst_tau, abs(stats.kendalltau(s[:, 0], s[:, 1])[0] - m.kendall_tau()))
            if fam == "gaussian":
                continue  # no explicit CDF
            for p in grid:
                fd = (m.cdf(p + [h, h]) - m.cdf(p + [h, -h]) - m.cdf(p + [-h, h]) + m.cdf(p - [h, h])) / (4 * h * h)
                worst_fd = max(worst_fd, abs(fd / m.density(p) - 1.0))
    ok = worst_norm <= 0.01 and worst_tau <= 0.01 and worst_fd <= 1e-4
    record(5, "normalization +-0.01, Kendall tau +-0.01, FD density rel err <= 1e-4 (5 families x 3)", ok,
           f"max |mean c - 1|={worst_norm:.5f}; max |tau_hat - tau|={worst_tau:.5f}; max FD rel err={worst_fd:.2e}")


# --- 6 ---------------------------------------------------------------------------------


def test_criterion_6_sklar():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for d in (2, 3):
        A = rng.normal(size=(d, d))
        S = A @ A.T + 0.5 * np.eye(d)
        sd = np.sqrt(np.diag(S))
        R = S / np.outer(sd, sd)
        np.fill_diagonal(R, 1.0)
        mu = rng.normal(size=d)
        cop = CopulaModel.gaussian(R)
        cov = R * np.outer(sd, sd)
        x = rng.multivariate_normal(mu, cov, size=100)
        marg = stats.norm(mu, sd)
        prod = np.prod(marg.pdf(x), axis=1) * cop.density(marg.cdf(x))
        joint = stats.multivariate_normal(mu, cov).pdf(x)
        worst = max(worst, float(np.max(np.abs(prod / joint - 1.0))))
    record(6, "Gaussian marginals x Gaussian copula = MVN density within 1e-10 (d=2,3; 100 points)",
           worst <= 1e-10, f"max rel err={worst:.2e}")


# --- 7 ---------------------------------------------------------------------------------


def test_criterion_7_fitting_pipeline():
    clayton = CopulaModel.clayton(2.0)
    est = np.array([fit_mle(CopulaFamily.CLAYTON, clayton.sample(substream(SEED, 7, 1, s), 5000)).model.params
                    for s in range(100)])
    gauss = CopulaModel.gaussian_equicorrelated(2, 0.8)
    lib = CopulaLibrary(2)
    picks = [select_best(lib, gauss.sample(substream(SEED, 7, 2, s), 2000)).family for s in range(100)]
    hits = sum(p is CopulaFamily.GAUSSIAN for p in picks)
    plan = table_plan("table3", base_cfg())
    row = run_cell(plan, Cell(0.01, 0.01, -6.0, ESTIMATED, case=1, index=0)).row
    ok = np.all(np.abs(est - 2.0) <= 0.15) and hits >= 90 and row["P_M"] <= 0.02
    record(7, "Clayton MLE within +-0.15 (100 seeds), Gaussian picked >= 90/100, estimated P_M <= 2 beta", ok,
           f"Clayton estimates in [{est.min():.3f}, {est.max():.3f}]; Gaussian selected {hits}/100; "
           f"estimated-copula P_F={row['P_F']:.4f} P_M={row['P_M']:.4f} E[T]={row['ET_avg']:.3f} "
           f"(H1 picks {row['selected_H1']})")


# --- 8 ---------------------------------------------------------------------------------


def test_criterion_8_kl_oracle():
    rng = np.random.default_rng(SEED)
    g, ind = CopulaModel.gaussian_equicorrelated(2, 0.5), CopulaModel.independence(2)
    est, se = kl_divergence(g, ind, 1_000_000, rng)
    closed = -0.5 * math.log(1 - 0.25)
    ok = abs(est - closed) <= 3 * se
    self_terms = []
    for fam, models in AXIOM_MODELS.items():
        for m in models:
            k, s = kl_divergence(m, m, 100_000, rng)
            ok &= abs(k) <= 3 * s
            self_terms.append(abs(k))
    record(8, "KL(Gauss 0.5 || indep) = -0.5 log 0.75 within 3 se; KL(c || c) within 3 se of 0", ok,
           f"estimate={est:.6f} closed={closed:.6f} se={se:.2e}; max |KL(c||c)|={max(self_terms):.2e}")


# --- 9 ---------------------------------------------------------------------------------


def test_criterion_9_determinism(tmp_path, capsys):
    for run in ("a", "b"):
        assert main(["table1", "--seed", "7", "--trials", "1000", "--out", str(tmp_path / run)]) == 0
    a = (tmp_path / "a" / "table1.csv").read_bytes()
    b = (tmp_path / "b" / "table1.csv").read_bytes()
    record(9, "two runs of `table1 --seed 7 --trials 1000` give byte-identical CSVs", a == b,
           f"{len(a)} bytes, sha-equal={a == b}")
