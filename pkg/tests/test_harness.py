import csv
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from copsprt.cli import main
from copsprt.harness.config import (
    DEFAULTS,
    Cell,
    DetectorMode,
    ExperimentPlan,
    curve_plans,
    load_config,
    table_plan,
)
from copsprt.harness.runner import COLUMNS, CURVE_COLUMNS, run_cell, run_curves, run_table
from copsprt.simnet import H0, H1

FAST = {"trials": 40, "kl_n_mc": 1000, "detector": {"fit_replications": 3}}


def read_csv(path):
    lines = path.read_text(encoding="utf-8").splitlines()
    meta = [l for l in lines if l.startswith("#")]
    body = [l for l in lines if not l.startswith("#")]
    return meta, list(csv.DictReader(body))


def fast_cfg(**extra):
    return load_config(None, {**FAST, **extra})


# --- plans -----------------------------------------------------------------------


def test_table1_plan_has_twenty_cells():
    plan = table_plan("table1", load_config())
    assert len(plan.cells) == 20
    assert {c.mode for c in plan.cells} == {DetectorMode.PRODUCT, DetectorMode.KNOWN}


def test_table3_plan_shape():
    plan = table_plan("table3", load_config())
    assert len(plan.cells) == 4
    assert sorted({c.case for c in plan.cells}) == [1, 2]


def test_modes_at_one_sweep_point_share_stream_index():
    plan = table_plan("table1", load_config())
    by_point = {}
    for c in plan.cells:
        by_point.setdefault((c.alpha, c.beta, c.snr_db), set()).add(c.index)
    assert all(len(v) == 1 for v in by_point.values())
    assert len({next(iter(v)) for v in by_point.values()}) == 10


def test_plan_validation():
    with pytest.raises(ValueError):
        ExperimentPlan("table1", (), load_config(None, {"trials": 0}))
    with pytest.raises(ValueError):
        ExperimentPlan("table1", (Cell(0.6, 0.1, -6.0, DetectorMode.KNOWN),), load_config())


def test_config_file_ingestion(tmp_path):
    p = tmp_path / "cfg.yaml"
    p.write_text("trials: 12\nscenario:\n  rho: 0.3\ntable1:\n  beta: [0.1]\n", encoding="utf-8")
    cfg = load_config(p)
    assert cfg["trials"] == 12 and cfg["scenario"]["rho"] == 0.3
    assert cfg["scenario"]["n_sensors"] == DEFAULTS["scenario"]["n_sensors"]
    assert len(table_plan("table1", cfg).cells) == 4
    bad = tmp_path / "bad.yaml"
    bad.write_text("trails: 12\n", encoding="utf-8")
    with pytest.raises(ValueError):
        load_config(bad)


# --- cells -----------------------------------------------------------------------


def test_summary_consistency():
    plan = table_plan("table1", fast_cfg())
    cell = Cell(0.1, 0.1, -9.0, DetectorMode.KNOWN, index=0)
    out = run_cell(plan, cell)
    assert out.row["P_F"] == np.sum(out.h0.decision == 1) / plan.trials
    assert out.row["P_M"] == np.sum(out.h1.decision == 0) / plan.trials
    assert len(out.h0.T) == len(out.h1.T) == plan.trials
    assert out.row["ET_H1"] == pytest.approx(out.h1.T.mean())


def test_single_trial_has_undefined_std_errors():
    plan = table_plan("table1", fast_cfg(trials=1))
    row = run_cell(plan, Cell(0.01, 0.01, -6.0, DetectorMode.KNOWN)).row
    assert math.isnan(row["P_F_se"]) and math.isnan(row["ET_H1_se"])
    assert not math.isnan(row["ET_avg_se"])  # two pooled trials


def test_estimated_mode_reports_selections():
    plan = table_plan("table3", fast_cfg())
    row = run_cell(plan, Cell(0.01, 0.01, -6.0, DetectorMode.ESTIMATED)).row
    counts = [int(x.split(":")[1]) for x in row["selected_H1"].split(";")]
    assert sum(counts) == 3
    assert row["fit_failures"] == 0


def test_product_mode_reports_marginal_drift():
    plan = table_plan("table1", fast_cfg())
    row = run_cell(plan, Cell(0.01, 0.01, -6.0, DetectorMode.PRODUCT)).row
    s = row["signal"]
    assert row["D1"] == pytest.approx(3 * s * s / 8)


# --- tables ------------------------------------------------------------------------


def test_run_table_rows_and_columns(tmp_path):
    cfg = fast_cfg(table1={"beta": [0.3, 0.01]})
    path = run_table(table_plan("table1", cfg, tmp_path))
    meta, rows = read_csv(path)
    assert len(rows) == 8
    assert list(rows[0].keys()) == COLUMNS
    assert any("snr_definition" in m for m in meta)
    assert any("config_hash" in m for m in meta)
    assert (tmp_path / "config.resolved.yaml").exists()
    for r in rows:
        assert 0.0 <= float(r["P_F"]) <= 1.0
        # six significant digits at most
        digits = r["ET_avg"].replace(".", "").replace("-", "").split("e")[0].lstrip("0")
        assert len(digits) <= 6


def test_table3_has_four_rows(tmp_path):
    path = run_table(table_plan("table3", fast_cfg(), tmp_path))
    _, rows = read_csv(path)
    assert len(rows) == 4
    assert {r["case"] for r in rows} == {"1", "2"}
    assert all(r["ET_avg"] != "" for r in rows)


def test_empty_sweep_writes_header_only(tmp_path):
    path = run_table(table_plan("table1", fast_cfg(table1={"beta": []}), tmp_path))
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    assert lines == [",".join(COLUMNS)]


def test_byte_identical_reruns(tmp_path):
    cfg = fast_cfg(table3={"cases": [1]})
    a = run_table(table_plan("table3", cfg, tmp_path / "a")).read_bytes()
    b = run_table(table_plan("table3", cfg, tmp_path / "b")).read_bytes()
    assert a == b


def test_worker_count_does_not_change_results(tmp_path):
    cfg = fast_cfg(table1={"beta": [0.1], "snr_db": [-6.0]})
    a = run_table(table_plan("table1", cfg, tmp_path / "a")).read_bytes()
    cfg2 = dict(cfg, workers=2)
    b = run_table(table_plan("table1", cfg2, tmp_path / "b")).read_bytes()
    strip = lambda raw: [l for l in raw.decode().splitlines() if not l.startswith("# config_hash")]
    assert strip(a) == strip(b)


# --- curves ------------------------------------------------------------------------


def test_curves_outputs(tmp_path):
    cfg = fast_cfg(curves={"alpha_sweep": [0.1, 0.01], "beta_sweep": [0.1], "snr_db": [-6.0]})
    plans = curve_plans(cfg, tmp_path)
    csv_path, svg_path = run_curves(plans[0])
    _, rows = read_csv(csv_path)
    assert list(rows[0].keys()) == CURVE_COLUMNS
    assert len(rows) == 4 and {r["sweep"] for r in rows} == {"alpha"}
    root = ET.parse(svg_path).getroot()
    assert root.tag.endswith("svg")
    assert len(root.findall("{http://www.w3.org/2000/svg}polyline")) == 2
    # single point sweep: one point per series, still valid
    csv_b, svg_b = run_curves(plans[1])
    root = ET.parse(svg_b).getroot()
    assert len(root.findall("{http://www.w3.org/2000/svg}circle")) == 2
    assert len(read_csv(csv_b)[1]) == 2


# --- CLI ---------------------------------------------------------------------------


def test_cli_table_with_overrides(tmp_path, capsys):
    rc = main(["table1", "--trials", "20", "--seed", "3", "--mode", "known", "--snr-db", "-6,-9",
               "--rho", "0.4", "--out", str(tmp_path)])
    assert rc == 0
    meta, rows = read_csv(tmp_path / "table1.csv")
    assert len(rows) == 10 and {r["mode"] for r in rows} == {"known"}
    assert "# seed: 3" in meta
    assert any("rho=[0.4 0.4 0.4]" in m for m in meta)


def test_cli_fit_demo(tmp_path, capsys):
    assert main(["fit-demo", "--out", str(tmp_path), "--seed", "1"]) == 0
    printed = capsys.readouterr().out
    assert "H0" in printed and "H1" in printed
    _, rows = read_csv(tmp_path / "fit_demo.csv")
    assert len(rows) == 10
    for h in ("0", "1"):
        sel = [r for r in rows if r["hypothesis"] == h and r["selected"] == "1"]
        assert len(sel) == 1
        assert float(sel[0]["aic"]) == min(float(r["aic"]) for r in rows if r["hypothesis"] == h)


def test_cli_kl(tmp_path, capsys):
    cfgfile = tmp_path / "c.yaml"
    cfgfile.write_text("kl_n_mc: 5000\n")
    assert main(["kl", "--config", str(cfgfile), "--out", str(tmp_path), "--snr-db", "-6"]) == 0
    _, rows = read_csv(tmp_path / "kl.csv")
    assert [r["mode"] for r in rows] == ["known", "product"]
    known, product = rows
    assert float(known["D1"]) > float(product["D1"])
    assert float(product["copula_kl10"]) == 0.0


def test_cli_curves(tmp_path):
    cfgfile = tmp_path / "c.yaml"
    cfgfile.write_text("trials: 20\nkl_n_mc: 1000\ncurves:\n  alpha_sweep: [0.1]\n  beta_sweep: [0.1, 0.01]\n")
    assert main(["curves", "--config", str(cfgfile), "--out", str(tmp_path), "--snr-db", "-6"]) == 0
    for name in ("curves_alpha.csv", "curves_alpha.svg", "curves_beta.csv", "curves_beta.svg"):
        assert (tmp_path / name).exists()


def test_cli_rejects_unknown_mode(tmp_path):
    with pytest.raises(SystemExit):
        main(["table1", "--mode", "magic"])
