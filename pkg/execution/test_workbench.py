import json
import os

import pandas as pd
import pytest

from workbench import main

SMALL = [
    "--n-assets", "5", "--periods", "60", "--m", "30", "--h", "2", "--k", "3",
    "--b", "3", "--c", "4", "--rp", "20", "--u", "0.5",
]


def _run(command, out, *extra):
    return main([command, "--out", str(out), *SMALL, *extra])


@pytest.fixture(scope="module")
def calibrated(tmp_path_factory):
    out = tmp_path_factory.mktemp("calibrated")
    code = _run("calibrate", out, "--m-grid", "30", "--k-grid", "3", "--reps", "1000",
                "--repetitions", "1", "--gamma", "0.94,1.0")
    assert code == 0
    assert _run("simulate", out) == 0
    return out


def test_simulate_is_reproducible(tmp_path):
    assert _run("simulate", tmp_path / "a") == 0
    assert _run("simulate", tmp_path / "b") == 0
    a = (tmp_path / "a" / "simulated_returns.csv").read_bytes()
    b = (tmp_path / "b" / "simulated_returns.csv").read_bytes()
    assert a.startswith(b"# command=simulate config_sha256=")
    assert a == b


def test_refuses_to_overwrite(tmp_path):
    assert _run("simulate", tmp_path) == 0
    assert _run("simulate", tmp_path) == 2
    assert _run("simulate", tmp_path, "--overwrite") == 0


def test_log_is_jsonl(tmp_path):
    assert _run("simulate", tmp_path) == 0
    lines = (tmp_path / "simulate_log.jsonl").read_text(encoding="utf-8").splitlines()
    events = [json.loads(line) for line in lines]
    assert all(e["tipo"] == "simulate" for e in events)
    assert events[-1]["status"] == "success"


def test_bad_configuration_exits_2(tmp_path):
    assert _run("frontier", tmp_path, "--level", "0.3") == 2
    assert _run("frontier", tmp_path, "--config", str(tmp_path / "missing.env")) == 2


def test_calibrate_writes_table(calibrated):
    table = pd.read_csv(calibrated / "critical_values.csv", comment="#")
    assert len(table) == 8
    assert set(table["gamma"].round(6)) == {0.94, 1.0}
    assert (calibrated / "calibration_summary.csv").exists()


def test_frontier_and_grid(tmp_path):
    assert _run("frontier", tmp_path) == 0
    assert _run("grid", tmp_path) == 0
    frontier = pd.read_csv(tmp_path / "frontier.csv", comment="#")
    grid = pd.read_csv(tmp_path / "grid.csv", comment="#")
    assert list(frontier["b"]) == [1, 2, 3]
    assert len(grid) == 12


def test_expost(tmp_path):
    assert _run("expost", tmp_path, "--p-draws", "5") == 0
    frame = pd.read_csv(tmp_path / "expost_frontier.csv", comment="#")
    assert set(frame["method"]) == {"method0", "method1"}
    assert (tmp_path / "expost_equation.csv").exists()


def test_consistency_needs_table(tmp_path):
    assert _run("consistency", tmp_path) == 2


def test_consistency_with_table(calibrated, tmp_path):
    table = str(calibrated / "critical_values.csv")
    assert _run("consistency", tmp_path, "--table", table, "--gamma", "0.94,1.0") == 0
    cmap = pd.read_csv(tmp_path / "consistency_map.csv", comment="#")
    assert len(cmap) == 2 * 12
    assert set(cmap["consistent"]) <= {0, 1}


def test_run_requires_input(calibrated, tmp_path):
    table = str(calibrated / "critical_values.csv")
    assert _run("run", tmp_path, "--table", table) == 2


def test_run_with_short_history(calibrated, tmp_path):
    short = tmp_path / "short.csv"
    short.write_text("date,A,B\n2000-01-07,0.01,0.02\n2000-01-14,0.00,-0.01\n", encoding="utf-8")
    table = str(calibrated / "critical_values.csv")
    assert _run("run", tmp_path / "out", "--table", table, "--input", str(short)) == 2


def test_full_run(calibrated, tmp_path):
    table = str(calibrated / "critical_values.csv")
    returns = str(calibrated / "simulated_returns.csv")
    code = _run("run", tmp_path, "--table", table, "--input", returns, "--split", "8", "--gamma", "0.94,1.0")
    assert code == 0
    ledger = pd.read_csv(tmp_path / "backtest_ledger.csv", comment="#", keep_default_na=False)
    # 15 origens, K = 3: 12 períodos de decisão, estratégia A e B para dois γ
    assert len(ledger) == 12 * 3
    summary = pd.read_csv(tmp_path / "backtest_summary.csv", comment="#", keep_default_na=False)
    assert summary.loc[summary["strategy"] == "B", "selected"].sum() == 2
    proportions = pd.read_csv(tmp_path / "run_proportions.csv", comment="#")
    assert {"proportion_20", "proportion_05", "index_high", "index_low"} <= set(proportions.columns)
    assert len(os.listdir(tmp_path / "run_grids")) == 13


def test_validate(calibrated, tmp_path):
    table = str(calibrated / "critical_values.csv")
    code = _run("validate", tmp_path, "--table", table, "--m-grid", "30", "--p-draws", "4")
    assert code == 0
    pvalues = pd.read_csv(tmp_path / "validate_pvalues.csv", comment="#")
    assert set(pvalues["method"]) == {"method0", "method1"}
    assert pvalues["avg_pvalue"].between(0.0, 1.0).all()
