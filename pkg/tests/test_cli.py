import csv
import json
import os
from dataclasses import replace

import pytest

from reorderopt.cli import ConfigError, load_config, main
from reorderopt.ingest import write_fleet
from reorderopt.synthetic import Scenario, fleet, generate

CONFIG = """\
data: data
out: out
seed: 3
periods:
  training: [2021-02-10, 2021-04-01]
  validation: [2021-04-01, 2021-05-01]
grid:
  slp: [50, 90]
model:
  n_r: 20
  n_os: 3
  frequency: 15
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("ws")
    write_fleet(str(root / "data"), fleet(3, seed=1, n_days=130, horizon=20).values())
    (root / "cfg.yaml").write_text(CONFIG)
    return root


def run(root, *args, out="out"):
    return main([args[0], "--config", str(root / "cfg.yaml"), "--out", str(root / out), "--log-level", "ERROR",
                 *args[1:]])


def read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_config_errors_cite_lines(tmp_path):
    bad = tmp_path / "c.yaml"
    bad.write_text("seed: 1\nmodel:\n  n_r: many\n")
    with pytest.raises(ConfigError, match=":3:"):
        load_config(str(bad))
    bad.write_text("seed: 1\nbogus: 2\n")
    with pytest.raises(ConfigError, match=":2: unknown key"):
        load_config(str(bad))
    bad.write_text("seed: [1\n")
    with pytest.raises(ConfigError, match=r"c\.yaml:\d+"):
        load_config(str(bad))


def test_config_reads_percentages_and_paths(workspace):
    cfg = load_config(str(workspace / "cfg.yaml"))
    assert cfg.grid.slp_candidates == (0.5, 0.9)
    assert cfg.data == str(workspace / "data")
    assert (cfg.n_r, cfg.n_os, cfg.frequency, cfg.seed) == (20, 3, 15, 3)


def test_period_order_checked(tmp_path, workspace):
    bad = tmp_path / "c.yaml"
    bad.write_text(CONFIG.replace("training: [2021-02-10, 2021-04-01]", "training: [2021-02-10, 2021-04-10]"))
    assert main(["train", "--config", str(bad), "--log-level", "ERROR"]) == 2


def test_validate_without_hyper_is_actionable(workspace, caplog):
    assert run(workspace, "validate", out="nohyper") == 2
    assert "--slp" in caplog.text


def test_slp_requires_stp(workspace):
    assert run(workspace, "validate", "--slp", "0.5", out="half") == 2


def test_validate_bypass_is_deterministic_and_flags_win(workspace):
    assert run(workspace, "validate", "--slp", "0.5", "--stp", "0", "--frequency", "10", out="v1") == 0
    assert run(workspace, "validate", "--slp", "0.5", "--stp", "0", "--frequency", "10", out="v2") == 0
    files = sorted(os.listdir(workspace / "v1"))
    assert "metrics.json" in files and "recommendations.csv" in files and "trajectory_SKU000.csv" in files
    assert files == sorted(os.listdir(workspace / "v2"))
    for f in files:
        assert (workspace / "v1" / f).read_bytes() == (workspace / "v2" / f).read_bytes()
    rows = read(workspace / "v1" / "recommendations.csv")
    # three sampling days (frequency flag beats the config's 15) plus the operation-date row, per SKU
    assert len(rows) == 3 * 4
    assert sorted({r["date"] for r in rows}) == ["2021-04-01", "2021-04-11", "2021-04-21", "2021-05-01"]
    doc = json.loads((workspace / "v1" / "metrics.json").read_text())
    assert set(doc["per_sku"]) == {"SKU000", "SKU001", "SKU002"}


def test_train_then_validate(workspace):
    assert run(workspace, "train", out="tr") == 0
    for sku in ("SKU000", "SKU001", "SKU002"):
        rep = json.loads((workspace / "tr" / f"train_report_{sku}.json").read_text())
        assert len(rep["cells"]) == 2
    assert run(workspace, "validate", "--skus", "SKU001", out="tr") == 0
    assert {r["sku"] for r in read(workspace / "tr" / "recommendations.csv")} == {"SKU001"}


def test_recommend_one_row_per_sku(workspace):
    assert run(workspace, "recommend", "--slp", "0.5", "--stp", "0", "--today", "2021-05-01", out="rec") == 0
    rows = read(workspace / "rec" / "recommendations.csv")
    assert [r["sku"] for r in rows] == ["SKU000", "SKU001", "SKU002"]
    assert {r["date"] for r in rows} == {"2021-05-01"}


def test_recommend_skips_short_history(workspace):
    assert run(workspace, "recommend", "--slp", "0.5", "--stp", "0", "--today", "2021-01-10", out="early") == 0
    assert read(workspace / "early" / "recommendations.csv") == []


def test_zero_uncertainty_recommendation(tmp_path):
    ds = generate(Scenario(n_days=90, horizon=20, demand_sd=2.0), seed=0)
    write_fleet(str(tmp_path / "data"), [ds])
    assert main(["recommend", "--data", str(tmp_path / "data"), "--out", str(tmp_path / "o"), "--slp", "0.9",
                 "--stp", "1", "--today", "2021-03-01", "--log-level", "ERROR"]) == 0
    (row,) = read(tmp_path / "o" / "recommendations.csv")
    assert (float(row["ssv"]), int(row["st"])) == (0.0, 0)


def test_per_sku_failure_isolated(tmp_path):
    sets = list(fleet(2, seed=1, n_days=130, horizon=20).values())
    short = generate(replace(Scenario(sku_id="SHORT", n_days=60, horizon=20)), seed=0)
    write_fleet(str(tmp_path / "data"), sets + [short])
    (tmp_path / "cfg.yaml").write_text(CONFIG)
    assert main(["validate", "--config", str(tmp_path / "cfg.yaml"), "--slp", "0.5", "--stp", "0",
                 "--log-level", "ERROR"]) == 1
    errors = json.loads((tmp_path / "out" / "errors.json").read_text())
    assert list(errors) == ["SHORT"]
    assert {r["sku"] for r in read(tmp_path / "out" / "recommendations.csv")} == {"SKU000", "SKU001"}


def test_simulate_mrp_writes_horizon_rows(workspace):
    assert main(["simulate-mrp", "--config", str(workspace / "cfg.yaml"), "--out", str(workspace / "mrp"),
                 "--sku", "SKU000", "--date", "2021-03-01", "--ssv", "5", "--log-level", "ERROR"]) == 0
    assert len(read(workspace / "mrp" / "mrp_SKU000_2021-03-01.csv")) == 20


def test_sensitivity_axis(workspace):
    assert run(workspace, "sensitivity", "--slp", "0.5", "--stp", "0", "--axis", "n_c", "--values", "1,5",
               out="sens") == 0
    rows = read(workspace / "sens" / "sensitivity_n_c.csv")
    assert [r["value"] for r in rows] == ["1.0", "5.0"]
    assert set(rows[0]) == {"value", "r_ad", "s_inv_bar", "s_ss_bar", "s_ss_op"}


def test_unknown_axis_is_usage_error(workspace):
    with pytest.raises(SystemExit) as exc:
        run(workspace, "sensitivity", "--axis", "bogus", "--values", "1")
    assert exc.value.code == 2


def test_parallel_jobs_match_serial_output(workspace):
    assert run(workspace, "validate", "--slp", "0.5", "--stp", "0", out="j1") == 0
    assert run(workspace, "validate", "--slp", "0.5", "--stp", "0", "--jobs", "2", out="j2") == 0
    for f in sorted(os.listdir(workspace / "j1")):
        assert (workspace / "j1" / f).read_bytes() == (workspace / "j2" / f).read_bytes()
