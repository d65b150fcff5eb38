import csv

import pytest

from evcharge import cli
from evcharge.metrics import E_STAR_WS
from evcharge.runner import (
    ExperimentMatrix, ExperimentRow, RunSettings, builtin_matrix, load_matrix, run_experiment,
    run_matrix, tree_digest, write_matrix, write_results,
)
from evcharge.scenario import ConfigError, Strategy


def test_builtin_rows():
    m = builtin_matrix()
    r1, r12 = m.row(1), m.row(12)
    assert (r1.ev_count, r1.fcc_count, r1.scc_count, r1.strategy) == (30, 30, 0, Strategy.FCFS)
    assert (r12.ev_count, r12.fcc_count, r12.scc_count, r12.strategy) == (120, 0, 30, Strategy.SHRD)
    assert m.total_runs == 360


def test_matrix_validation():
    with pytest.raises(ConfigError):
        ExperimentMatrix([ExperimentRow(1, 5, 0, 0, Strategy.FCFS)])
    with pytest.raises(ConfigError):
        ExperimentMatrix([ExperimentRow(1, 5, 1, 0, Strategy.FCFS)] * 2)


def test_matrix_file_roundtrip(tmp_path):
    m = builtin_matrix()
    write_matrix(m, tmp_path / "m.csv")
    assert load_matrix(tmp_path / "m.csv").rows == m.rows
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ConfigError):
        load_matrix(tmp_path / "bad.csv")


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_exp1_everyone_completes_above_lower_bound(seed):
    art = run_experiment(builtin_matrix().row(1), None, seed)
    assert art.completion_count == 30
    assert all(x >= 734.0 - 1e-9 for x in art.ttr_samples if x is not None)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_exp3_peak_bounded(seed):
    art = run_experiment(builtin_matrix().row(3), None, seed)
    assert art.peak_alloc_w <= 330_000


def test_same_seed_byte_equal(tmp_path):
    row = builtin_matrix().row(8)
    a = {8: [run_experiment(row, None, 99)]}
    b = {8: [run_experiment(row, None, 99)]}
    write_results(a, tmp_path / "a")
    write_results(b, tmp_path / "b")
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")


def test_serial_and_parallel_agree(tmp_path):
    m = builtin_matrix(replications=2)
    only = [1, 4, 12]
    write_results(run_matrix(m, only=only), tmp_path / "s")
    write_results(run_matrix(m, only=only, workers=2), tmp_path / "p")
    assert tree_digest(tmp_path / "s") == tree_digest(tmp_path / "p")


def test_overrides_and_settings():
    row = builtin_matrix().row(1)
    art = run_experiment(row, {"handshake_s": 0.0}, 5, RunSettings(e_star_ws=E_STAR_WS))
    assert min(x for x in art.ttr_samples if x is not None) >= 702.0 - 1e-9


# -- CLI --------------------------------------------------------------------------

def test_cli_run_and_report(tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["run", "--reps", "2", "--seed", "7", "--out", str(out)]) == 0
    for name in ("ttr.csv", "utilization.csv", "es_power_bins.csv", "runs.csv", "summary.csv",
                 "matrix.csv", "config.toml", "runs/exp12_rep0/es_trace.csv",
                 "figures/utilization_bands.svg"):
        assert (out / name).exists(), name
    with open(out / "summary.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 12
    assert cli.main(["report", "--in", str(out), "--out", str(tmp_path / "fig")]) == 0
    assert (tmp_path / "fig" / "ttr_cdf_fcc.svg").exists()


def test_cli_matrix_file(tmp_path):
    m = tmp_path / "m.csv"
    m.write_text("exp_id,evs,fcc,scc,strategy\n1,4,1,1,SHRD\n")
    assert cli.main(["run", "--matrix", str(m), "--reps", "1", "--out", str(tmp_path / "o"),
                     "--no-plots"]) == 0
    assert (tmp_path / "o" / "runs" / "exp01_rep0" / "evs.csv").exists()


def test_cli_missing_price_file(tmp_path, capsys):
    code = cli.main(["run", "--reps", "1", "--out", str(tmp_path / "o"),
                     "--prices", str(tmp_path / "nope.csv")])
    assert code == cli.EXIT_INPUT
    assert "nope.csv" in capsys.readouterr().err


def test_cli_bad_config(tmp_path, capsys):
    p = tmp_path / "c.toml"
    p.write_text("cc_count = 0\n")
    assert cli.main(["show-config", "--config", str(p)]) == cli.EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_cli_show_config(capsys):
    assert cli.main(["show-config", "--horizon", "90000"]) == 0
    text = capsys.readouterr().out
    assert "horizon_s = 90000.0" in text and "es_cap_watts = 1000000.0" in text


def test_cli_validate(tmp_path, capsys):
    out = tmp_path / "v"
    assert cli.main(["validate", "--dt", "1", "--evs", "3", "--columns", "2", "--out", str(out),
                     "--strict"]) == 0
    assert (out / "comparison.csv").exists() and (out / "report.txt").exists()
    assert cli.main(["validate", "--dt", "7", "--evs", "3"]) == cli.EXIT_CONFIG


def test_cli_report_missing_tree(tmp_path, capsys):
    assert cli.main(["report", "--in", str(tmp_path), "--out", str(tmp_path / "f")]) == cli.EXIT_INPUT


def test_cli_overlay(tmp_path):
    from evcharge.signals import TimeSeries, write_series

    write_series(TimeSeries((0.0, 43200.0), (0.3, 0.2)), tmp_path / "price.csv")
    write_series(TimeSeries((0.0, 21600.0, 64800.0), (0.0, 4e5, 0.0)), tmp_path / "pv.csv")
    out = tmp_path / "o"
    assert cli.main(["run", "--reps", "1", "--out", str(out), "--prices", str(tmp_path / "price.csv"),
                     "--pv", str(tmp_path / "pv.csv"), "--overlay-exp", "9"]) == 0
    assert (out / "figures" / "grid_pv_price.svg").exists()
    with open(out / "runs" / "exp01_rep0" / "evs.csv") as fh:
        assert all(float(r["cost"]) > 0 for r in csv.DictReader(fh))
    assert cli.main(["report", "--in", str(out), "--out", str(tmp_path / "f"),
                     "--pv", str(tmp_path / "pv.csv")]) == cli.EXIT_CONFIG
