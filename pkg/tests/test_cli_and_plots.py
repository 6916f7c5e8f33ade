import json

import pytest

from hetpref import cli
from hetpref.datagen import load_dataset
from hetpref.harness import CSV_COLUMNS, ResultsFormatError
from hetpref.plots import axis_scales, emit_plots


def _write_config(path, **kw):
    cfg = {"version": 1, "experiment": "estimator_comparison", "population": "fig1-analogue",
           "sample_sizes": [300, 600], "replicates": 2, "base_seed": 1, "eval_pairs": 1000}
    cfg.update(kw)
    path.write_text(json.dumps(cfg))
    return path


def test_compare_then_plot(tmp_path, capsys):
    cfg = _write_config(tmp_path / "c.json")
    out = tmp_path / "out"
    assert cli.main(["compare", "--config", str(cfg), "--output", str(out)]) == 0
    assert (out / "results.csv").exists() and (out / "config.json").exists()
    assert cli.main(["plot", "--results", str(out / "results.csv"), "--output", str(tmp_path / "p")]) == 0
    files = sorted(p.name for p in (tmp_path / "p").iterdir())
    assert files == ["angle_vs_n.svg", "disagreement_vs_n.svg"]
    assert (tmp_path / "p" / "angle_vs_n.svg").read_text().lstrip().startswith("<?xml")


def test_rate_prints_slope(tmp_path, capsys):
    cfg = _write_config(tmp_path / "c.json", sample_sizes=[300, 600, 1200], replicates=2)
    assert cli.main(["rate", "--config", str(cfg), "--output", str(tmp_path / "o")]) == 0
    assert "slope" in capsys.readouterr().out


def test_validation_errors_exit_1(tmp_path):
    bad = _write_config(tmp_path / "bad.json", typo=1)
    assert cli.main(["compare", "--config", str(bad)]) == 1
    assert cli.main(["compare", "--config", str(tmp_path / "missing.json")]) == 1
    assert cli.main(["compare"]) == 1
    few = _write_config(tmp_path / "few.json", sample_sizes=[300, 600])
    assert cli.main(["rate", "--config", str(few), "--output", str(tmp_path / "o")]) == 1
    with pytest.raises(SystemExit) as info:
        cli.main(["compare", "--workers", "lots"])
    assert info.value.code == 1


def test_oracle_failure_exits_2(tmp_path):
    cfg = _write_config(tmp_path / "o.json", experiment="oracle_suite",
                        population={"type": "two_type", "alpha": 0.7, "m": 3.0},
                        diffs={"type": "gaussian", "covariance": [[1.0]]})
    assert cli.main(["oracles", "--config", str(cfg), "--output", str(tmp_path / "r")]) == 2
    report = json.loads((tmp_path / "r" / "oracle_report.json").read_text())
    assert not report["passed"]


def test_gen_data(tmp_path):
    assert cli.main(["gen-data", "--preset", "two-type-panel", "--n", "100", "--output", str(tmp_path)]) == 0
    ds = load_dataset(tmp_path / "dataset.jsonl")
    assert ds.n == 100 and ds.users is not None


def test_plot_rejects_empty_csv_without_writing(tmp_path):
    empty = tmp_path / "r.csv"
    empty.write_text("")
    out = tmp_path / "plots"
    with pytest.raises(ResultsFormatError):
        emit_plots(empty, out)
    assert not out.exists()
    assert cli.main(["plot", "--results", str(empty), "--output", str(out)]) == 1


def test_plot_reports_malformed_row(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text(",".join(CSV_COLUMNS) + "\nestimator_comparison,rlhf,100\n")
    with pytest.raises(ResultsFormatError, match="row 2"):
        emit_plots(path, tmp_path / "p")


def test_axis_scales():
    assert axis_scales("rate_sweep") == ("log", "log")
    assert axis_scales("estimator_comparison")[0] == "log"
    assert axis_scales("scale_sweep") == ("linear", "linear")
