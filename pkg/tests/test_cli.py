import csv

import pytest

from conftest import small_config
from deepratio.cli import main


def test_run_writes_report(tmp_path, write_config, capsys):
    cfg = write_config(small_config("KLIEP"))
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--seed", "3", "--no-figures"]) == 0
    rows = list(csv.DictReader((out / "report.csv").open()))
    assert len(rows) == 4
    assert '"seed": 3' in (out / "config.resolved").read_text()
    assert "KLIEP" in capsys.readouterr().out


def test_invalid_method_exits_nonzero_without_outputs(tmp_path, write_config, capsys):
    raw = small_config("KLIEP")
    raw["method"] = "NOPE"
    cfg = write_config(raw)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 2
    assert not out.exists()
    assert "method" in capsys.readouterr().err


def test_total_failure_is_nonzero(tmp_path, write_config):
    from deepratio.series import TimeSeriesRecord, write_csv_dataset
    import numpy as np

    write_csv_dataset([TimeSeriesRecord(f"f{i}", np.ones((40, 1)), 20) for i in range(2)], tmp_path / "flat")
    cfg = write_config(small_config("KLIEP", data={"csv": {"path": str(tmp_path / "flat")}},
                                    split={"protocol": "per_series"}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3


def test_sweep_compare_simulate_features(tmp_path, write_config, capsys):
    ddre = write_config(small_config("DDRE-DSKL"), "ddre.json")
    assert main(["sweep-minibatch", "--config", str(ddre), "--out", str(tmp_path / "sw"),
                 "--sizes", "10,40", "--no-figures"]) == 0
    assert len((tmp_path / "sw" / "sweep.csv").read_text().splitlines()) == 7
    a = write_config(small_config("KLIEP"), "a.json")
    b = write_config(small_config("L2CPD"), "b.json")
    assert main(["compare", "--config", str(a), "--config", str(b), "--out", str(tmp_path / "cmp"),
                 "--workers", "1"]) == 0
    assert (tmp_path / "cmp" / "comparison.csv").exists()
    assert main(["simulate", "--config", str(a), "--out", str(tmp_path / "sim")]) == 0
    assert len(list((tmp_path / "sim").glob("*.csv"))) == 4
    assert main(["features", "--config", str(a), "--out", str(tmp_path / "bad")]) == 2
    feats = write_config(small_config("KLIEP", features={"window_length": 16, "hop": 8}), "f.json")
    assert main(["features", "--config", str(feats), "--out", str(tmp_path / "feat")]) == 0
    assert (tmp_path / "feat" / "metadata.json").exists()


def test_compare_needs_two_configs(tmp_path, write_config):
    a = write_config(small_config("KLIEP"))
    assert main(["compare", "--config", str(a), "--out", str(tmp_path / "c")]) == 2


def test_parser_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])
