import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proofgames.cli import ConfigError, MetricsRow, main, read_metrics, write_metrics


def _config(tmp_path, **doc):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return str(path)


def test_metrics_header_only(tmp_path):
    path = tmp_path / "m.csv"
    write_metrics([], path)
    assert path.read_text() == "run_id,protocol,metric,value,step,seed\n"
    assert read_metrics(path) == []


def test_metrics_rows_are_additive(tmp_path):
    path = tmp_path / "m.csv"
    write_metrics([MetricsRow("r", "nip", "accuracy", 0.5, 0, 1)], path)
    write_metrics([MetricsRow("r", "nip", "accuracy", 0.75, 1, 1)], path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("run_id") and len(lines) == 3
    assert [r.value for r in read_metrics(path)] == [0.5, 0.75]


@settings(max_examples=50, deadline=None)
@given(st.floats(allow_nan=False, allow_infinity=False, width=64))
def test_metric_values_roundtrip(tmp_path_factory, value):
    path = tmp_path_factory.mktemp("m") / "m.csv"
    write_metrics([MetricsRow("r", "adp", "eps_s", value, 3, 0)], path)
    assert read_metrics(path)[0].value == value


def test_unregistered_metric_rejected():
    with pytest.raises(ConfigError):
        MetricsRow("r", "nip", "loss", 0.1, 0, 0)


def test_unknown_subcommand_exits_2(capsys):
    assert main(["frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err


def test_missing_seed_exits_2(tmp_path, capsys):
    assert main(["solve", "--out", str(tmp_path)]) == 2
    assert "seed" in capsys.readouterr().err


def test_unknown_config_field_exits_2(tmp_path):
    cfg = _config(tmp_path, seed=0, colour="blue")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_unwritable_output_exits_3(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["gen-data", "--seed", "0", "--out", str(blocker / "sub")]) == 3


def test_reproduce_prints_table_and_reports_failure(tmp_path, capsys):
    code = main(["reproduce-counterexample", "--seed", "0", "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert "eps_s" in out and "PASS" in out
    rep = json.loads((tmp_path / "report.json").read_text())
    assert code == (0 if all(c["passed"] for c in rep["checks"]) else 1)
    assert {r.metric for r in read_metrics(tmp_path / "metrics.csv")} == {"eps_c", "eps_s"}


def test_small_gen_data(tmp_path):
    cfg = _config(tmp_path, seed=3, dataset={"total_count": 40})
    assert main(["gen-data", "--config", cfg, "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["observed"]["non_isomorphic"] == rep["targets"]["non_isomorphic"] == 20
    assert rep["observed"]["train"] == 32
    assert len((tmp_path / "dataset.jsonl").read_text().splitlines()) == 40


def test_train_and_report(tmp_path, capsys):
    cfg = _config(tmp_path, seed=1, source="toy", protocol="zk-nip", steps=5, rate_p=0.3, rate_v=1.0,
                  checkpoint_every=5)
    run = tmp_path / "run"
    assert main(["train", "--config", cfg, "--out", str(run)]) == 0
    metrics = {r.metric for r in read_metrics(run / "metrics.csv")}
    assert {"accuracy", "zk_tv", "eps_c", "eps_s", "worst_case_fail_rate"} <= metrics
    assert (run / "snapshots" / "5.json").exists() and (run / "snapshots" / "final.json").exists()
    summary = tmp_path / "summary"
    assert main(["report", "--seed", "0", "--out", str(summary), str(run)]) == 0
    rep = json.loads((summary / "report.json").read_text())
    assert rep["protocols"]["zk-nip"]["accuracy"]["runs"] == 1


def test_train_rejects_unsupported_toy_protocol(tmp_path):
    cfg = _config(tmp_path, seed=1, source="toy", protocol="debate")
    assert main(["train", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_rerun_is_byte_identical(tmp_path):
    cfg = _config(tmp_path, seed=2, source="toy", protocol="solo", method="expert-iteration", steps=2,
                  rollouts=200)
    for d in ("a", "b"):
        assert main(["train", "--config", cfg, "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
