import json
import math
from pathlib import Path

import numpy as np
import pytest

from qsoc.cli import main
from qsoc.config import SUITE_ORDER, load_config, parse_config
from qsoc.errors import ConfigError
from qsoc.report import canonical_json, flatten_metrics, format_number, render_csv


def base_config(**overrides):
    cfg = {
        "problem": {"name": "lq", "m": 1},
        "grid": {"t0": 0.0, "T": 1.0, "N": 3},
        "suites": ["isometry", "gradient"],
        "tolerances": {"isometry": {"probes": 30}},
        "seed": 11,
        "emit": ["json", "csv"],
    }
    cfg.update(overrides)
    return cfg


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def test_parse_config_defaults():
    cfg = parse_config(base_config())
    assert cfg.problem.name == "lq"
    assert cfg.n_steps == 3
    assert cfg.suites == ["isometry", "gradient"]
    assert cfg.seed == 11


def test_parse_config_suite_order_canonical():
    cfg = parse_config(base_config(suites=["optimize", "algebra", "theorem"]))
    assert cfg.suites == [s for s in SUITE_ORDER if s in ("algebra", "theorem", "optimize")]


def test_parse_config_error_paths():
    bad = base_config()
    bad["problem"]["name"] = "wat"
    bad["grid"]["N"] = 0
    bad["suites"] = ["nope"]
    bad["typo"] = 1
    with pytest.raises(ConfigError) as err:
        parse_config(bad)
    paths = {p for p, _ in err.value.errors}
    assert "problem.name" in paths
    assert "grid.N" in paths
    assert "suites" in paths
    assert "typo" in paths


def test_parse_config_capacity():
    with pytest.raises(ConfigError) as err:
        parse_config(base_config(grid={"t0": 0.0, "T": 1.0, "N": 20}))
    assert any(p == "grid.N" for p, _ in err.value.errors)


def test_parse_config_element_shape_errors():
    bad = base_config()
    bad["problem"]["elements"] = {"b": [[[0, 1.0]]]}
    with pytest.raises(ConfigError) as err:
        parse_config(bad)
    assert any("problem.elements.b[0]" in p for p, _ in err.value.errors)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.json")


def test_free_problem_rejects_dynamics_fields():
    bad = base_config()
    bad["problem"] = {"name": "free", "rates": {"a": 0.5, "r": 0.3}}
    with pytest.raises(ConfigError) as err:
        parse_config(bad)
    assert any(p == "problem.rates.a" for p, _ in err.value.errors)
    ok = base_config()
    ok["problem"] = {"name": "free", "rates": {"r": 0.3}}
    cfg = parse_config(ok)
    assert cfg.problem.r == 0.3


def test_format_number_17_digits_roundtrip():
    vals = [1 / 3, math.pi, 1e-300, -2.5e17, 0.1]
    for v in vals:
        assert float(format_number(v)) == v
    assert format_number(3) == "3"
    assert format_number(True) == "true"


def test_canonical_json_structure():
    doc = {"a": [1, 2.5], "b": {"c": None, "d": "x"}}
    text = canonical_json(doc)
    assert json.loads(text) == {"a": [1, 2.5], "b": {"c": None, "d": "x"}}


def test_flatten_metrics_handles_nesting():
    rows = flatten_metrics({"a": {"b": 1.5}, "c": [1, 2], "d": "s"})
    assert ("a.b", 1.5) in rows
    assert ("c[0]", 1) in rows and ("c[1]", 2) in rows
    assert ("d", "s") in rows


def test_validate_subcommand(tmp_path, capsys):
    path = write_config(tmp_path, base_config())
    assert main(["validate", "--config", str(path)]) == 0
    out = capsys.readouterr().out
    assert "config ok" in out


def test_validate_bad_config_exit_2(tmp_path, capsys):
    path = write_config(tmp_path, base_config(grid={"t0": 0.0, "T": 1.0, "N": 20}))
    assert main(["validate", "--config", str(path)]) == 2
    err = capsys.readouterr().err
    assert "grid.N" in err


def test_run_writes_reports_and_passes(tmp_path, capsys):
    path = write_config(tmp_path, base_config())
    out = tmp_path / "out"
    assert main(["run", "--config", str(path), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["verdict"] == "pass"
    assert [s["name"] for s in report["suites"]] == ["isometry", "gradient"]
    assert (out / "report.csv").exists()
    assert (out / "timings.txt").exists()


def test_run_suite_filter(tmp_path):
    path = write_config(tmp_path, base_config())
    out = tmp_path / "out"
    assert main(["run", "--config", str(path), "--out", str(out),
                 "--suite", "isometry"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert [s["name"] for s in report["suites"]] == ["isometry"]


def test_theorem_report_carries_fo_s_table(tmp_path):
    cfg = base_config(suites=["theorem"],
                      tolerances={"theorem": {"grid_points": 3}})
    path = write_config(tmp_path, cfg)
    out = tmp_path / "out"
    assert main(["run", "--config", str(path), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    table = report["suites"][0]["metrics"]["fo_s_table"]
    assert len(table) == 3 ** 3
    assert all(len(row) == 2 for row in table)


def test_run_plotdata_files(tmp_path):
    cfg = base_config(suites=["orders", "optimize"], emit=["json", "plotdata"])
    path = write_config(tmp_path, cfg)
    out = tmp_path / "out"
    assert main(["run", "--config", str(path), "--out", str(out)]) == 0
    sweep = (out / "orders_sweep.txt").read_text().strip().splitlines()
    assert len(sweep) >= 4 and all(len(row.split()) == 4 for row in sweep)
    trace = (out / "optimize_trace.txt").read_text().strip().splitlines()
    assert all(len(row.split()) == 2 for row in trace)
    assert not (out / "report.csv").exists()  # csv not requested


def test_run_deterministic_across_threads(tmp_path):
    path = write_config(tmp_path, base_config(emit=["json", "csv"]))
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["run", "--config", str(path), "--out", str(out1), "--threads", "1"]) == 0
    assert main(["run", "--config", str(path), "--out", str(out2), "--threads", "8"]) == 0
    assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()
    assert (out1 / "report.csv").read_bytes() == (out2 / "report.csv").read_bytes()


def test_run_seed_changes_numbers(tmp_path):
    path = write_config(tmp_path, base_config())
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    assert main(["run", "--config", str(path), "--out", str(out1)]) == 0
    assert main(["run", "--config", str(path), "--out", str(out2), "--seed", "99"]) == 0
    r1 = json.loads((out1 / "report.json").read_text())
    r2 = json.loads((out2 / "report.json").read_text())
    m1 = r1["suites"][0]["metrics"]["isometry_residual"]
    m2 = r2["suites"][0]["metrics"]["isometry_residual"]
    assert m1 != m2  # different probe draws
    assert r1["verdict"] == r2["verdict"] == "pass"


def test_csv_and_json_carry_identical_numbers(tmp_path):
    path = write_config(tmp_path, base_config())
    out = tmp_path / "out"
    assert main(["run", "--config", str(path), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    csv_rows = {}
    lines = (out / "report.csv").read_text().strip().splitlines()[1:]
    for line in lines:
        suite, metric, value = line.split(",", 2)
        csv_rows[(suite, metric)] = value
    for suite in report["suites"]:
        assert csv_rows[(suite["name"], "status")] == suite["status"]
        for key, val in flatten_metrics(suite["metrics"]):
            got = csv_rows[(suite["name"], key)]
            if isinstance(val, bool):
                assert got == ("true" if val else "false")
            elif isinstance(val, (int, float)):
                assert float(got) == float(val)
            elif val is None:
                assert got == ""
            else:
                assert got == str(val)


def test_invalid_config_exit_code_and_no_partial_report(tmp_path, capsys):
    cfg = base_config(grid={"t0": 0.0, "T": 1.0, "N": 20})
    path = write_config(tmp_path, cfg)
    out = tmp_path / "out"
    assert main(["run", "--config", str(path), "--out", str(out)]) == 2
    assert not out.exists()


def test_threads_env_fallback(tmp_path, monkeypatch):
    path = write_config(tmp_path, base_config())
    out = tmp_path / "env_out"
    monkeypatch.setenv("QSOC_THREADS", "4")
    assert main(["run", "--config", str(path), "--out", str(out)]) == 0
    monkeypatch.setenv("QSOC_THREADS", "zero")
    assert main(["run", "--config", str(path), "--out", str(tmp_path / 'x')]) == 2


def test_failing_suite_exit_code(tmp_path):
    # impossible tolerance forces a failure verdict
    cfg = base_config(tolerances={"isometry": {"probes": 10, "tol": 1e-30}})
    path = write_config(tmp_path, cfg)
    out = tmp_path / "out"
    assert main(["run", "--config", str(path), "--out", str(out)]) == 1
    report = json.loads((out / "report.json").read_text())
    assert report["verdict"] == "fail"


def test_render_csv_verdict_row():
    report = {"suites": [{"name": "x", "status": "pass", "metrics": {"v": 1.0}}],
              "verdict": "pass"}
    text = render_csv(report)
    assert text.splitlines()[-1] == ",verdict,pass"
