import json
import subprocess
import sys

import pytest

from steinfclt.cli import main
from steinfclt.experiments import parse_config, report_json, run_experiment, validate_config
from steinfclt import ConfigError, runs as R


def _write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj, indent=2))
    return str(p)


def _report(d):
    return json.loads((d / "report.json").read_text())


def test_runs_bound_end_to_end(tmp_path):
    cfg = _write(tmp_path, {"kind": "runs", "spec": {"n": 1000, "p": 0.5, "rs": [2, 1]}})
    assert main(["bound", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    res = _report(tmp_path / "o")["results"]
    spec = R.RunsSpec(1000, 0.5, (2, 1))
    assert res["gamma1"] == pytest.approx(R.runs_gamma1(spec))
    assert res["gamma2"] == pytest.approx(R.runs_gamma2(spec))
    assert res["gamma3"] == pytest.approx(R.runs_gamma3(spec))
    assert res["total"] == pytest.approx(R.runs_bound_con(spec).total)


def test_graph_verify_regression_shortcut(tmp_path):
    assert main(["graph", "verify", "--n", "5", "--p", "0.3", "--out", str(tmp_path)]) == 0
    res = _report(tmp_path)["results"]
    assert res["mode"] == "exhaustive" and max(res["residual_A"], res["residual_B"]) <= 1e-12


def test_malformed_json_exit(tmp_path, capsys):
    cfg = _write(tmp_path, '{"kind": "graph",\n "spec": {"n": 5,, "p": 0.3}}')
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_unknown_field_has_line_number(tmp_path, capsys):
    text = '{\n  "kind": "graph",\n  "spec": {"n": 6, "p": 0.3},\n  "bogus": 1\n}'
    assert main(["simulate", "--config", _write(tmp_path, text), "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "bogus" in err and "line 4" in err


def test_schema_errors_are_precise():
    text = '{\n  "kind": "graph",\n  "spec": {"n": 2, "p": 0.3}\n}'
    with pytest.raises(ConfigError) as e:
        validate_config(parse_config(text), text)
    assert "line 3" in str(e.value)
    bad_kind = '{"kind": "nope", "spec": {}}'
    with pytest.raises(ConfigError):
        validate_config(parse_config(bad_kind), bad_kind)


def test_missing_n_outside_rate_study(tmp_path, capsys):
    cfg = _write(tmp_path, {"kind": "graph", "spec": {"p": 0.5}})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "spec.n" in capsys.readouterr().err


def test_action_must_match_subcommand(tmp_path):
    cfg = _write(tmp_path, {"kind": "graph", "action": "simulate", "spec": {"n": 6, "p": 0.3}})
    assert main(["bound", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_verification_failure_exit(tmp_path):
    cfg = _write(tmp_path, {"kind": "graph", "spec": {"n": 10, "p": 0.5}, "reps": 300, "threshold_se": 1e-9})
    assert main(["verify", "--config", cfg, "--out", str(tmp_path)]) == 4


def test_simulate_writes_path(tmp_path):
    assert main(["runs", "simulate", "--n", "20", "--p", "0.5", "--rs", "2,1", "--seed", "3",
                 "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "path.csv").read_text().splitlines()
    assert lines[0] == "t,v1,v2" and len(lines) == 22


def test_rate_study_outputs(tmp_path):
    cfg = _write(tmp_path, {"kind": "graph", "spec": {"p": 0.5}, "ns": [100, 1000, 10000]})
    assert main(["rate", "--config", cfg, "--out", str(tmp_path), "--emit-svg"]) == 0
    assert (tmp_path / "rate.csv").read_text().startswith("series,n,value,se")
    assert (tmp_path / "rate.svg").read_text().lstrip().startswith("<svg")


def test_byte_identical_reports(tmp_path):
    cfg = {"kind": "homsum", "action": "verify-covariance", "spec": {"n": 8, "orders": [1, 2]}, "reps": 1500}
    a = report_json(run_experiment(dict(cfg), seed=9, threads=1).report, include_metadata=False)
    b = report_json(run_experiment(dict(cfg), seed=9, threads=3).report, include_metadata=False)
    assert a == b
    c = report_json(run_experiment(dict(cfg), seed=10, threads=1).report, include_metadata=False)
    assert a != c


def test_module_entry_point(tmp_path):
    cfg = _write(tmp_path, {"kind": "graph", "spec": {"n": 6, "p": 0.3}})
    r = subprocess.run([sys.executable, "-m", "steinfclt", "bound", "--config", cfg, "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert _report(tmp_path)["results"]["prelimit"]["total"] == pytest.approx(23 / 6)


def test_rate_study_seed_coupling():
    cfg = {"kind": "runs", "action": "rate-study", "spec": {"p": 0.5, "rs": [1]}, "ns": [20, 40, 80],
           "empirical": True, "reps": 500}
    a = run_experiment(dict(cfg), seed=4).report["results"]
    assert a == run_experiment(dict(cfg), seed=4).report["results"]
    b = run_experiment(dict(cfg, coupled_seeds=True), seed=4).report["results"]
    assert a["coupled_seeds"] is False and b["coupled_seeds"] is True
    assert a["empirical"] != b["empirical"]
