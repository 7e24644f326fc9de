import json
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor

import pytest

from feedbacklab.errors import ParameterError
from feedbacklab.harness import ExperimentConfig, ResultRecord, run_experiment, scenario_seed
from feedbacklab.harness.cli import main
from feedbacklab.harness.config import parse_assignments, thread_count, worker_pool


def test_config_grammar():
    text = ["# comment", "kind = su-sk", "", "n = 20  # trailing", "M = 16", "P = 1.5",
            "flag = TRUE", "name = hello world", "n = 25"]
    d = parse_assignments(text)
    assert d == {"kind": "su-sk", "n": 25, "M": 16, "P": 1.5, "flag": True, "name": "hello world"}
    with pytest.raises(ParameterError, match="line 2"):
        parse_assignments(["kind = x", "oops"])


def test_config_file_and_overrides(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("kind = su-sk\nscenario = a\nn = 20\nM = 16\nP = 1\ntrials = 50\n")
    cfg = ExperimentConfig.from_file(p, ["trials = 80", "seed=3"])
    assert cfg.trials == 80 and cfg.seed == 3 and cfg.params == {"n": 20, "M": 16, "P": 1}


@pytest.mark.parametrize("data", [
    {"kind": "su-sk", "n": 20, "M": 16, "P": 1, "trials": 0},
    {"kind": "su-sk", "n": 20, "M": 16},
    {"kind": "nope"},
    {"kind": "su-power-control", "n": 20, "P": 1, "eps": 1.2},
    {"kind": "su-sk", "n": 2.5, "M": 16, "P": 1},
])
def test_config_validation(data):
    with pytest.raises(ParameterError):
        ExperimentConfig.from_mapping(data)


def test_scenario_seeds():
    assert scenario_seed(42, "a") == scenario_seed(42, "a")
    seeds = {scenario_seed(m, s) for m in range(5) for s in "abcde"}
    assert len(seeds) == 25
    assert all(0 <= s < 2 ** 63 for s in seeds)


def test_record_round_trip():
    rec = ResultRecord("s", {"n": 3}, {"big": 10 ** 40, "x": float("inf"), "y": [1.5, float("nan")]},
                       {"ok": True}, 0.25)
    back = ResultRecord.from_json(rec.to_json())
    assert back.metrics["big"] == 10 ** 40 and back.metrics["x"] == float("inf")
    assert back.params == {"n": 3} and back.ok


def _sk_cfg(trials=3000, seed=5):
    return ExperimentConfig.from_mapping({"kind": "su-sk", "scenario": "det", "n": 15, "M": 64, "P": 1.0,
                                          "trials": trials, "seed": seed})


def test_run_is_deterministic_across_thread_counts():
    a = run_experiment(_sk_cfg(9000), executor=None)
    with ThreadPoolExecutor(4) as pool:
        b = run_experiment(_sk_cfg(9000), executor=pool)
    assert a.metrics == b.metrics
    c = run_experiment(_sk_cfg(9000, seed=6))
    assert c.metrics["error"] != a.metrics["error"] or c.metrics["power"] != a.metrics["power"]


def test_thread_env_cap(monkeypatch):
    monkeypatch.setenv("FEEDBACKLAB_THREADS", "1")
    assert thread_count() == 1
    with worker_pool() as pool:
        assert pool is None
    monkeypatch.setenv("FEEDBACKLAB_THREADS", "x")
    with pytest.raises(ParameterError):
        thread_count()


def test_power_control_record_fields():
    cfg = ExperimentConfig.from_mapping({"kind": "su-power-control", "n": 200, "P": 1.0, "eps": 0.1,
                                         "inner": "stub", "trials": 2000, "seed": 1})
    rec = run_experiment(cfg)
    for key in ("error", "power", "m_total", "m_bar", "error_bound", "power_bound"):
        assert key in rec.metrics
    assert rec.metrics["error_bound"] == pytest.approx(0.1)
    assert rec.ok


def test_errors_name_the_scenario():
    cfg = ExperimentConfig.from_mapping({"kind": "mac-ozarow", "scenario": "tiny", "n": 5, "P1": 1,
                                         "P2": 1, "eps": 0.1, "trials": 10})
    with pytest.raises(ParameterError, match="tiny"):
        run_experiment(cfg)


def test_cli_capacity(capsys):
    assert main(["capacity", "--snr", "1"]) == 0
    assert capsys.readouterr().out == "0.346574\ndispersion 0.375000\n"
    assert main(["capacity", "--snr", "1", "--json"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["capacity"] == pytest.approx(0.34657359)


def test_cli_region(tmp_path, capsys):
    out = tmp_path / "r.csv"
    assert main(["region-mac", "--p1", "1", "--p2", "1", "--eps", "0.1", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 1003


def test_cli_region_json(capsys):
    assert main(["region-mac", "--p1", "1", "--p2", "1", "--eps", "0.1", "--grid", "11", "--json"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["rows"] == 12 and d["rho_star"] == pytest.approx(0.33096926292276127)


def test_cli_usage_errors(capsys):
    with pytest.raises(SystemExit) as e:
        main(["bogus"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["capacity"])
    assert e.value.code == 2
    assert main(["simulate-su", "--n", "20", "--M", "16", "--P", "1", "--trials", "0"]) == 2
    assert "trials" in capsys.readouterr().err


def test_cli_simulate_su(tmp_path, capsys):
    out, tr = tmp_path / "r.json", tmp_path / "t.csv"
    code = main(["simulate-su", "--n", "15", "--M", "64", "--P", "1", "--trials", "2000", "--seed", "1",
                 "--out", str(out), "--transcripts", str(tr), "--transcript-count", "3", "--json"])
    d = json.loads(capsys.readouterr().out)
    assert code == 0 and d["passed"]["error_matches_analytic"]
    assert ResultRecord.from_json(out.read_text()).metrics == ResultRecord.from_json(json.dumps(d)).metrics
    rows = tr.read_text().splitlines()
    assert rows[0] == "trial,k,x1,x2,z,y" and len(rows) == 1 + 3 * 15


def test_cli_config_file(tmp_path, capsys):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("scenario = from-file\nn = 15\nM = 64\nP = 1\ntrials = 500\n")
    assert main(["simulate-su", "--config", str(cfg), "--set", "trials=700", "--json"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["scenario"] == "from-file" and d["params"]["trials"] == 700


def test_cli_simulate_mac(capsys):
    code = main(["simulate-mac", "--n", "60", "--p1", "1", "--p2", "1", "--eps", "0.3", "--M1", "64",
                 "--M2", "64", "--trials", "3000", "--seed", "2", "--json"])
    d = json.loads(capsys.readouterr().out)
    assert code == 0 and d["metrics"]["M1"] == 64
    assert set(d["passed"]) == {"abort_rate", "error_within_target", "power1", "power2"}


def test_cli_bounds_su(tmp_path, capsys):
    out = tmp_path / "b.csv"
    assert main(["bounds-su", "--P", "1", "--eps", "0.1", "--ns", "1000,100000", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("n,lower,upper") and len(lines) == 3
    assert "eps-capacity" in capsys.readouterr().out


def test_cli_accept_single_criterion(capsys):
    assert main(["accept", "--only", "1", "--json"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["passed"] and len(d["criteria"]) == 1


def test_console_script_module():
    r = subprocess.run([sys.executable, "-m", "feedbacklab.harness.cli", "capacity", "--snr", "3"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("0.693147")
