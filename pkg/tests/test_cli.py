import csv
import json
import subprocess
import sys

import pytest

from trirobust import io
from trirobust.cli import main, parse_chi
from trirobust.golden import capacity_expansion_instance, random_instance
from trirobust.nhemp import toy_case


@pytest.fixture
def toy_file(tmp_path):
    return str(io.save_case(toy_case(), tmp_path / "toy.json"))


@pytest.fixture
def compact_file(tmp_path):
    g = random_instance(4)
    return str(io.save_compact(g.instance, tmp_path / "g4.json", g.x_bounds))


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_parse_chi():
    assert parse_chi("0:0.1:1") == [round(0.1 * k, 12) for k in range(11)]
    assert parse_chi("0.2,0.5") == [0.2, 0.5]


def test_solve_writes_result_layout(tmp_path, toy_file):
    out = tmp_path / "out"
    assert main(["--out", str(out), "solve", toy_file, "--mode", "bccg"]) == 0
    d = out / "toy"
    assert sorted(p.name for p in d.iterdir()) == ["metrics.csv", "solution.json", "trace.csv"]
    with open(d / "trace.csv") as fh:
        assert fh.readline().strip() == "iter,lb,ub,gap,master_s,sp_total_s"
    sol = json.loads((d / "solution.json").read_text())
    assert sol["status"] == "converged" and sol["mode"] == "bccg"
    met = rows(d / "metrics.csv")[0]
    assert float(met["phi"]) == pytest.approx(sol["objective"], rel=1e-7)


def test_metrics_and_die_value_commands(tmp_path, toy_file):
    out = str(tmp_path / "out")
    plan = tmp_path / "plan.json"
    assert main(["--out", out, "diu-plan", toy_file, str(plan)]) == 0
    assert main(["--out", out, "die-value", toy_file, str(plan)]) == 0
    dv = rows(tmp_path / "out" / "toy" / "die_value.csv")[0]
    assert float(dv["v_die"]) >= -1e-6 * abs(float(dv["phi_fixed"]))
    assert main(["--out", out, "solve", toy_file]) == 0
    sol = tmp_path / "out" / "toy" / "solution.json"
    assert main(["--out", out, "metrics", toy_file, str(sol)]) == 0
    assert main(["--out", out, "metrics", toy_file, str(plan)]) == 2


def test_sweep_command(tmp_path, toy_file):
    assert main(["--out", str(tmp_path), "sweep", toy_file, "--chi", "0,1"]) == 0
    sweep = rows(tmp_path / "toy" / "sweep.csv")
    assert [float(r["chi"]) for r in sweep] == [0.0, 1.0]
    assert float(sweep[1]["phi"]) <= float(sweep[0]["phi"]) + 1e-6


def test_verify_compact_instance(tmp_path, compact_file, capsys):
    assert main(["--out", str(tmp_path), "verify", compact_file]) == 0
    assert "verify: ok" in capsys.readouterr().out


def test_input_errors_exit_2(tmp_path, toy_file, compact_file):
    assert main(["solve", str(tmp_path / "nope.json")]) == 2
    assert main(["bogus"]) == 2
    assert main(["--out", str(tmp_path), "sweep", compact_file]) == 2
    assert main(["sweep", toy_file, "--chi", "1:-1:0"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"name": "x"}')
    assert main(["solve", str(bad)]) == 2


def test_iteration_limit_exits_1(tmp_path):
    g = capacity_expansion_instance(0)
    path = io.save_compact(g.instance, tmp_path / "cap.json", g.x_bounds)
    assert main(["--out", str(tmp_path), "solve", str(path), "--mode", "bccg", "--epsilon", "0", "--max-iter", "1"]) == 1
    assert len(rows(tmp_path / "capacity-0" / "trace.csv")) == 1


def test_backend_env_var(tmp_path, compact_file, monkeypatch):
    monkeypatch.setenv("TRIROBUST_MILP_BACKEND", "nonexistent")
    assert main(["--out", str(tmp_path), "solve", compact_file]) == 3
    monkeypatch.setenv("TRIROBUST_MILP_BACKEND", "scipy")
    assert main(["--out", str(tmp_path), "solve", compact_file]) == 0


def test_config_file(tmp_path, compact_file):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"engine": {"mode": "bccg", "epsilon": 0.0}}))
    assert main(["--out", str(tmp_path), "--config", str(cfg), "solve", compact_file]) == 0
    assert json.loads((tmp_path / "golden-4" / "solution.json").read_text())["mode"] == "bccg"
    cfg.write_text(json.dumps({"engine": {"speed": 11}}))
    assert main(["--out", str(tmp_path), "--config", str(cfg), "solve", compact_file]) == 2


def test_module_entry_point(tmp_path, compact_file):
    proc = subprocess.run([sys.executable, "-m", "trirobust", "--out", str(tmp_path), "solve", compact_file],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "converged" in proc.stdout
