import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from qocgpm import cli
from qocgpm.controls import ControlGrid
from qocgpm.gpm import IterationTrace, gpm_run
from qocgpm.integrate import Trajectory
from qocgpm.problems import hadamard_problem


def run(argv):
    return cli.main(argv)


@pytest.fixture(scope="module")
def hadamard_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = run(["run", "--problem", "hadamard", "--case", "1", "--variant", "gpm2", "--out", str(out)])
    return code, out


def test_run_writes_artifacts(hadamard_run):
    code, out = hadamard_run
    assert code == cli.EXIT_OK
    for name in ("trace.csv", "controls.csv", "trajectory.csv", "summary.json"):
        assert (out / name).is_file()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["stop_reason"] == "terminal"
    assert (summary["iterations"], summary["cauchy_count"]) == (14, 29)
    assert summary["config"]["variant"] == "gpm2_fixed"


def test_artifacts_round_trip(hadamard_run):
    _, out = hadamard_run
    trace = IterationTrace.from_csv(out / "trace.csv")
    assert trace.records[-1].cauchy_count == 29
    u = ControlGrid.from_csv(out / "controls.csv")
    spec = hadamard_problem(1)
    assert u.same_layout(spec.initial_control())
    t, states = Trajectory.read_csv(out / "trajectory.csv", (2, 2))
    assert t[0] == 0.0 and t[-1] == pytest.approx(1.5)
    assert np.allclose(states[0], np.eye(2))
    # the exported control reproduces the logged objective
    assert spec.problem.objective(u) == pytest.approx(trace.records[-1].objective, rel=1e-9)


def test_summary_deterministic(tmp_path):
    for d in ("a", "b"):
        assert run(["run", "--problem", "hadamard", "--case", "1", "--out", str(tmp_path / d)]) == 0
    a, b = (json.loads((tmp_path / d / "summary.json").read_text()) for d in ("a", "b"))
    a.pop("wall_time"), b.pop("wall_time")
    assert a == b
    assert (tmp_path / "a" / "trace.csv").read_text() == (tmp_path / "b" / "trace.csv").read_text()


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"problem": "hadamard", "case": 1, "variant": "gpm1",
                               "alpha": 0.2, "max-iter": 3}))
    assert run(["run", "--config", str(cfg), "--alpha", "0.1", "--out", str(tmp_path)]) == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["config"]["alpha"] == 0.1 and s["config"]["max_iterations"] == 3
    assert s["config"]["variant"] == "gpm1_fixed" and s["iterations"] == 3


def test_open_trajectory_columns(tmp_path):
    code = run(["run", "--problem", "whc", "--grid", "60", "--max-iter", "2", "--out", str(tmp_path)])
    assert code == 0
    with open(tmp_path / "trajectory.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "p_0", "p_1", "p_2", "distance", "entropy", "linear_entropy"]
    pops = np.array(rows[1:], dtype=float)[:, 1:4]
    assert np.allclose(pops.sum(axis=1), 1.0, atol=1e-7)


@pytest.mark.parametrize("argv", [
    ["run", "--problem", "nope"],
    ["run", "--problem", "hadamard", "--variant", "gpm7"],
    ["run", "--problem", "cnot", "--case", "5"],
    ["run"],
    ["scan", "--problem", "hadamard", "--alphas", "x"],
    ["run", "--problem", "hadamard", "--config", "/nonexistent.json"],
])
def test_usage_errors(argv, capsys):
    assert run(argv) == cli.EXIT_USAGE
    assert "error" in capsys.readouterr().err


def test_bad_flag_exits_2():
    with pytest.raises(SystemExit) as exc:
        run(["run", "--alpha", "abc"])
    assert exc.value.code == cli.EXIT_USAGE


def test_scan_cell_matches_run_and_sentinel(tmp_path, capsys):
    code = run(["scan", "--problem", "hadamard", "--case", "3", "--alphas", "0.2,0.3",
                "--betas", "0,0.5", "--workers", "1", "--out", str(tmp_path)])
    assert code == 0
    rows = {(r["alpha"], r["beta"]): r for r in cli.read_scan_csv(tmp_path / "scan.csv")}
    assert len(rows) == 4
    assert rows[(0.3, 0.0)]["cauchy_count"] is None and rows[(0.3, 0.0)]["converged"] is False
    spec = hadamard_problem(3)
    _, trace = gpm_run(spec.problem, None, spec.defaults.replace(alpha=0.2, beta=0.5))
    assert rows[(0.2, 0.5)]["cauchy_count"] == trace.cauchy_count
    assert rows[(0.2, 0.0)]["variant"] == "gpm1_fixed"
    table = capsys.readouterr().out
    assert "alpha\\beta" in table and "-" in table


def test_scan_csv_round_trip(tmp_path):
    rows = [{"alpha": 0.1, "beta": 0.0, "variant": "gpm1_fixed", "seed": 7, "converged": True,
             "iterations": 5, "cauchy_count": 11, "stop_reason": "terminal",
             "jitter_ratio": 0.125, "jittery": False},
            {"alpha": 0.3, "beta": 0.0, "variant": "gpm1_fixed", "seed": 8, "converged": False,
             "iterations": cli.SENTINEL, "cauchy_count": cli.SENTINEL, "stop_reason": "max_iterations",
             "jitter_ratio": 0.5, "jittery": True}]
    cli.write_scan_csv(rows, tmp_path / "scan.csv")
    back = cli.read_scan_csv(tmp_path / "scan.csv")
    assert back[0] == rows[0]
    assert back[1]["iterations"] is None and back[1]["jittery"] is True


def test_cell_seed_deterministic():
    assert cli.cell_seed(0, 1, 2) == cli.cell_seed(0, 1, 2)
    assert cli.cell_seed(0, 1, 2) != cli.cell_seed(0, 2, 1)


def test_gradcheck_command(tmp_path, capsys):
    code = run(["gradcheck", "--problem", "hadamard", "--case", "3", "--grid", "100",
                "--trials", "2", "--h", "1e-5", "--out", str(tmp_path)])
    assert code == 0
    data = json.loads((tmp_path / "gradcheck.json").read_text())
    assert data["max_rel_error"]["1e-05"]["coherent"] < 1e-5
    assert "max_rel_error" in capsys.readouterr().out


def test_list_problems(capsys):
    assert run(["list-problems"]) == 0
    assert "hadamard-3" in capsys.readouterr().out


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "qocgpm.cli", "list-problems"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and "qutrit_overlap" in res.stdout
