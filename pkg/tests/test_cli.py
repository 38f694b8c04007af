import subprocess
import sys

import numpy as np

from qsdlab.cli import main
from qsdlab.spectral import read_result


def test_stationary_to_file(tmp_path):
    out = tmp_path / "rho.csv"
    assert main(["stationary", "--map", "doubling", "--sigma", "0.05", "--delta", "0", "--n", "4096",
                 "-o", str(out)]) == 0
    res = read_result(out)
    assert res.eigenvalue == 1.0 and np.abs(res.density.values - 1).max() < 1e-8


def test_qsd_to_stdout(capsys):
    assert main(["qsd", "--map", "doubling", "--sigma", "0.02", "--delta", "0.01", "--n", "4096"]) == 0
    text = capsys.readouterr().out
    assert text.startswith("#") and "cell_center,density" in text


def test_gap(capsys, tmp_path):
    assert main(["gap", "--map", "tent-e2", "--sigma", "0.02", "--delta", "0.01"]) == 0
    cap = capsys.readouterr()
    assert "k=4 cap=4 cap_hit=yes" in cap.err
    assert cap.out.splitlines()[0] == "step,interval_lo,interval_hi"
    assert main(["gap", "--map", "doubling-p3", "--sigma", "0.003", "--delta", "0.005",
                 "-o", str(tmp_path / "g.csv")]) == 0
    assert "k=3" in capsys.readouterr().err


def test_lyapunov(capsys):
    assert main(["lyapunov", "--map", "doubling", "--sigma", "0.05", "--delta", "0", "--n", "4096"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "map,sigma,delta,n,xi,xi_finite,r"
    assert abs(float(lines[1].split(",")[4]) - np.log(2)) < 1e-12


def test_sweep_from_config(tmp_path):
    cfg = tmp_path / "plan.toml"
    out = tmp_path / "rows.csv"
    cfg.write_text(f'map = "tent-e2"\nsigma = 0.02\ndelta = [0.01, 0.005]\noutput = "{out}"\n')
    assert main(["sweep", "--config", str(cfg)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 3 and lines[0].startswith("map,sigma,delta,n,seed,k")
    assert (tmp_path / "rows.meta.json").exists()


def test_sweep_failed_point_exit_code(tmp_path, capsys):
    # delta=0.45 leaves nothing alive: the conditioned operator is zero
    assert main(["sweep", "--map", "doubling", "--sigma", "0.0", "--delta", "0.45"]) == 2
    assert main(["sweep", "--map", "doubling-e1", "--sigma", "0.05", "--delta", "0.45", "--n", "4096"]) == 3
    capsys.readouterr()


def test_invalid_plan_exit_code(capsys):
    assert main(["stationary", "--map", "doubling", "--sigma", "0.02", "--delta", "0.01", "--n", "256"]) == 2
    assert "invalid plan" in capsys.readouterr().err
    assert main(["qsd", "--map", "nosuchmap", "--sigma", "0.02", "--delta", "0.01"]) == 2
    assert main(["qsd", "--map", "doubling", "--sigma", "0.02", "--delta", "0.01", "--config", "/nonexistent"]) == 2
    assert main(["qsd", "--map", "doubling", "--sigma", "0.02"]) == 2


def test_single_point_commands_reject_sweeps(tmp_path, capsys):
    cfg = tmp_path / "plan.toml"
    cfg.write_text('map = "doubling"\nsigma = [0.02, 0.04]\ndelta = 0.01\n')
    assert main(["qsd", "--config", str(cfg)]) == 2
    assert "exactly one" in capsys.readouterr().err


def test_simulate(tmp_path):
    out = tmp_path / "h.csv"
    assert main(["simulate", "--map", "doubling", "--sigma", "0.05", "--delta", "0", "--n", "4096",
                 "--steps", "100000", "-o", str(out)]) == 0
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    assert data.shape == (4096, 2)
    assert (tmp_path / "h.meta.json").exists()
    out2 = tmp_path / "k.csv"
    assert main(["simulate", "--map", "doubling", "--sigma", "0.02", "--delta", "0.01", "--n", "4096",
                 "--kill", "--ensemble", "500", "--steps", "200", "--burn-in", "50", "-o", str(out2)]) == 0


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "qsdlab.cli", "gap", "--map", "doubling-e1",
                           "--sigma", "0.02", "--delta", "0.01"], capture_output=True, text=True)
    assert proc.returncode == 0 and "k=1" in proc.stderr
