import json
import subprocess
import sys

import numpy as np
import pytest

from shocklab.cli import main

from conftest import logistic_exact


def _json_line(capsys):
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


def test_wavetrain_continuous(tmp_path, capsys):
    assert main(["wavetrain", "--flux", "linear_2my", "--model", "continuous", "--out", str(tmp_path)]) == 0
    data = np.loadtxt(tmp_path / "profile.csv", delimiter=",", skiprows=1)
    assert np.max(np.abs(data[:, 1] - logistic_exact(data[:, 0]))) < 1e-6
    assert _json_line(capsys)["C"] == pytest.approx(1.5)
    assert json.loads((tmp_path / "profile.json").read_text())["model"] == "continuous"


def test_wavetrain_unit_flux_exit_2(tmp_path):
    assert main(["wavetrain", "--flux", "unit", "--out", str(tmp_path)]) == 2


def test_unknown_flag(capsys):
    assert main(["wavetrain", "--bogus"]) == 2
    assert "usage" in capsys.readouterr().err


def test_no_command():
    assert main([]) == 2


def test_kernel_check(tmp_path, capsys):
    assert main(["kernel-check", "--t-max", "400", "--out", str(tmp_path)]) == 0
    assert _json_line(capsys)["violations"] == 0
    rep = json.loads((tmp_path / "kernel_report.json").read_text())
    assert rep["violations"] == []


def test_simulate_lattice_and_shift_fit(tmp_path, capsys):
    cfg = {"flux": "degenerate_quadratic", "t_end": 100.0,
           "snapshots": [float(t) for t in np.geomspace(10, 100, 61)], "initial": {"kind": "step"}}
    (tmp_path / "run.json").write_text(json.dumps(cfg))
    run = tmp_path / "run"
    assert main(["simulate-lattice", "--config", str(tmp_path / "run.json"), "--out", str(run)]) == 0
    meta = json.loads((run / "metadata.json").read_text())
    assert meta["monotone_ok"] and meta["bounded_ok"]
    fit_dir = tmp_path / "fit"
    assert main(["shift-fit", "--snapshots", str(run / "snapshots.csv"), "--out", str(fit_dir)]) == 0
    out = _json_line(capsys)
    assert out["Gamma0"] == pytest.approx(1.0, abs=1e-9)
    assert (fit_dir / "trace.csv").exists() and (fit_dir / "fit.json").exists()


def test_simulate_lattice_deterministic(tmp_path):
    args = ["simulate-lattice", "--flux", "linear_2my", "--t-end", "20", "--snapshots", "5", "20"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "snapshots.csv").read_bytes() == (tmp_path / "b" / "snapshots.csv").read_bytes()


def test_missing_config(tmp_path):
    assert main(["simulate-lattice", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2


def test_simulate_pde(tmp_path):
    assert main(["simulate-pde", "--flux", "linear_2my", "--t-end", "2", "--dx", "0.1", "--out", str(tmp_path)]) == 0
    meta = json.loads((tmp_path / "metadata.json").read_text())
    assert meta["bounded_ok"]


def test_subsolution_check(tmp_path, capsys):
    assert main(["subsolution-check", "--out", str(tmp_path)]) == 0
    assert _json_line(capsys)["failed"] == []


def test_subsolution_check_nondegenerate(tmp_path):
    assert main(["subsolution-check", "--flux", "linear_2my", "--out", str(tmp_path)]) == 2


def test_gronwall(tmp_path, capsys):
    assert main(["gronwall", "--out", str(tmp_path)]) == 0
    out = _json_line(capsys)
    assert out["A1"] == pytest.approx(4.0 / 3.0)
    assert out["bound_ok"] and out["A_psi_stable"]


def test_reproduce(tmp_path, capsys):
    assert main(["reproduce", "AC-1", "--out", str(tmp_path)]) == 0
    text = capsys.readouterr().out
    assert "AC-1 PASS" in text and "logistic" in text
    assert main(["reproduce", "nonexistent", "--out", str(tmp_path)]) == 2


def test_console_script(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "shocklab.cli", "wavetrain", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["C"] == pytest.approx(1 / np.log(2))


def test_apriori_check(tmp_path, capsys):
    run = tmp_path / "run"
    assert main(["simulate-lattice", "--flux", "degenerate_quadratic", "--t-end", "400",
                 "--snapshots", "100", "200", "400", "--out", str(run)]) == 0
    capsys.readouterr()
    code = main(["apriori-check", "--snapshots", str(run / "snapshots.csv"), "--field", "F-beta",
                 "--trend-tol", "1.0", "--out", str(tmp_path / "ap")])
    out = _json_line(capsys)
    assert code == (0 if out["ok"] else 1)
    assert (tmp_path / "ap" / "apriori_report.json").exists()
    assert main(["apriori-check", "--snapshots", str(run / "snapshots.csv"), "--mode", "flat",
                 "--flux", "degenerate_quadratic", "--out", str(tmp_path / "ap2")]) == 2
