import csv
import json
import math
import shutil
import subprocess
import sys

import numpy as np
import pytest

from fractalwave import cli
from fractalwave.errors import NumericalError


def run(tmp_path, *argv):
    return cli.main([*argv, "--out", str(tmp_path)])


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_spectrum_interval(tmp_path):
    assert run(tmp_path, "spectrum", "--preset", "interval", "--level", "10", "--b", "D", "--modes", "5") == 0
    lam = [float(r["lambda"]) for r in rows(tmp_path / "spectrum.csv")]
    assert len(lam) == 5
    assert lam[0] == pytest.approx(math.pi**2, rel=0.01)
    summary = json.loads((tmp_path / "spectrum.json").read_text())
    assert summary["b"] == "D" and summary["K"] == 5


def test_spectrum_eigenvectors(tmp_path):
    assert run(tmp_path, "spectrum", "--preset", "gasket", "--level", "2", "--b", "D", "--eigenvectors") == 0
    data = rows(tmp_path / "eigenvectors.csv")
    assert len(data) == 15
    assert data[0]["vertex_id"] == "p1" and float(data[0]["phi_1"]) == 0.0
    summary = json.loads((tmp_path / "spectrum.json").read_text())
    assert "weyl" in summary


def test_validate_gasket(tmp_path, capsys):
    assert run(tmp_path, "validate", "--preset", "gasket") == 0
    rep = json.loads((tmp_path / "validate.json").read_text())
    assert rep["harmonic_residual"] < 1e-10
    assert rep["d_H"] == pytest.approx(math.log(3) / math.log(5 / 3))
    assert "Schur residual" in capsys.readouterr().out


def test_validate_bad_renormalization(tmp_path, gasket):
    data = gasket.to_dict()
    data["harmonic"]["r"] = [0.5, 0.5, 0.5]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    assert run(tmp_path, "validate", "--fractal", str(path)) == 1


def test_simulate_is_bitwise_reproducible(tmp_path):
    args = ["simulate", "--preset", "interval", "--level", "8", "--b", "D", "--beta", "1", "--modes", "200", "--seed", "7", "--t-end", "2"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, *args) == 0
    assert run(b, *args) == 0
    assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()
    data = rows(a / "trajectory.csv")
    assert set(data[0]) == {"t", "vertex_id", "u"}
    ends = [float(r["u"]) for r in data if r["vertex_id"] in ("0", "1")]
    assert ends and all(u == 0.0 for u in ends)
    meta = json.loads((a / "simulate.json").read_text())
    assert meta["seed"] == 7 and meta["K"] == 200


def test_simulate_seed_changes_output(tmp_path):
    base = ["simulate", "--preset", "interval", "--level", "4", "--b", "D", "--t-end", "1"]
    run(tmp_path / "a", *base, "--seed", "1")
    run(tmp_path / "b", *base, "--seed", "2")
    assert (tmp_path / "a" / "trajectory.csv").read_text() != (tmp_path / "b" / "trajectory.csv").read_text()


def test_kernel_table(tmp_path):
    assert run(tmp_path, "kernel", "--beta", "1", "--lam", "1,4", "--times", "0,1") == 0
    data = rows(tmp_path / "kernel.csv")
    assert len(data) == 4
    first = data[1]
    assert float(first["lambda"]) == 1.0 and float(first["t"]) == 1.0
    assert float(first["V"]) == pytest.approx(math.exp(-1), rel=1e-14)


def test_variogram_commands(tmp_path):
    assert run(tmp_path, "variogram", "--preset", "interval", "--level", "10", "--b", "D", "--kind", "l2", "--lags", "4e-3,8e-3,1.6e-2,3.2e-2") == 0
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert fit["slope"] == pytest.approx(1.0, abs=0.1)
    assert fit["kind"] == "l2"
    assert run(tmp_path, "variogram", "--preset", "gasket", "--level", "4", "--b", "D", "--kind", "spatial") == 0
    assert len(rows(tmp_path / "variogram.csv")) == 9
    assert run(tmp_path, "variogram", "--preset", "gasket", "--level", "5", "--b", "D", "--kind", "temporal", "--method", "lanczos", "--steps", "200", "--vertex", "1:p2") == 0
    assert json.loads((tmp_path / "fit.json").read_text())["meta"]["method"] == "lanczos(200)"


def test_equilibrium_command(tmp_path, capsys):
    assert run(tmp_path, "equilibrium", "--preset", "interval", "--level", "9", "--b", "D", "--modes", "200", "--beta", "1") == 0
    rep = json.loads((tmp_path / "equilibrium.json").read_text())
    assert rep["total"] == pytest.approx(1 / 24, rel=0.01)
    assert len(rows(tmp_path / "equilibrium.csv")) == 200
    assert run(tmp_path, "equilibrium", "--preset", "interval", "--level", "6", "--b", "N", "--beta", "0.5") == 0
    assert "zero mode excluded" in capsys.readouterr().out


def test_equilibrium_without_damping(tmp_path, capsys):
    assert run(tmp_path, "equilibrium", "--preset", "interval", "--level", "4", "--beta", "0") == 1
    assert "no stationary law" in capsys.readouterr().err


def test_report_subset(tmp_path):
    assert run(tmp_path, "report", "--criteria", "5,13") == 0
    text = (tmp_path / "report.txt").read_text()
    assert "[PASS] criterion  5" in text and "2/2 criteria passed" in text
    assert run(tmp_path, "report", "--criteria", "99") == 1


def test_report_failure_exit_code(tmp_path, monkeypatch):
    from fractalwave import acceptance

    failing = acceptance.CriterionResult(5, "stub", False, "forced", {}, 0.0)
    monkeypatch.setattr(acceptance, "run_all", lambda *a, **k: [failing])
    assert run(tmp_path, "report", "--criteria", "5") == 1
    assert "[FAIL]" in (tmp_path / "report.txt").read_text()


# --- configuration and errors --------------------------------------------------------


def test_config_and_flag_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"preset": "interval", "level": 10, "b": "D", "modes": 3}))
    assert run(tmp_path, "spectrum", "--config", str(cfg), "--modes", "4") == 0
    assert len(rows(tmp_path / "spectrum.csv")) == 4


def test_config_errors_point_at_line(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{\n  "preset": "interval",\n  "levle": 3\n}\n')
    assert run(tmp_path, "spectrum", "--config", str(cfg)) == 1
    err = capsys.readouterr().err
    assert "levle" in err and f"{cfg}:3" in err
    cfg.write_text('{\n  "preset": "interval",\n  "level": "three"\n}\n')
    assert run(tmp_path, "spectrum", "--config", str(cfg)) == 1
    assert f"{cfg}:3" in capsys.readouterr().err
    cfg.write_text('{\n  "preset": "interval",\n  "level": 3,\n}\n')
    assert run(tmp_path, "spectrum", "--config", str(cfg)) == 1
    assert f"{cfg}:4" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["spectrum", "--preset", "torus"],
        ["spectrum", "--preset", "interval", "--level", "-1"],
        ["spectrum", "--preset", "interval", "--b", "{p9}"],
        ["spectrum", "--preset", "interval", "--level", "3", "--modes", "100"],
        ["simulate", "--preset", "interval", "--method", "lanczos"],
        ["kernel", "--lam", "-1"],
        ["variogram", "--preset", "interval", "--level", "4", "--kind", "temporal", "--vertex", "9:1"],
        ["spectrum"],
    ],
)
def test_validation_errors_exit_1(tmp_path, argv):
    assert run(tmp_path, *argv) == 1


def test_numerical_failure_exit_2(tmp_path, monkeypatch, capsys):
    def boom(cfg):
        raise NumericalError("covariance lost definiteness")

    monkeypatch.setitem(cli.COMMANDS, "kernel", (boom, "stub"))
    assert run(tmp_path, "kernel") == 2
    assert "numerical failure" in capsys.readouterr().err


def test_output_directory_from_environment(tmp_path, monkeypatch):
    target = tmp_path / "env-out"
    monkeypatch.setenv(cli.OUT_ENV, str(target))
    assert cli.main(["kernel", "--lam", "1", "--times", "0,1"]) == 0
    assert (target / "kernel.csv").exists()


def test_console_entry_point(tmp_path):
    exe = shutil.which("fractalwave")
    cmd = [exe] if exe else [sys.executable, "-m", "fractalwave.cli"]
    res = subprocess.run([*cmd, "kernel", "--lam", "1", "--times", "0,0.5", "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    vals = np.loadtxt(tmp_path / "kernel.csv", delimiter=",", skiprows=1)
    assert vals.shape == (2, 5)
