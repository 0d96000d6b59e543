"""Command-line verbs and exit codes."""

import subprocess
import sys

import numpy as np
import pytest
import yaml

from fdtdmor.cli import main
from fdtdmor.post import ResonanceList
from fdtdmor.scenario import cavity2d, cavity3d, cube_demo, load_scenario


def _write(tmp_path, data, name="s.yaml"):
    data["outputs"]["plots"] = False
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return str(p)


def _small(**kw):
    base = dict(n=15, delta=0.07, steps=1500, order=40, f_max=0.6e9)
    base.update(kw)
    return cavity2d(**base)


def test_run_success(tmp_path, capsys):
    path = _write(tmp_path, _small(s_factor=4.95))
    assert main(["run", path, "-o", str(tmp_path / "out")]) == 0
    out = capsys.readouterr().out
    assert "Case" in out and "resonance 0:" in out
    assert (tmp_path / "out" / "series.csv").exists()


def test_run_config_error_exit_1(tmp_path, capsys):
    data = _small()
    data["grid"]["cellz"] = 3
    path = _write(tmp_path, data)
    assert main(["run", path]) == 1
    assert "grid.cellz" in capsys.readouterr().err


def test_run_missing_file_exit_1(tmp_path):
    assert main(["run", str(tmp_path / "nope.yaml")]) == 1


def test_run_divergence_exit_2(tmp_path, capsys):
    path = _write(tmp_path, cube_demo(s_factor=1.98, directory=str(tmp_path / "out")))
    assert main(["run", path]) == 2
    err = capsys.readouterr().err
    assert "step" in err and "full" in err


def test_batch_run(tmp_path, capsys):
    paths = []
    for i, s in enumerate((0.99, 4.95)):
        data = _small(s_factor=s, steps=600)
        data["name"] = f"b{i}"
        paths.append(_write(tmp_path, data, f"b{i}.yaml"))
    assert main(["run", *paths, "-o", str(tmp_path / "batch"), "-j", "2"]) == 0
    assert (tmp_path / "batch" / "b0" / "resonances.csv").exists()
    assert (tmp_path / "batch" / "b1" / "resonances.csv").exists()


def test_batch_reports_worst_code(tmp_path):
    good = _small(steps=600)
    good["name"] = "good"
    bad = cube_demo(s_factor=1.98)
    bad["name"] = "bad"
    paths = [_write(tmp_path, good, "g.yaml"), _write(tmp_path, bad, "b.yaml")]
    assert main(["run", *paths, "-o", str(tmp_path / "batch")]) == 2


def _res(path, freqs):
    ResonanceList(np.asarray(freqs, float), np.ones(len(freqs))).write_csv(path)
    return str(path)


def test_compare_pass_and_threshold(tmp_path, capsys):
    a = _res(tmp_path / "a.csv", [1e8, 2e8])
    b = _res(tmp_path / "b.csv", [1e8, 2e8])
    c = _res(tmp_path / "c.csv", [1.02e8, 2e8])
    assert main(["compare", a, b, "--report", str(tmp_path / "r.txt")]) == 0
    assert (tmp_path / "r.txt").read_text().endswith("PASS\n")
    assert main(["compare", a, c]) == 3
    assert main(["compare", a, c, "--resonance-tol", "0.05"]) == 0
    assert "FAIL" in capsys.readouterr().out


def test_compare_mismatch_exit_1(tmp_path):
    for name, probe in (("a", "p1"), ("b", "p2")):
        d = tmp_path / name
        d.mkdir()
        (d / "series.csv").write_text(f"step,time,{probe}\n1,1e-12,0\n")
        _res(d / "resonances.csv", [1e8])
    assert main(["compare", str(tmp_path / "a"), str(tmp_path / "b")]) == 1


def test_gen_to_stdout_and_file(tmp_path, capsys):
    assert main(["gen", "cavity2d", "n=21", "s_factor=4.95"]) == 0
    data = yaml.safe_load(capsys.readouterr().out)
    assert data["grid"]["cells"] == [21, 21] and data["s_factor"] == 4.95
    target = tmp_path / "w.yaml"
    assert main(["gen", "iris-waveguide", "nx=11", "-o", str(target)]) == 0
    assert load_scenario(target).grid.cells[0] == 11


@pytest.mark.parametrize("argv", [
    ["gen", "tokamak"],
    ["gen", "cavity2d", "n"],
    ["gen", "cavity2d", "bogus=1"],
    ["frobnicate"],
    [],
])
def test_usage_errors_exit_1(argv):
    assert main(argv) == 1


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "run" in capsys.readouterr().out


def test_eigen_full_engine(tmp_path, capsys):
    data = cavity3d(n=6, engine="full", s_factor=1.5)
    path = _write(tmp_path, data)
    assert main(["eigen", path, "-o", str(tmp_path / "eig")]) == 0
    out = capsys.readouterr().out
    assert "enforced" in out and "singular values >= 2/dt" in out
    enforced = np.loadtxt(tmp_path / "eig" / "eigenvalues_enforced.csv", delimiter=",", skiprows=2)
    original = np.loadtxt(tmp_path / "eig" / "eigenvalues_original.csv", delimiter=",", skiprows=2)
    assert np.abs(enforced[:, 3] - 1).max() <= 1e-9
    assert original[:, 3].max() > 1
    assert (tmp_path / "eig" / "eigenvalues.png").stat().st_size > 0
    assert (tmp_path / "eig" / "singular_values.csv").read_text().startswith("# fdtdmor ")


def test_eigen_below_cfl_without_enforcement(tmp_path):
    path = _write(tmp_path, cavity3d(n=5, engine="full", s_factor=0.9))
    assert main(["eigen", path, "-o", str(tmp_path / "eig")]) == 0
    assert not (tmp_path / "eig" / "eigenvalues_enforced.csv").exists()
    assert main(["eigen", path, "--enforce", "-o", str(tmp_path / "eig2")]) == 0
    assert (tmp_path / "eig2" / "eigenvalues_enforced.csv").exists()


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fdtdmor.cli", "gen", "cube-demo"], capture_output=True, text=True)
    assert proc.returncode == 0 and "cube-demo" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "fdtdmor.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("fdtdmor ")
