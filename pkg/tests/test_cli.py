import csv
import subprocess
import sys

import numpy as np
import pytest

from porostdg import cli
from porostdg.analysis import default_case, discrete_error, run_case
from porostdg.errors import SolverError
from porostdg.operators import MaterialParams

SMOKE = """\
# default manufactured case
mesh.nx = 4
mesh.ny = 4
space.r = 1
time.k = 1
time.N = 4
"""


def write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(path):
    return list(csv.reader(open(path)))


# ---------------------------------------------------------------- parsing

def test_parse_defaults_and_comments():
    cfg = cli.parse_config("mesh.nx = 3  # trailing comment\n\n# only a comment\nmaterial.K = 2 0 0 1\n")
    assert cfg["mesh.nx"] == 3 and cfg["mesh.ny"] == 4
    assert cfg["material.K"] == (2.0, 0.0, 0.0, 1.0)
    assert cfg["time.nu"] == "auto"
    assert cfg.line("material.K") == 4


@pytest.mark.parametrize("text, line, fragment", [
    ("mesh.nx = 2\nmesh.nz = 3\n", 2, "unknown key"),
    ("mesh.nx = 2\n\nmesh.nx = 3\n", 3, "duplicate key"),
    ("time.k = one\n", 1, "invalid value"),
    ("space.r 2\n", 1, "expected"),
    ("material.K = 1 0 0\n", 1, "expected 4 numbers"),
])
def test_parse_errors_carry_line(text, line, fragment):
    with pytest.raises(cli.ConfigError) as info:
        cli.parse_config(text)
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}:")
    assert fragment in str(info.value)


def test_build_setup_validation_lines():
    with pytest.raises(cli.ConfigError) as info:
        cli.build_setup(cli.parse_config("mesh.nx = 2\nmesh.ny = 0\n"))
    assert info.value.line == 2
    with pytest.raises(cli.ConfigError) as info:
        cli.build_setup(cli.parse_config("time.T = 1\ntime.tau = 0.3\n"))
    assert info.value.line == 2 and "divide" in str(info.value)
    with pytest.raises(cli.ConfigError) as info:
        cli.build_setup(cli.parse_config("material.rho = 1\nmaterial.mu = -1\n"))
    assert info.value.line == 2 and "material.mu" in str(info.value)
    with pytest.raises(cli.ConfigError) as info:
        cli.build_setup(cli.parse_config("mesh.nx = 2\nmaterial.K = 1 0.5 0 1\n"))
    assert info.value.line == 2 and "symmetric" in str(info.value)
    with pytest.raises(cli.ConfigError) as info:
        cli.build_setup(cli.parse_config("material.K = 20 0 0 20\n"))
    assert info.value.line == 1 and "qbar" in str(info.value)
    with pytest.raises(cli.ConfigError) as info:
        cli.build_setup(cli.parse_config("case.id = zero\ninitial.p0 = x + z\n"))
    assert info.value.line == 2 and "unknown symbols" in str(info.value)


def test_tau_sets_slab_count():
    setup = cli.build_setup(cli.parse_config("time.T = 2\ntime.tau = 0.25\n"))
    assert setup.time_mesh.N == 8


def test_auto_nu():
    setup = cli.build_setup(cli.parse_config(""))
    assert setup.nu == pytest.approx(1.1 + 1 / 0.9 + 0.1, abs=1e-7)


# ---------------------------------------------------------------- run

def test_run_smoke_and_library_equivalence(tmp_path, capsys):
    cfg = write(tmp_path, SMOKE)
    out = tmp_path / "out"
    code, stdout, _ = run(["run", "--config", cfg, "--out", str(out)], capsys)
    assert code == 0
    rows = read_csv(out / "trajectory.csv")
    assert len(rows) == 6
    traj, ops, rule = run_case(default_case(MaterialParams()), 4, 4, 1, 4, 1)
    assert float(rows[-1][-1]) == pytest.approx(traj.energies(ops.M0)[-1], rel=1e-15)
    err = discrete_error(traj, default_case(MaterialParams()))
    assert f"err_tau_nu={err.err_tau_nu:.10e}" in stdout


def test_run_is_byte_stable(tmp_path, capsys):
    cfg = write(tmp_path, SMOKE + "output.fields = true\n")
    outputs = []
    for name in ("a", "b"):
        code, stdout, _ = run(["run", "--config", cfg, "--out", str(tmp_path / name)], capsys)
        assert code == 0
        outputs.append((stdout, (tmp_path / name / "trajectory.csv").read_bytes(),
                        (tmp_path / name / "fields_final.csv").read_bytes()))
    assert outputs[0] == outputs[1]


def test_zero_case_writes_zero_norms(tmp_path, capsys):
    cfg = write(tmp_path, "case.id = zero\nmesh.nx = 2\nmesh.ny = 2\ntime.N = 3\n")
    code, stdout, _ = run(["run", "--config", cfg, "--out", str(tmp_path)], capsys)
    assert code == 0
    rows = read_csv(tmp_path / "trajectory.csv")
    assert len(rows) == 5
    assert all(float(v) == 0.0 for row in rows[1:] for v in row[2:])
    assert "err_tau_nu" not in stdout


def test_zero_source_with_initial_data(tmp_path, capsys):
    cfg = write(tmp_path, "case.id = zero\nmesh.nx = 2\nmesh.ny = 2\ntime.N = 3\n"
                          "initial.u1_1 = sin(pi*x)*sin(pi*y)\ninitial.p0 = x*(1-x)*y*(1-y)\n")
    code, _, _ = run(["run", "--config", cfg, "--out", str(tmp_path)], capsys)
    assert code == 0
    energy = np.array([float(r[-1]) for r in read_csv(tmp_path / "trajectory.csv")[1:]])
    assert energy[0] > 0


def test_nu_below_threshold(tmp_path, capsys):
    cfg = write(tmp_path, "mesh.nx = 2\ntime.nu = 1.0\n")
    code, _, err = run(["run", "--config", cfg, "--out", str(tmp_path)], capsys)
    assert code == 2
    assert "line 2" in err
    assert "nu0" in err and "coercivity condition" in err


def test_missing_config(tmp_path, capsys):
    code, _, err = run(["run", "--config", str(tmp_path / "nope.cfg")], capsys)
    assert code == 2 and "cannot read" in err


def test_unknown_key_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, "mesh.nx = 2\nsolver.kind = lu\n")
    code, _, err = run(["run", "--config", cfg], capsys)
    assert code == 2 and "line 2" in err


def test_solver_failure_exit_code(tmp_path, capsys, monkeypatch):
    def fail(*args, **kwargs):
        raise SolverError(2, 1e17, "relative residual 1e-3 exceeds 1e-10")

    monkeypatch.setattr(cli, "march", fail)
    cfg = write(tmp_path, "mesh.nx = 1\nmesh.ny = 1\n")
    code, _, err = run(["run", "--config", cfg, "--out", str(tmp_path)], capsys)
    assert code == 3
    assert "slab 2" in err


# ---------------------------------------------------------------- converge

def test_converge_levels_too_few(tmp_path, capsys):
    cfg = write(tmp_path, SMOKE)
    code, _, err = run(["converge", "--config", cfg, "--levels", "2"], capsys)
    assert code == 2 and "levels" in err


def test_converge_time_writes_report(tmp_path, capsys):
    cfg = write(tmp_path, "mesh.nx = 4\nmesh.ny = 4\nspace.r = 2\ntime.k = 0\nstudy.start = 2\n")
    code, stdout, _ = run(["converge", "--config", cfg, "--axis", "time", "--levels", "3",
                           "--out", str(tmp_path)], capsys)
    assert code == 0
    rows = read_csv(tmp_path / "convergence_time.csv")
    assert len(rows) == 4
    assert [float(r[2]) for r in rows[1:]] == pytest.approx([0.5, 0.25, 0.125])
    assert "rate_tau_nu=" in stdout


def test_converge_rate_assertion_fails(tmp_path, capsys):
    # a 1x1 piecewise-constant space makes the spatial error dominate completely
    cfg = write(tmp_path, "mesh.nx = 1\nmesh.ny = 1\nspace.r = 0\ntime.k = 1\n")
    code, _, err = run(["converge", "--config", cfg, "--axis", "time", "--levels", "3",
                        "--assert-rates", "--out", str(tmp_path)], capsys)
    assert code == 4
    assert "rate assertion failed" in err


def test_converge_needs_manufactured_case(tmp_path, capsys):
    cfg = write(tmp_path, "case.id = zero\n")
    code, _, err = run(["converge", "--config", cfg, "--levels", "3"], capsys)
    assert code == 2 and "manufactured" in err


# ---------------------------------------------------------------- verify

def test_verify_passes(capsys):
    code, stdout, _ = run(["verify", "--sizes", "2", "4", "--trials", "10"], capsys)
    assert code == 0
    assert stdout.strip().endswith("verify: PASS")
    quad = [line for line in stdout.splitlines() if line.startswith(("PASS k=", "FAIL k="))]
    assert len(quad) == 20 and all(line.startswith("PASS") for line in quad)


def test_verify_detects_flipped_correction(capsys):
    code, stdout, _ = run(["verify", "--sizes", "2", "--degrees", "1", "--trials", "5", "--flip-jpartial"], capsys)
    assert code == 1
    assert "FAIL skew_defect" in stdout
    assert stdout.strip().endswith("verify: FAIL")


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "porostdg.cli", "converge", "--config",
                           write(tmp_path, SMOKE), "--levels", "1"], capture_output=True, text=True)
    assert proc.returncode == 2
    assert "config error" in proc.stderr
