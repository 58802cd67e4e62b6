import csv
import subprocess
import sys

import numpy as np
import pytest

from cmcg.cli import ConfigError, fitted_slope, main, parse_config

MINIMAL = """\
[domain]
n = 8

[physics]
problem = "sound_soft_1d"

[solver]
tol = 1e-8

[output]
timing = false
"""


def run(tmp_path, text, command="solve", *extra):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(text)
    out = tmp_path / "out"
    return main([command, "--config", str(cfg), "--out", str(out), "--quiet", *extra]), out


def read_rows(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(lines))


def test_minimal_config_produces_artifacts(tmp_path):
    code, out = run(tmp_path, MINIMAL)
    assert code == 0
    hist = (out / "history.csv").read_text().splitlines()
    assert hist[0] == "# cmcg-history v1"
    assert hist[1] == "iter,residual_cg,misfit_J,residual_H,cumulative_wave_periods,wall_time_s"
    sol = (out / "solution.csv").read_text().splitlines()
    assert sol[0] == "# cmcg-solution v1"
    rows = read_rows(out / "solution.csv")
    assert len(rows) > 8


def test_solution_matches_exact_field(tmp_path):
    code, out = run(tmp_path, MINIMAL.replace("n = 8", "n = 32"))
    assert code == 0
    rows = read_rows(out / "solution.csv")
    keys = list(rows[0])
    x = np.array([float(r[keys[0]]) for r in rows])
    u = np.array([float(r[keys[-2]]) + 1j * float(r[keys[-1]]) for r in rows])
    exact = -np.exp(1j * 5 * np.pi / 4 * x)
    assert np.max(np.abs(u - exact)) < 1e-4


@pytest.mark.parametrize("text, fragment", [
    (MINIMAL.replace('problem = "sound_soft_1d"', "problem = sound_soft_1d"), ":5:11: malformed TOML"),
    (MINIMAL.replace("tol = 1e-8", "tol = 1e-8\ntolerance = 3"), ":9:1: unknown key 'tolerance'"),
    (MINIMAL.replace("n = 8", "n = 8.5"), ":2:1: domain.n must be an integer"),
    (MINIMAL.replace("tol = 1e-8", 'stop_on = "energy"'), ":8:1: solver.stop_on"),
    (MINIMAL + "\n[mesh]\nh = 1\n", ":13:2: unknown section"),
    (MINIMAL.replace("tol = 1e-8", "tol = -1.0"), ":8:1: tol must be positive"),
])
def test_bad_config_reports_location(tmp_path, capsys, text, fragment):
    code, _ = run(tmp_path, text)
    assert code != 0
    err = capsys.readouterr().err
    assert fragment in err


def test_missing_config_file(tmp_path, capsys):
    assert main(["solve", "--config", str(tmp_path / "nope.toml")]) == 2
    assert "cannot read config" in capsys.readouterr().err


def test_nonconverged_solve_exit_code(tmp_path):
    code, out = run(tmp_path, MINIMAL.replace("tol = 1e-8", "tol = 1e-14\nmax_iter = 2"))
    assert code == 3
    assert (out / "history.csv").exists()


def test_parse_config_defaults_and_options():
    cfg = parse_config(MINIMAL)
    assert cfg.domain.n == 8 and cfg.output.timing is False
    opts = cfg.options()
    assert opts.tol == 1e-8 and opts.order == 2 and opts.riesz == "auto"
    with pytest.raises(ConfigError):
        parse_config("[discretization]\npath = \"first\"\n[physics]\nproblem = \"plane_wave\"\n")


def test_fitted_slope_exact_power_law():
    h = np.array([0.5, 0.25, 0.125])
    assert fitted_slope(h, 3 * h ** 2.5) == pytest.approx(2.5, abs=1e-12)


def test_converge_writes_orders(tmp_path):
    text = """\
[physics]
problem = "sound_soft_1d"
[discretization]
order = 1
levels = [3, 4, 5]
[solver]
tol = 1e-10
"""
    code, out = run(tmp_path, text, "converge")
    assert code == 0
    lines = (out / "orders.csv").read_text().splitlines()
    assert lines[0] == "# cmcg-orders v1" and lines[1].startswith("# fitted_slope")
    slope = float(lines[1].split("=")[1])
    assert slope == pytest.approx(2.0, abs=0.2)
    assert len(read_rows(out / "orders.csv")) == 3


def test_history_bitwise_reproducible(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    a, out_a = run(tmp_path / "a", MINIMAL)
    b, out_b = run(tmp_path / "b", MINIMAL)
    assert a == b == 0
    for name in ("history.csv", "solution.csv"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_thread_count_changes_results_only_within_tolerance(tmp_path):
    text = """\
[domain]
box = 3.0
obstacle = "square"
h = 0.125
[physics]
problem = "plane_wave"
[discretization]
order = 1
scheme = "leapfrog"
[solver]
tol = 1e-6
[output]
timing = false
"""
    (tmp_path / "t1").mkdir()
    (tmp_path / "t4").mkdir()
    (tmp_path / "t1b").mkdir()
    c1, o1 = run(tmp_path / "t1", text, "solve", "--threads", "1")
    c1b, o1b = run(tmp_path / "t1b", text, "solve", "--threads", "1")
    c4, o4 = run(tmp_path / "t4", text, "solve", "--threads", "4")
    assert c1 == c1b == c4 == 0
    assert (o1 / "history.csv").read_bytes() == (o1b / "history.csv").read_bytes()
    r1 = read_rows(o1 / "history.csv")
    r4 = read_rows(o4 / "history.csv")
    assert len(r1) == len(r4)
    assert float(r4[-1]["residual_cg"]) == pytest.approx(float(r1[-1]["residual_cg"]), rel=1e-6)


def test_threads_must_be_positive(tmp_path):
    code, _ = run(tmp_path, MINIMAL, "solve", "--threads", "0")
    assert code == 2


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(MINIMAL)
    proc = subprocess.run([sys.executable, "-m", "cmcg", "direct", "--config", str(cfg), "--out",
                           str(tmp_path / "o"), "--quiet"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "o" / "solution.csv").exists()
