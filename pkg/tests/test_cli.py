import numpy as np
import pytest

from ddot import cli
from ddot.cli import ConfigError, main, parse_config

QUICK_GRID_CFG = """\
mode = grid-solve
system = identity
lagrangian = quadratic-u
grid.x_min = -1.0
grid.x_max = 2.0
grid.M = 40
horizon = 2
marginal1.mean = 0.2
marginal1.second_param = 0.02
marginal2.mean = 0.9
marginal2.second_param = 0.03
cp.max_iter = 20000
cp.tol_gap = 2e-3
cp.tol_feas = 2e-3
"""

GAUSSIAN_CFG = """\
mode = gaussian
system = identity
lagrangian = quadratic-u
horizon = 2
marginal1.mean = 0.0
marginal1.second_param = 1.0
marginal2.mean = 0.0
marginal2.second_param = 4.0
"""

ORACLE_CFG = """\
mode = oracle
system = identity
lagrangian = quadratic-u
grid.x_min = -1.0
grid.x_max = 2.0
grid.M = 60
horizon = 3
marginal1.mean = 0.2
marginal1.second_param = 0.02
marginal2.mean = 0.9
marginal2.second_param = 0.03
"""


def write_cfg(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def read_summary(outdir):
    lines = (outdir / "summary.csv").read_text().splitlines()
    return dict(zip(lines[0].split(","), lines[1].split(",")))


def test_grid_solve_outputs(tmp_path):
    cfg = write_cfg(tmp_path, QUICK_GRID_CFG)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--output-dir", str(out)]) == 0
    files = sorted(p.name for p in out.iterdir())
    assert files == ["control_1.csv", "cost_trace.csv", "density_1.csv",
                     "density_2.csv", "summary.csv"]
    density = (out / "density_1.csv").read_text().splitlines()
    assert density[0] == "x,rho"
    assert len(density) == 41  # header + M rows
    control = (out / "control_1.csv").read_text().splitlines()
    assert control[0] == "x,u,rho_mass_weight"
    assert len(control) == 41
    trace = (out / "cost_trace.csv").read_text().splitlines()
    assert trace[0] == "iteration,dual_objective,primal_cost,gap,feas_residual"
    summary = read_summary(out)
    assert summary["converged"] == "true"
    assert summary["marginal1_second_param_is"] == "variance"
    # value close to the closed form for these Gaussians
    expected = (0.2 - 0.9) ** 2 + (np.sqrt(0.02) - np.sqrt(0.03)) ** 2
    assert float(summary["optimal_value"]) == pytest.approx(expected, rel=0.05)


def test_grid_solve_deterministic(tmp_path):
    cfg = write_cfg(tmp_path, QUICK_GRID_CFG)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(cfg), "--output-dir", str(out1)]) == 0
    assert main(["run", str(cfg), "--output-dir", str(out2)]) == 0
    for p1 in sorted(out1.iterdir()):
        p2 = out2 / p1.name
        assert p1.read_bytes() == p2.read_bytes()


def test_unknown_key_rejected_with_line(tmp_path, capsys):
    cfg = write_cfg(tmp_path, QUICK_GRID_CFG + "bogus_key = 1\n")
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--output-dir", str(out)]) == 1
    err = capsys.readouterr().err
    assert "line 15" in err and "bogus_key" in err
    assert not out.exists()  # no partial outputs


def test_duplicate_key_rejected(tmp_path, capsys):
    cfg = write_cfg(tmp_path, QUICK_GRID_CFG + "horizon = 3\n")
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "o")]) == 1
    assert "duplicate" in capsys.readouterr().err


def test_bad_value_rejected(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "mode = grid-solve\ngrid.M = lots\n")
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "o")]) == 1
    assert "line 2" in capsys.readouterr().err


def test_missing_required_key(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "mode = grid-solve\nhorizon = 2\n")
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "o")]) == 1
    assert "missing required" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.cfg")]) == 1
    assert "not found" in capsys.readouterr().err


def test_max_iter_override_reports_non_convergence(tmp_path):
    cfg = write_cfg(tmp_path, QUICK_GRID_CFG)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--output-dir", str(out),
                 "--max-iter", "5"]) == 2
    summary = read_summary(out)
    assert summary["converged"] == "false"
    assert summary["iterations"] == "5"


def test_plots_flag_writes_svg(tmp_path):
    cfg = write_cfg(tmp_path, QUICK_GRID_CFG)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--output-dir", str(out), "--plots"]) == 0
    svgs = sorted(p.name for p in out.glob("*.svg"))
    assert svgs == ["control_1.svg", "cost_trace.svg", "density_1.svg",
                    "density_2.svg"]
    head = (out / "cost_trace.svg").read_text()[:200]
    assert "<svg" in head or "<?xml" in head


def test_version_command(capsys):
    assert main(["version"]) == 0
    from ddot import __version__

    assert capsys.readouterr().out.strip() == __version__


def test_gaussian_mode_scalar_benchmark(tmp_path):
    cfg = write_cfg(tmp_path, GAUSSIAN_CFG)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--output-dir", str(out)]) == 0
    summary = read_summary(out)
    assert float(summary["optimal_value"]) == pytest.approx(1.0, abs=1e-3)
    assert summary["converged"] == "true"


def test_gaussian_mode_rejects_nonzero_mean(tmp_path, capsys):
    cfg = write_cfg(tmp_path, GAUSSIAN_CFG.replace(
        "marginal1.mean = 0.0", "marginal1.mean = 0.5"))
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "o")]) == 1
    assert "zero-mean" in capsys.readouterr().err


def test_stddev_interpretation_matches_variance(tmp_path):
    base = write_cfg(tmp_path, ORACLE_CFG, "var.cfg")
    tweaked = ORACLE_CFG.replace(
        "marginal2.second_param = 0.03",
        "marginal2.second_param = 0.17320508075688773\n"
        "marginal2.second_param_is = stddev")
    alt = write_cfg(tmp_path, tweaked, "std.cfg")
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["run", str(base), "--output-dir", str(out1)]) == 0
    assert main(["run", str(alt), "--output-dir", str(out2)]) == 0
    v1 = float(read_summary(out1)["optimal_value"])
    v2 = float(read_summary(out2)["optimal_value"])
    assert v1 == pytest.approx(v2, rel=1e-10)
    assert read_summary(out2)["marginal2_second_param_is"] == "stddev"


def test_oracle_mode_value(tmp_path, capsys):
    cfg = write_cfg(tmp_path, ORACLE_CFG)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--output-dir", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "cost-to-go table" in printed
    assert "monotone" in printed
    # identity drift + quadratic control: the chained cost halves the
    # one-step squared distance at T=3
    expected = ((0.2 - 0.9) ** 2 + (np.sqrt(0.02) - np.sqrt(0.03)) ** 2) / 2
    assert float(read_summary(out)["optimal_value"]) == pytest.approx(
        expected, rel=0.05)


def test_bundled_paper_example_parses():
    path = cli._resolve_config_path("paper_example.cfg")
    cfg = parse_config(path)
    assert cfg.mode == "grid-solve"
    assert cfg.grid_m == 150
    assert cfg.horizon == 5
    assert cfg.marginal1["second_param"] == 0.03


def test_parse_config_syntax_errors(tmp_path):
    with pytest.raises(ConfigError, match="line 1"):
        parse_config(write_cfg(tmp_path, "just words\n"))
    with pytest.raises(ConfigError, match="empty value"):
        parse_config(write_cfg(tmp_path, "mode =\n"))
    with pytest.raises(ConfigError, match="one of"):
        parse_config(write_cfg(tmp_path, "mode = warp\n"))
