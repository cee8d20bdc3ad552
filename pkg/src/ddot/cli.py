"""Configuration-driven experiment runner (the ``ddot`` command).

Runs one experiment per invocation from a flat ``key = value`` config
file (``#`` starts a comment, nested keys use dots) and writes
machine-readable CSVs plus optional SVG plots into the configured
output directory.  Three modes are supported:

* ``grid-solve`` -- full primal-dual solve, density path and controller,
* ``gaussian``   -- scalar linear-quadratic Gaussian solve,
* ``oracle``     -- DP cost table and monotone-coupling cross checks.

Exit codes: 0 converged, 1 config error, 2 finished without reaching
the convergence tolerances.  ``DDOT_THREADS`` (an integer, 0 = auto)
caps BLAS/OpenMP worker threads; it must be handled before numpy is
first imported, which is why the heavy imports below live inside the
command functions.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path


def _apply_thread_env():
    raw = os.environ.get("DDOT_THREADS")
    if not raw:
        return
    try:
        n = int(raw)
    except ValueError:
        print(f"warning: ignoring non-integer DDOT_THREADS={raw!r}",
              file=sys.stderr)
        return
    if n > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, str(n))


_apply_thread_env()


class ConfigError(Exception):
    """Invalid configuration; ``line`` is None for file-level problems."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message)

    def __str__(self):
        base = super().__str__()
        return f"line {self.line}: {base}" if self.line else base


_MODES = ("grid-solve", "gaussian", "oracle")
_SYSTEMS = ("identity", "sin-drift", "linear")
_LAGRANGIANS = ("quadratic-u", "quartic-x-quadratic-u")
_SECOND_PARAM_IS = ("variance", "stddev")

# key -> (type tag, allowed choices or None)
_KEYS = {
    "mode": ("str", _MODES),
    "system": ("str", _SYSTEMS),
    "system.amplitude": ("float", None),
    "system.a": ("float", None),
    "system.b": ("float", None),
    "lagrangian": ("str", _LAGRANGIANS),
    "lagrangian.x_weight": ("float", None),
    "lagrangian.u_weight": ("float", None),
    "grid.x_min": ("float", None),
    "grid.x_max": ("float", None),
    "grid.m": ("int", None),
    "horizon": ("int", None),
    "marginal1.type": ("str", ("gaussian",)),
    "marginal1.mean": ("float", None),
    "marginal1.second_param": ("float", None),
    "marginal1.second_param_is": ("str", _SECOND_PARAM_IS),
    "marginal2.type": ("str", ("gaussian",)),
    "marginal2.mean": ("float", None),
    "marginal2.second_param": ("float", None),
    "marginal2.second_param_is": ("str", _SECOND_PARAM_IS),
    "cp.tau": ("float", None),
    "cp.sigma": ("float", None),
    "cp.theta": ("float", None),
    "cp.max_iter": ("int", None),
    "cp.tol_gap": ("float", None),
    "cp.tol_feas": ("float", None),
    "cp.check_every": ("int", None),
    "output_dir": ("str", None),
}


@dataclass
class ExperimentConfig:
    mode: str = ""
    system: str = "identity"
    system_amplitude: float = 0.3
    system_a: float = 1.0
    system_b: float = 1.0
    lagrangian: str = "quadratic-u"
    lagrangian_x_weight: float = 0.01
    lagrangian_u_weight: float = 1.0
    grid_x_min: float | None = None
    grid_x_max: float | None = None
    grid_m: int | None = None
    horizon: int | None = None
    marginal1: dict = field(default_factory=dict)
    marginal2: dict = field(default_factory=dict)
    cp_tau: float | None = None
    cp_sigma: float | None = None
    cp_theta: float = 1.0
    cp_max_iter: int = 20000
    cp_tol_gap: float = 1e-3
    cp_tol_feas: float = 1e-3
    cp_check_every: int = 10
    output_dir: str | None = None


def _parse_value(key: str, raw: str, line: int):
    kind, choices = _KEYS[key]
    if kind == "str":
        value = raw
        if choices is not None and value not in choices:
            raise ConfigError(
                f"key {key!r} must be one of {', '.join(choices)}; got {value!r}",
                line,
            )
        return value
    try:
        if kind == "int":
            return int(raw)
        value = float(raw)
    except ValueError:
        raise ConfigError(f"key {key!r} expects a {kind}, got {raw!r}", line)
    if not math.isfinite(value):
        raise ConfigError(f"key {key!r} must be finite, got {raw!r}", line)
    return value


def parse_config(path: Path) -> ExperimentConfig:
    """Parse and validate a config file; raises :class:`ConfigError`."""
    cfg = ExperimentConfig()
    seen: dict[str, int] = {}
    text = path.read_text(encoding="utf-8")
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        stripped = rawline.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected 'key = value', got {stripped!r}", lineno)
        key, _, raw = stripped.partition("=")
        key = key.strip().lower()
        raw = raw.strip()
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if not raw:
            raise ConfigError(f"key {key!r} has an empty value", lineno)
        if key in seen:
            raise ConfigError(
                f"duplicate key {key!r} (first set on line {seen[key]})", lineno
            )
        seen[key] = lineno
        value = _parse_value(key, raw, lineno)
        if key.startswith("marginal1.") or key.startswith("marginal2."):
            which, _, sub = key.partition(".")
            getattr(cfg, which)[sub] = value
        else:
            attr = key.replace(".", "_")
            setattr(cfg, attr, value)
    _validate_semantics(cfg, seen)
    return cfg


def _validate_semantics(cfg: ExperimentConfig, seen: dict[str, int]):
    if not cfg.mode:
        raise ConfigError("missing required key 'mode'")
    needs_grid = cfg.mode in ("grid-solve", "oracle")
    required = ["horizon", "marginal1.mean", "marginal1.second_param",
                "marginal2.mean", "marginal2.second_param"]
    if needs_grid:
        required += ["grid.x_min", "grid.x_max", "grid.m"]
    for key in required:
        attr = key.replace(".", "_")
        if key.startswith("marginal"):
            which, _, sub = key.partition(".")
            present = sub in getattr(cfg, which)
        else:
            present = getattr(cfg, attr) is not None
        if not present:
            raise ConfigError(f"missing required key {key!r} for mode {cfg.mode!r}")
    if cfg.horizon < 2:
        raise ConfigError("horizon must be at least 2",
                          seen.get("horizon"))
    if needs_grid:
        if cfg.grid_m < 2:
            raise ConfigError("grid.m must be at least 2", seen.get("grid.m"))
        if not cfg.grid_x_max > cfg.grid_x_min:
            raise ConfigError("grid.x_max must exceed grid.x_min",
                              seen.get("grid.x_max"))
    for name in ("marginal1", "marginal2"):
        marg = getattr(cfg, name)
        marg.setdefault("type", "gaussian")
        marg.setdefault("second_param_is", "variance")
        if marg["second_param"] <= 0:
            raise ConfigError(f"{name}.second_param must be positive",
                              seen.get(f"{name}.second_param"))
    if cfg.mode == "gaussian":
        if cfg.lagrangian != "quadratic-u":
            raise ConfigError(
                "gaussian mode requires lagrangian = quadratic-u",
                seen.get("lagrangian"),
            )
        if cfg.system == "sin-drift":
            raise ConfigError("gaussian mode requires a linear system",
                              seen.get("system"))
        for name in ("marginal1", "marginal2"):
            if getattr(cfg, name)["mean"] != 0.0:
                raise ConfigError(
                    f"gaussian mode handles zero-mean marginals only; "
                    f"set {name}.mean = 0",
                    seen.get(f"{name}.mean"),
                )


def _variance(marg: dict) -> float:
    p = marg["second_param"]
    return p * p if marg["second_param_is"] == "stddev" else p


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int,)):
        return str(x)
    if isinstance(x, str):
        return x
    return format(float(x), ".12g")


def _write_csv(path: Path, header: list, rows: list):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _write_summary(outdir: Path, cfg: ExperimentConfig, optimal_value: float,
                   iterations: int, converged: bool, clamped_mass: float):
    _write_csv(outdir / "summary.csv",
               ["optimal_value", "iterations", "converged", "clamped_mass",
                "marginal1_second_param_is", "marginal2_second_param_is"],
               [[optimal_value, iterations, converged, clamped_mass,
                 cfg.marginal1["second_param_is"],
                 cfg.marginal2["second_param_is"]]])


def _build_problem(cfg: ExperimentConfig):
    from . import dynamics, grid as gridmod

    g = gridmod.build_grid(cfg.grid_x_min, cfg.grid_x_max, cfg.grid_m)
    rho1 = gridmod.discretize_gaussian(g, cfg.marginal1["mean"],
                                       _variance(cfg.marginal1))
    rho2 = gridmod.discretize_gaussian(g, cfg.marginal2["mean"],
                                       _variance(cfg.marginal2))
    if cfg.system == "identity":
        drift = dynamics.identity_drift()
    elif cfg.system == "sin-drift":
        drift = dynamics.sin_drift(cfg.system_amplitude)
    else:
        drift = dynamics.linear_drift(cfg.system_a)
    if cfg.lagrangian == "quadratic-u":
        lagr = dynamics.quadratic_control_cost(cfg.lagrangian_u_weight)
    else:
        lagr = dynamics.quartic_state_quadratic_control_cost(
            cfg.lagrangian_x_weight, cfg.lagrangian_u_weight)
    sys_spec = dynamics.SystemSpec(T=cfg.horizon, drift=drift, lagrangian=lagr)
    return g, rho1, rho2, sys_spec


def _run_grid_solve(cfg: ExperimentConfig, outdir: Path, plots: bool) -> int:
    from . import cpsolver, transport

    g, rho1, rho2, sys_spec = _build_problem(cfg)
    params = cpsolver.CPParams(
        tau=cfg.cp_tau, sigma=cfg.cp_sigma, theta=cfg.cp_theta,
        max_iter=cfg.cp_max_iter, tol_gap=cfg.cp_tol_gap,
        tol_feas=cfg.cp_tol_feas, check_every=cfg.cp_check_every,
    )
    vf, lam, report = cpsolver.solve(sys_spec, g, rho1, rho2, params)
    ctrl = transport.controller_from_plan(lam, sys_spec)
    path = transport.interpolate_path(rho1, ctrl, sys_spec)

    outdir.mkdir(parents=True, exist_ok=True)
    trace_rows = list(zip(report.checkpoints, report.dual_objective_trace,
                          report.primal_cost_trace, report.gap_trace,
                          report.feas_residual_trace))
    _write_csv(outdir / "cost_trace.csv",
               ["iteration", "dual_objective", "primal_cost", "gap",
                "feas_residual"], trace_rows)
    for k in range(sys_spec.T):
        _write_csv(outdir / f"density_{k + 1}.csv", ["x", "rho"],
                   list(zip(g.centers, path.rho[k])))
    for k in range(sys_spec.T - 1):
        _write_csv(outdir / f"control_{k + 1}.csv",
                   ["x", "u", "rho_mass_weight"],
                   list(zip(g.centers, ctrl.u[k], g.h * path.rho[k])))
    _write_summary(outdir, cfg, report.optimal_value, report.iterations_run,
                   report.converged, float(path.clamped_mass.sum()))
    if plots:
        _plot_grid_solve(outdir, report, path, ctrl, g, sys_spec.T)
    return 0 if report.converged else 2


def _run_gaussian(cfg: ExperimentConfig, outdir: Path, plots: bool) -> int:
    import numpy as np

    from .gausslq import GaussianLQProblem, _solve_gaussian_info, gain_synthesis

    a = 1.0 if cfg.system == "identity" else cfg.system_a
    prob = GaussianLQProblem(
        A=np.array([[a]]), B=np.array([[cfg.system_b]]),
        Q=np.zeros((1, 1)), R=np.array([[cfg.lagrangian_u_weight]]),
        Sigma1=np.array([[_variance(cfg.marginal1)]]),
        SigmaT=np.array([[_variance(cfg.marginal2)]]),
        T=cfg.horizon,
    )
    sol, outer_steps, grad_converged = _solve_gaussian_info(prob)
    gains, covs = gain_synthesis(sol, prob)
    print(f"optimal value: {sol.value:.10g}")
    print("gains:", ", ".join(_fmt(float(G[0, 0])) for G in gains))
    print("steered terminal variance:", _fmt(float(covs[-1][0, 0])))
    outdir.mkdir(parents=True, exist_ok=True)
    _write_summary(outdir, cfg, sol.value, outer_steps, grad_converged, 0.0)
    return 0 if grad_converged else 2


def _run_oracle(cfg: ExperimentConfig, outdir: Path, plots: bool) -> int:
    import numpy as np

    from . import dynamics, transport

    g, rho1, rho2, sys_spec = _build_problem(cfg)
    table = dynamics.cost_to_go(sys_spec, g)
    mono = transport.monotone_ot_1d(rho1, rho2, 2.0)

    # quantile coupling priced with the DP table (bilinear interpolation)
    nq = 10 * g.M
    s = (np.arange(nq) + 0.5) / nq
    Fa = transport._cdf_at_edges(rho1.values, g.h)
    Fb = transport._cdf_at_edges(rho2.values, g.h)
    qa = transport._quantile(Fa, g.x_min, g.h, s)
    qb = transport._quantile(Fb, g.x_min, g.h, s)
    ia = np.clip(np.searchsorted(g.centers, qa) - 1, 0, g.M - 2)
    ib = np.clip(np.searchsorted(g.centers, qb) - 1, 0, g.M - 2)
    wa = np.clip((qa - g.centers[ia]) / g.h, 0.0, 1.0)
    wb = np.clip((qb - g.centers[ib]) / g.h, 0.0, 1.0)
    dp_value = float(np.mean(
        (1 - wa) * (1 - wb) * table.c[ia, ib]
        + wa * (1 - wb) * table.c[ia + 1, ib]
        + (1 - wa) * wb * table.c[ia, ib + 1]
        + wa * wb * table.c[ia + 1, ib + 1]
    ))
    print(f"cost-to-go table: min={table.c.min():.6g} "
          f"max={table.c.max():.6g} mean={table.c.mean():.6g}")
    print(f"quantile coupling priced with the DP table: {dp_value:.10g}")
    print(f"monotone squared-W2 between the marginals: {mono:.10g}")
    outdir.mkdir(parents=True, exist_ok=True)
    _write_summary(outdir, cfg, dp_value, 0, True, 0.0)
    return 0


def _plot_grid_solve(outdir: Path, report, path, ctrl, g, T: int):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(report.checkpoints, report.dual_objective_trace,
            label="dual objective")
    ax.plot(report.checkpoints, report.primal_cost_trace,
            label="primal cost")
    ax.set_xlabel("iteration")
    ax.set_ylabel("cost")
    ax.legend()
    fig.savefig(outdir / "cost_trace.svg", format="svg")
    plt.close(fig)
    for k in range(T):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(g.centers, path.rho[k])
        ax.set_xlabel("x")
        ax.set_ylabel(f"rho_{k + 1}")
        fig.savefig(outdir / f"density_{k + 1}.svg", format="svg")
        plt.close(fig)
    for k in range(T - 1):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(g.centers, ctrl.u[k])
        ax.set_xlabel("x")
        ax.set_ylabel(f"u_{k + 1}")
        fig.savefig(outdir / f"control_{k + 1}.svg", format="svg")
        plt.close(fig)


def _resolve_config_path(arg: str) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    if "/" not in arg and "\\" not in arg:
        from importlib.resources import files

        bundled = files("ddot") / "configs" / arg
        try:
            if bundled.is_file():
                return Path(str(bundled))
        except (OSError, TypeError):
            pass
    raise ConfigError(f"config file not found: {arg}")


def _cmd_run(args) -> int:
    try:
        cfg_path = _resolve_config_path(args.config)
        cfg = parse_config(cfg_path)
        if args.output_dir is not None:
            cfg.output_dir = args.output_dir
        if args.max_iter is not None:
            if args.max_iter < 1:
                raise ConfigError("--max-iter must be at least 1")
            cfg.cp_max_iter = args.max_iter
        if cfg.output_dir is None:
            raise ConfigError("missing required key 'output_dir' "
                              "(or pass --output-dir)")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    outdir = Path(cfg.output_dir)
    if cfg.mode == "grid-solve":
        return _run_grid_solve(cfg, outdir, args.plots)
    if cfg.mode == "gaussian":
        return _run_gaussian(cfg, outdir, args.plots)
    return _run_oracle(cfg, outdir, args.plots)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ddot",
        description="Dynamical optimal transport experiment runner.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run an experiment from a config file")
    run_p.add_argument("config", help="path to a key=value config file "
                       "(bundled names like paper_example.cfg also resolve)")
    run_p.add_argument("--plots", action="store_true",
                       help="write SVG line plots next to the CSVs")
    run_p.add_argument("--output-dir", default=None,
                       help="override the config's output_dir")
    run_p.add_argument("--max-iter", type=int, default=None,
                       help="override cp.max_iter")
    sub.add_parser("version", help="print the package version")
    args = parser.parse_args(argv)
    if args.command == "version":
        from . import __version__

        print(__version__)
        return 0
    return _cmd_run(args)


if __name__ == "__main__":
    sys.exit(main())
