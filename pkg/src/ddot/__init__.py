"""Dynamical optimal transport of discrete-time controlled systems.

Given a full-input system ``x_{k+1} = f_k(x_k) + u_k`` on an interval,
a nonnegative stage cost ``L_k(x, u)`` and initial/terminal densities,
this package computes the optimal transport value, the stage value
functions, an optimal feedback controller and the interpolating density
sequence.  A separate module treats the linear-quadratic / Gaussian case
in closed recursion form.

Submodules
----------
grid
    Interval discretization, densities, quadrature.
dynamics
    System and stage-cost specification, reduced transition costs,
    dynamic-programming cost-to-go oracle.
cpsolver
    Primal-dual splitting solver for the value-function formulation.
transport
    Controller extraction, density pushforward, 1D transport oracles.
gausslq
    Gaussian-marginal linear-quadratic solver (Riccati shooting).
cli
    Configuration-driven experiment runner (``ddot`` command).
"""

__version__ = "0.1.0"

_SUBMODULES = ("grid", "dynamics", "cpsolver", "transport", "gausslq", "cli")


def __getattr__(name):
    # Lazy imports keep `import ddot` cheap and let the CLI configure
    # threading environment variables before numpy is loaded.
    if name in _SUBMODULES:
        import importlib

        module = importlib.import_module(f"{__name__}.{name}")
        globals()[name] = module
        return module
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + list(_SUBMODULES))
