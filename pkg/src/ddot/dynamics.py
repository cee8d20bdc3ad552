"""System specification, reduced transition costs and a DP oracle.

Systems have the full-input form ``x_{k+1} = f_k(x_k) + u_k`` with a
nonnegative stage cost ``L_k(x, u)``, both possibly time dependent.
Substituting ``u = y - f_k(x)`` turns the one-step cost between grid
states into the reduced cost ``C_k(x, y) = L_k(x, y - f_k(x))``, the
basic tensor the solver works with.  A backward value-iteration oracle
over the same tensor provides grid-exact multi-step costs for
verification.

Stage indices are 1-based in the public API (states live on stages
``1..T``, transitions on ``1..T-1``); arrays are 0-based with row ``k``
holding stage ``k+1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import Grid1D

__all__ = [
    "SystemSpec",
    "ReducedCostTensor",
    "CostToGoTable",
    "reduced_cost",
    "cost_to_go",
    "value_iteration",
    "bellman_backward",
    "identity_drift",
    "sin_drift",
    "linear_drift",
    "quadratic_control_cost",
    "quartic_state_quadratic_control_cost",
]

# Row-block size for the O(M^3) min-plus reductions; bounds the temporary
# (block, M, M) arrays to a few MB.
_MINPLUS_BLOCK = 32


@dataclass(frozen=True)
class SystemSpec:
    """Discrete-time controlled system with a stage cost.

    Attributes
    ----------
    T : int
        Number of time stamps; states are defined on stages ``1..T`` and
        inputs on ``1..T-1``.  Must be at least 2.
    drift : callable ``(k, x) -> f_k(x)``
        Drift evaluator; ``k`` is the 1-based transition index and ``x``
        may be a scalar or an ndarray (must broadcast).
    lagrangian : callable ``(k, x, u) -> L_k(x, u)``
        Nonnegative stage cost evaluator, broadcasting like ``drift``.
    """

    T: int
    drift: Callable
    lagrangian: Callable

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 2:
            raise ValueError(f"horizon T must be an integer >= 2, got {self.T}")


@dataclass(frozen=True, eq=False)
class ReducedCostTensor:
    """Per-transition grid costs ``C[k][i][j] = L_k(x_i, x_j - f_k(x_i))``."""

    grid: Grid1D
    T: int
    C: np.ndarray  # (T-1, M, M)


@dataclass(frozen=True, eq=False)
class CostToGoTable:
    """Grid-restricted multi-step costs ``c[i][j]`` from stage 1 to T."""

    grid: Grid1D
    c: np.ndarray  # (M, M)


def reduced_cost(sys: SystemSpec, grid: Grid1D) -> ReducedCostTensor:
    """Evaluate the reduced one-step cost on all grid transitions.

    Raises
    ------
    ValueError
        If any evaluation is non-finite or negative; the message names
        the offending ``(k, i, j)`` (1-based stage, 0-based cells).
    """
    M = grid.M
    C = np.empty((sys.T - 1, M, M))
    x = grid.centers
    for k in range(1, sys.T):
        fx = np.asarray(sys.drift(k, x), dtype=float)
        if fx.shape != (M,):
            raise ValueError(f"drift at stage {k} returned shape {fx.shape}")
        u = x[None, :] - fx[:, None]
        Ck = np.asarray(sys.lagrangian(k, x[:, None], u), dtype=float)
        if Ck.shape != (M, M):
            raise ValueError(f"lagrangian at stage {k} returned shape {Ck.shape}")
        bad = ~np.isfinite(Ck)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise ValueError(
                f"non-finite stage cost at (k={k}, i={i}, j={j}): {Ck[i, j]!r}"
            )
        neg = Ck < 0
        if neg.any():
            i, j = np.argwhere(neg)[0]
            raise ValueError(
                f"negative stage cost at (k={k}, i={i}, j={j}): {Ck[i, j]!r}"
            )
        C[k - 1] = Ck
    C.flags.writeable = False
    return ReducedCostTensor(grid=grid, T=sys.T, C=C)


def _minplus(c: np.ndarray, Ck: np.ndarray) -> np.ndarray:
    """Min-plus matrix product ``out[i][j] = min_l c[i][l] + Ck[l][j]``."""
    M = c.shape[0]
    out = np.empty_like(c)
    for s in range(0, M, _MINPLUS_BLOCK):
        e = min(s + _MINPLUS_BLOCK, M)
        out[s:e] = (c[s:e, :, None] + Ck[None, :, :]).min(axis=1)
    return out


def value_iteration(C: np.ndarray) -> np.ndarray:
    """Chain the transition costs into the full-horizon cost table.

    ``C`` has shape ``(T-1, M, M)``; the result ``c[i][j]`` is the
    minimum of ``sum_k C[k][i_k][i_{k+1}]`` over all grid paths with
    ``i_1 = i`` and ``i_T = j``, computed by backward accumulation.
    """
    c = C[-1]
    for k in range(C.shape[0] - 2, -1, -1):
        c = _minplus(C[k], c)
    return c


def bellman_backward(C: np.ndarray, terminal: np.ndarray) -> np.ndarray:
    """Backward Bellman-equality pass from a terminal potential.

    Returns ``w`` of shape ``(T, M)`` with ``w[T-1] = terminal`` and
    ``w[k][i] = min_j C[k][i][j] + w[k+1][j]``.
    """
    Tm1, M, _ = C.shape
    w = np.empty((Tm1 + 1, M))
    w[-1] = terminal
    for k in range(Tm1 - 1, -1, -1):
        w[k] = (C[k] + w[k + 1][None, :]).min(axis=1)
    return w


def cost_to_go(sys: SystemSpec, grid: Grid1D) -> CostToGoTable:
    """Grid-restricted DP cost between every pair of start/end cells.

    The control set is restricted so successor states land on cell
    centers, matching the transitions the splitting solver prices; the
    table is the exact optimum of that discrete problem and serves as an
    independent verification oracle.
    """
    tensor = reduced_cost(sys, grid)
    c = value_iteration(tensor.C)
    c.flags.writeable = False
    return CostToGoTable(grid=grid, c=c)


# ---------------------------------------------------------------------------
# Built-in drifts and stage costs (vectorized, time-invariant).

def identity_drift():
    """``f(x) = x``."""
    def f(k, x):
        return np.asarray(x, dtype=float)
    return f


def sin_drift(amplitude: float = 0.3):
    """``f(x) = x + amplitude * sin(x)``."""
    def f(k, x):
        x = np.asarray(x, dtype=float)
        return x + amplitude * np.sin(x)
    return f


def linear_drift(a: float):
    """``f(x) = a * x``."""
    def f(k, x):
        return a * np.asarray(x, dtype=float)
    return f


def quadratic_control_cost(u_weight: float = 1.0):
    """``L(x, u) = u_weight * u**2``."""
    def L(k, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return np.broadcast_to(u_weight * u ** 2, np.broadcast(x, u).shape).copy()
    return L


def quartic_state_quadratic_control_cost(x_weight: float = 0.01,
                                         u_weight: float = 1.0):
    """``L(x, u) = x_weight * x**4 + u_weight * u**2``."""
    def L(k, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return x_weight * x ** 4 + u_weight * u ** 2
    return L
