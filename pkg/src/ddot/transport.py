"""Post-processing of a converged solve and 1D transport oracles.

Two controller constructions are provided.  :func:`extract_controller`
realizes the argmin rule ``u_k(x) = argmin_u { L_k(x,u) + v_{k+1}(f_k(x)+u) }``
over grid successors; it is the textbook extraction but inherits the
argmin's sensitivity to small errors in a nearly-optimal value field.
:func:`controller_from_plan` instead rebuilds the map from the
multiplier field, whose per-transition marginals are typically accurate
to the solver's feasibility tolerance: each transition's map is the
monotone rearrangement between the plan's own marginals, giving
sub-cell resolution.  The latter is what the CLI uses to reproduce
density evolutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cpsolver import DualField, ValueField
from .dynamics import ReducedCostTensor, SystemSpec
from .grid import DensityVector, Grid1D

__all__ = [
    "ControllerTable",
    "DensityPath",
    "extract_controller",
    "controller_from_plan",
    "push_forward",
    "interpolate_path",
    "primal_cost_of_path",
    "monotone_ot_1d",
]

# Mass below this is treated as absent when reasoning about supports.
DENSITY_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class ControllerTable:
    """Feedback controls on the grid.

    ``u[k][i]`` is the control applied at (1-based) stage ``k+1`` in cell
    ``i``; ``target_index[k][i]`` is the successor cell, and
    ``centers[target_index[k][i]]`` equals ``drift + u`` to within half a
    cell.
    """

    grid: Grid1D
    T: int
    u: np.ndarray
    target_index: np.ndarray

    def __post_init__(self):
        shape = (self.T - 1, self.grid.M)
        if self.u.shape != shape or self.target_index.shape != shape:
            raise ValueError(f"controller arrays must have shape {shape}")


@dataclass(frozen=True, eq=False)
class DensityPath:
    """Interpolating densities ``rho[k]`` for stages 1..T.

    ``clamped_mass[k]`` records how much mass transition ``k+1`` pushed
    beyond the grid (deposited on the boundary cell).
    """

    grid: Grid1D
    rho: np.ndarray
    clamped_mass: np.ndarray

    def __post_init__(self):
        T = self.rho.shape[0]
        if self.rho.shape != (T, self.grid.M):
            raise ValueError("density path shape mismatch")
        if self.clamped_mass.shape != (T - 1,):
            raise ValueError("clamped_mass must have one entry per transition")
        h = self.grid.h
        for k in range(T):
            row = self.rho[k]
            if np.any(row < 0) or abs(h * row.sum() - 1.0) > 1e-10:
                raise ValueError(f"stage {k + 1} density violates unit mass")

    def stage(self, k: int) -> DensityVector:
        """Density at 1-based stage ``k`` as a DensityVector."""
        return DensityVector(grid=self.grid, values=self.rho[k - 1])


def extract_controller(v: ValueField, C: ReducedCostTensor,
                       sys: SystemSpec) -> ControllerTable:
    """Argmin controller from a (converged) value field.

    ``target_index[k][i] = argmin_j C[k][i][j] + v[k+1][j]`` with exact
    ties broken toward the smallest ``|u|`` and then the smallest ``j``;
    ``u[k][i] = centers[j*] - f_k(x_i)``.
    """
    grid = v.grid
    M = grid.M
    centers = grid.centers
    u = np.empty((v.T - 1, M))
    tgt = np.empty((v.T - 1, M), dtype=int)
    for k in range(v.T - 1):
        fx = np.asarray(sys.drift(k + 1, centers), dtype=float)
        score = C.C[k] + v.v[k + 1][None, :]
        umat = centers[None, :] - fx[:, None]
        row_min = score.min(axis=1, keepdims=True)
        tied = score == row_min
        abs_u = np.where(tied, np.abs(umat), np.inf)
        u_min = abs_u.min(axis=1, keepdims=True)
        best = tied & (abs_u == u_min)
        j_star = np.argmax(best, axis=1)  # first True = smallest j
        tgt[k] = j_star
        u[k] = centers[j_star] - fx
    return ControllerTable(grid=grid, T=v.T, u=u, target_index=tgt)


def _cdf_at_edges(values: np.ndarray, h: float) -> np.ndarray:
    """Piecewise-linear CDF knots at the M+1 cell edges."""
    F = np.empty(len(values) + 1)
    F[0] = 0.0
    np.cumsum(values * h, out=F[1:])
    return F


def _quantile(F: np.ndarray, x_min: float, h: float, s: np.ndarray) -> np.ndarray:
    """Generalized inverse of a piecewise-linear CDF at probabilities s."""
    M = len(F) - 1
    idx = np.clip(np.searchsorted(F, s, side="left"), 1, M)
    F_lo = F[idx - 1]
    dF = F[idx] - F_lo
    frac = np.where(dF > 0, (s - F_lo) / np.where(dF > 0, dF, 1.0), 0.0)
    frac = np.clip(frac, 0.0, 1.0)
    return x_min + (idx - 1 + frac) * h


def controller_from_plan(lam: DualField, sys: SystemSpec) -> ControllerTable:
    """Monotone-rearrangement controller from the transport plan.

    For each transition the plan's two marginals are extracted and the
    map matching their quantiles is evaluated at the cell centers
    (specifically at each cell's mass midpoint), giving controls with
    sub-cell resolution.  Cells whose transition carries no plan mass
    fall back to zero control.
    """
    grid = lam.grid
    h, M = grid.h, grid.M
    centers = grid.centers
    u = np.empty((lam.T - 1, M))
    tgt = np.empty((lam.T - 1, M), dtype=int)
    for k in range(lam.T - 1):
        fx = np.asarray(sys.drift(k + 1, centers), dtype=float)
        src = lam.lam[k].sum(axis=1) * h
        dst = lam.lam[k].sum(axis=0) * h
        src_mass = h * src.sum()
        dst_mass = h * dst.sum()
        if src_mass <= DENSITY_FLOOR or dst_mass <= DENSITY_FLOOR:
            y = fx  # no plan mass on this transition: coast with u = 0
        else:
            F_src = _cdf_at_edges(src / src_mass, h)
            F_dst = _cdf_at_edges(dst / dst_mass, h)
            s_mid = np.clip((F_src[:-1] + F_src[1:]) / 2, 0.0, 1.0)
            y = _quantile(F_dst, grid.x_min, h, s_mid)
        u[k] = y - fx
        tgt[k] = np.clip(np.rint((y - grid.x_min) / h - 0.5).astype(int),
                         0, M - 1)
    return ControllerTable(grid=grid, T=lam.T, u=u, target_index=tgt)


def _push_masses(values: np.ndarray, y: np.ndarray, grid: Grid1D
                 ) -> tuple[np.ndarray, float]:
    """CIC deposit of each cell's mass at its target point.

    Returns the new density values and the amount of mass whose target
    fell outside the interval (clamped onto the boundary cell).
    """
    h, M = grid.h, grid.M
    centers = grid.centers
    mass = h * values
    out = np.zeros(M)
    left = y <= centers[0]
    right = y >= centers[-1]
    inside = ~(left | right)
    out[0] += mass[left].sum()
    out[-1] += mass[right].sum()
    clamped = float(mass[y < grid.x_min].sum() + mass[y > grid.x_max].sum())
    pos = (y[inside] - centers[0]) / h
    lo = np.minimum(pos.astype(int), M - 2)
    w_hi = pos - lo
    np.add.at(out, lo, mass[inside] * (1.0 - w_hi))
    np.add.at(out, lo + 1, mass[inside] * w_hi)
    new_values = out / h
    total = h * new_values.sum()
    if abs(total - 1.0) > 1e-10:
        new_values = new_values / total
    return new_values, clamped


def push_forward(rho_k: DensityVector, ctrl: ControllerTable, k: int,
                 sys: SystemSpec) -> DensityVector:
    """Push a stage density through transition ``k`` (1-based).

    Each cell's mass moves to ``y = f_k(x_i) + u[k][i]`` and is split
    between the two straddling cell centers by linear interpolation;
    targets beyond the interval are clamped onto the boundary cell.
    """
    if not 1 <= k <= ctrl.T - 1:
        raise ValueError(f"transition index k={k} outside 1..{ctrl.T - 1}")
    grid = rho_k.grid
    y = np.asarray(sys.drift(k, grid.centers), dtype=float) + ctrl.u[k - 1]
    values, _ = _push_masses(rho_k.values, y, grid)
    return DensityVector(grid=grid, values=values)


def interpolate_path(rho1: DensityVector, ctrl: ControllerTable,
                     sys: SystemSpec) -> DensityPath:
    """Roll the controller forward from the initial density."""
    grid = rho1.grid
    T = ctrl.T
    rho = np.empty((T, grid.M))
    clamped = np.empty(T - 1)
    rho[0] = rho1.values
    for k in range(T - 1):
        y = np.asarray(sys.drift(k + 1, grid.centers), dtype=float) + ctrl.u[k]
        rho[k + 1], clamped[k] = _push_masses(rho[k], y, grid)
    return DensityPath(grid=grid, rho=rho, clamped_mass=clamped)


def primal_cost_of_path(path: DensityPath, ctrl: ControllerTable,
                        sys: SystemSpec) -> float:
    """Accumulated stage cost ``sum_k h * <L_k(x, u_k), rho_k>``."""
    grid = path.grid
    total = 0.0
    for k in range(ctrl.T - 1):
        L = np.asarray(sys.lagrangian(k + 1, grid.centers, ctrl.u[k]),
                       dtype=float)
        total += grid.h * float(L @ path.rho[k])
    return total


def monotone_ot_1d(rho_a: DensityVector, rho_b: DensityVector,
                   cost_exponent_p: float) -> float:
    """Quantile-coupling transport cost ``int |Fa^-1 - Fb^-1|^p ds``.

    The monotone rearrangement is the optimal coupling for convex 1D
    costs, so for ``p = 2`` this is the squared Wasserstein-2 distance;
    the integral is a midpoint rule over ``10 * M`` probability samples
    of the piecewise-linear grid CDFs.
    """
    if cost_exponent_p < 1:
        raise ValueError("cost exponent must satisfy p >= 1")
    grid = rho_a.grid
    if rho_b.grid is not grid and (
        rho_b.grid.x_min != grid.x_min
        or rho_b.grid.x_max != grid.x_max
        or rho_b.grid.M != grid.M
    ):
        raise ValueError("densities must live on the same grid")
    nq = 10 * grid.M
    s = (np.arange(nq) + 0.5) / nq
    Fa = _cdf_at_edges(rho_a.values, grid.h)
    Fb = _cdf_at_edges(rho_b.values, grid.h)
    qa = _quantile(Fa, grid.x_min, grid.h, s)
    qb = _quantile(Fb, grid.x_min, grid.h, s)
    return float(np.mean(np.abs(qa - qb) ** cost_exponent_p))
