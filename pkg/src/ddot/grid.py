"""Uniform cell-centered discretization of a compact interval.

The state space is an interval ``[x_min, x_max]`` split into ``M`` cells
of width ``h``; every function of the state is represented by its values
at the cell centers and integrals are taken with the midpoint rule
(weight ``h`` per cell).  This keeps all inner products diagonal, which
is what makes the proximal steps of the splitting solver pointwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Grid1D",
    "DensityVector",
    "build_grid",
    "discretize_gaussian",
    "integrate",
]

# Unit-mass tolerance for discretized densities under midpoint quadrature.
MASS_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Grid1D:
    """Uniform cell-centered grid on ``[x_min, x_max]``.

    Attributes
    ----------
    x_min, x_max : float
        Interval endpoints, ``x_max > x_min``.
    M : int
        Number of cells, at least 2.
    h : float
        Cell width ``(x_max - x_min) / M``.
    centers : numpy.ndarray, shape (M,)
        Cell centers ``x_min + (i + 1/2) h``, strictly increasing.
    """

    x_min: float
    x_max: float
    M: int
    h: float
    centers: np.ndarray

    @property
    def measure(self) -> float:
        """Total length of the interval, ``x_max - x_min``."""
        return self.x_max - self.x_min

    def __post_init__(self):
        if abs(self.measure - self.M * self.h) > 1e-12 * max(1.0, self.measure):
            raise ValueError("grid width inconsistent with M * h")


@dataclass(frozen=True, eq=False)
class DensityVector:
    """Nonnegative grid function with unit integral.

    ``values[i]`` is the density at cell center ``i``; the midpoint-rule
    mass ``h * sum(values)`` must equal 1 to within ``MASS_TOL``.
    """

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.shape != (self.grid.M,):
            raise ValueError(
                f"expected {self.grid.M} density values, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("density values must be finite")
        if np.any(v < 0):
            raise ValueError("density values must be nonnegative")
        mass = self.grid.h * float(v.sum())
        if abs(mass - 1.0) > MASS_TOL:
            raise ValueError(f"density mass {mass!r} is not 1 within {MASS_TOL}")

    @property
    def mass(self) -> float:
        return self.grid.h * float(self.values.sum())


def build_grid(x_min: float, x_max: float, M: int) -> Grid1D:
    """Construct a uniform grid with ``M`` cells on ``[x_min, x_max]``.

    Parameters
    ----------
    x_min, x_max : float
        Finite interval endpoints with ``x_max > x_min``.
    M : int
        Cell count, at least 2.
    """
    if not (math.isfinite(x_min) and math.isfinite(x_max)):
        raise ValueError("grid bounds must be finite")
    if not x_max > x_min:
        raise ValueError(f"need x_max > x_min, got [{x_min}, {x_max}]")
    M = int(M)
    if M < 2:
        raise ValueError(f"need at least 2 cells, got M={M}")
    h = (x_max - x_min) / M
    centers = x_min + (np.arange(M) + 0.5) * h
    centers.flags.writeable = False
    return Grid1D(x_min=float(x_min), x_max=float(x_max), M=M, h=h,
                  centers=centers)


def discretize_gaussian(grid: Grid1D, mean: float, variance: float) -> DensityVector:
    """Truncate a Gaussian to the grid and renormalize to unit mass.

    ``values[i]`` is proportional to ``exp(-(c_i - mean)^2 / (2 variance))``
    and scaled so that the midpoint-rule mass is exactly 1.  The call is
    deterministic: repeated calls with the same arguments are
    bit-identical.

    Raises
    ------
    ValueError
        If ``variance <= 0`` or the distribution lies essentially
        off-grid (unnormalized mass below 1e-12).
    """
    if not math.isfinite(mean):
        raise ValueError("mean must be finite")
    if not (math.isfinite(variance) and variance > 0):
        raise ValueError(f"variance must be positive, got {variance}")
    raw = np.exp(-((grid.centers - mean) ** 2) / (2.0 * variance))
    raw_mass = grid.h * float(raw.sum())
    if raw_mass < 1e-12:
        raise ValueError(
            f"Gaussian({mean}, {variance}) has mass {raw_mass:.3e} on "
            f"[{grid.x_min}, {grid.x_max}]; distribution lies off-grid"
        )
    values = raw / raw_mass
    values.flags.writeable = False
    return DensityVector(grid=grid, values=values)


def integrate(grid: Grid1D, g: np.ndarray) -> float:
    """Midpoint-rule integral ``h * sum(g)`` of a grid function.

    Exact for functions that are affine in the cell centers.
    """
    g = np.asarray(g)
    if g.shape != (grid.M,):
        raise ValueError(f"expected length-{grid.M} vector, got shape {g.shape}")
    return grid.h * float(g.sum())
