"""The dynamic-programming oracle behind the verification suite.

cost_to_go chains the one-step grid costs by backward value iteration,
giving the exact optimum over grid-restricted paths.  For identity
drift with cost u^2 the multi-step cost obeys the equal-step law
(x - y)^2 / (T - 1) whenever the intermediate points land on the grid,
which independently confirms how the splitting solver's optimal value
scales with the horizon.
"""

import numpy as np

from ddot.dynamics import (SystemSpec, cost_to_go, identity_drift,
                           quadratic_control_cost)
from ddot.grid import build_grid

g = build_grid(0.0, 1.0, 9)
for T in (2, 3, 5):
    sys = SystemSpec(T=T, drift=identity_drift(),
                     lagrangian=quadratic_control_cost())
    table = cost_to_go(sys, g)
    i, j = 0, 8  # endpoints 0.0555... and 0.9444...; gap divisible by 4 cells
    dx = g.centers[j] - g.centers[i]
    print(f"T={T}: c[{i},{j}] = {table.c[i, j]:.6f}   "
          f"equal-step law: {dx * dx / (T - 1):.6f}")

# Monotonicity: making any single transition more expensive can only
# increase (never decrease) the chained costs.
rng = np.random.default_rng(0)
sys = SystemSpec(T=3, drift=identity_drift(),
                 lagrangian=quadratic_control_cost())
base = cost_to_go(sys, g).c
sys_pricier = SystemSpec(
    T=3, drift=identity_drift(),
    lagrangian=lambda k, x, u: u**2 + 0.05 * (k == 2) * np.ones_like(x + u))
pricier = cost_to_go(sys_pricier, g).c
print("monotone under cost increases:", bool(np.all(pricier >= base - 1e-15)))
