"""The coupling operator, its adjoint, and the step-size certificate.

The solver iterates with the operator (Kv)[k](x, y) = v_k(x) - v_{k+1}(y)
and its quadrature-weighted adjoint.  Its norm controls the admissible
step sizes, and the power-iteration estimate can be checked against a
closed form: stage-constant fields feel the path-graph Laplacian, so

    |K|^2 = measure * max(2, 4 cos^2(pi / (2 T))).
"""

import numpy as np

from ddot.cpsolver import op_K, op_K_adjoint, operator_norm_sq
from ddot.grid import build_grid

rng = np.random.default_rng(0)

# The adjoint identity <Kv, lam> = <v, K* lam> holds to machine precision
# under the weighted pairings (h^2 on transitions, h on stages).
T, M, h = 4, 30, 0.1
v = rng.standard_normal((T, M))
lam = rng.standard_normal((T - 1, M, M))
lhs = h * h * (op_K(v) * lam).sum()
rhs = h * (v * op_K_adjoint(lam, h)).sum()
print(f"<Kv, lam> = {lhs:.12f}")
print(f"<v, K*lam> = {rhs:.12f}")

# Power iteration vs. the closed form, for several horizons.  The upper
# bound 4 * measure is approached only as T grows; at T = 2 there are no
# interior stages and the norm collapses to 2 * measure.
g = build_grid(0.0, 3.0, 150)
for T in (2, 3, 5, 10, 40):
    est = operator_norm_sq(g, T)
    closed = g.measure * max(2.0, 4.0 * np.cos(np.pi / (2 * T)) ** 2)
    print(f"T={T:3d}: power iteration {est:9.5f}   closed form {closed:9.5f}"
          f"   4*measure = {4 * g.measure}")
