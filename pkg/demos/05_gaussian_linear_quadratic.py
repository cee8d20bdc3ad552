"""Linear-quadratic transport between centered Gaussians.

For linear dynamics with quadratic cost the stage value functions can
be taken quadratic, which collapses the whole problem to a shooting
search over the terminal matrix of a backward Riccati recursion.  On
the one-step benchmark the value reproduces the Bures closed form, and
the synthesized gains steer the covariance onto the target exactly.
"""

import numpy as np

from ddot.gausslq import (GaussianLQProblem, bures_wasserstein,
                          gain_synthesis, solve_gaussian, verify_lmi,
                          wasserstein_sdp)

# Scalar benchmark: variances 1 -> 4, one transition, cost u^2.
print("squared W2 between N(0,1) and N(0,4):",
      wasserstein_sdp([[1.0]], [[4.0]]), "(closed form: 1)")

# A 2D pair: shooting vs. the Bures formula.
rng = np.random.default_rng(1)
Q_rot, _ = np.linalg.qr(rng.standard_normal((2, 2)))
S1 = Q_rot @ np.diag([0.5, 2.0]) @ Q_rot.T
Q_rot, _ = np.linalg.qr(rng.standard_normal((2, 2)))
S2 = Q_rot @ np.diag([1.5, 0.8]) @ Q_rot.T
print("2D shooting value :", wasserstein_sdp(S1, S2))
print("2D Bures value    :", bures_wasserstein(S1, S2))

# A genuine dynamic instance: rotation-ish drift, scalar input, state
# penalty, four stages.
prob = GaussianLQProblem(
    A=np.array([[1.0, 0.1], [-0.1, 1.0]]),
    B=np.array([[0.0], [1.0]]),
    Q=0.05 * np.eye(2),
    R=np.eye(1),
    Sigma1=S1,
    SigmaT=S2,
    T=4,
)
sol = solve_gaussian(prob)
print("dynamic instance value:", sol.value)
ok, margin = verify_lmi(prob, sol)
print(f"one-step LMI verified: {ok} (margin {margin:.2e})")
gains, covs = gain_synthesis(sol, prob)
err = np.linalg.norm(covs[-1] - S2) / np.linalg.norm(S2)
print(f"covariance steering relative error: {err:.2e}")
