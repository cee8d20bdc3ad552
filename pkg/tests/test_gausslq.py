import numpy as np
import pytest

from ddot.cpsolver import CPParams, solve
from ddot.dynamics import SystemSpec, identity_drift, quadratic_control_cost
from ddot.gausslq import (
    GaussianLQProblem,
    RiccatiDomainViolation,
    RiccatiSolution,
    bures_wasserstein,
    gain_synthesis,
    riccati_backward,
    solve_gaussian,
    verify_lmi,
    wasserstein_sdp,
)
from ddot.grid import build_grid, discretize_gaussian


def scalar_problem(sigma1_sq, sigmaT_sq, T=2, a=1.0, b=1.0, q=0.0, r=1.0):
    return GaussianLQProblem(
        A=np.array([[a]]), B=np.array([[b]]), Q=np.array([[q]]),
        R=np.array([[r]]), Sigma1=np.array([[sigma1_sq]]),
        SigmaT=np.array([[sigmaT_sq]]), T=T,
    )


def rand_spd(rng, n):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eigs = np.exp(rng.uniform(np.log(0.4), np.log(2.5), n))
    return Q @ np.diag(eigs) @ Q.T


def test_riccati_scalar_recursion():
    prob = scalar_problem(1.0, 4.0)
    for p in (0.8, 0.1, -0.3):
        sol = riccati_backward(prob, np.array([[p]]))
        assert isinstance(sol, RiccatiSolution)
        assert sol.P[0][0, 0] == pytest.approx(p / (1 + p), rel=1e-12)


def test_riccati_admits_indefinite_terminal():
    sol = riccati_backward(scalar_problem(1.0, 4.0), np.array([[-0.5]]))
    assert isinstance(sol, RiccatiSolution)
    assert sol.P[0][0, 0] == pytest.approx(-1.0, rel=1e-12)


def test_riccati_zero_terminal_fixed_point():
    prob = scalar_problem(1.0, 4.0, T=5)
    sol = riccati_backward(prob, np.zeros((1, 1)))
    assert isinstance(sol, RiccatiSolution)
    for P in sol.P:
        assert P[0, 0] == 0.0
    assert sol.value == 0.0


def test_riccati_domain_violation_stage():
    sol = riccati_backward(scalar_problem(1.0, 4.0), np.array([[-1.5]]))
    assert isinstance(sol, RiccatiDomainViolation)
    assert sol.stage == 1
    assert sol.min_eig == pytest.approx(-0.5)
    # with three stages the violation can appear after one good step:
    # P2 = p/(1+p) < -1 for p in (-1, -1/2)
    sol3 = riccati_backward(scalar_problem(1.0, 4.0, T=3),
                            np.array([[-0.75]]))
    assert isinstance(sol3, RiccatiDomainViolation)
    assert sol3.stage == 1


def test_riccati_invariants():
    rng = np.random.default_rng(12)
    A = np.array([[1.0, 0.2], [0.0, 0.9]])
    B = np.array([[0.5, 0.0], [0.1, 1.0]])
    Q = 0.1 * np.eye(2)
    prob = GaussianLQProblem(A=A, B=B, Q=Q, R=np.eye(2),
                             Sigma1=rand_spd(rng, 2), SigmaT=rand_spd(rng, 2),
                             T=4)
    PT = 0.3 * rand_spd(rng, 2) - 0.2 * np.eye(2)
    sol = riccati_backward(prob, PT)
    assert isinstance(sol, RiccatiSolution)
    for k in range(3):
        P_next = sol.P[k + 1]
        S = np.eye(2) + B.T @ P_next @ B
        assert np.linalg.eigvalsh(S).min() >= 1e-10
        rhs = Q + A.T @ P_next @ A - A.T @ P_next @ B @ np.linalg.inv(S) \
            @ B.T @ P_next @ A
        np.testing.assert_allclose(sol.P[k], rhs, atol=1e-8)
        np.testing.assert_allclose(sol.P[k], sol.P[k].T, atol=1e-10)


def test_solve_gaussian_scalar_benchmark():
    sol = solve_gaussian(scalar_problem(1.0, 4.0))
    assert sol.value == pytest.approx(1.0, abs=1e-4)
    assert sol.P[1][0, 0] == pytest.approx(-0.5, abs=1e-4)


def test_solve_gaussian_identical_marginals():
    sol = solve_gaussian(scalar_problem(2.0, 2.0))
    assert sol.value == pytest.approx(0.0, abs=1e-6)
    assert abs(sol.P[1][0, 0]) <= 1e-4


def test_solve_gaussian_matches_bures():
    rng = np.random.default_rng(21)
    for n in (1, 2, 3):
        S1, S2 = rand_spd(rng, n), rand_spd(rng, n)
        prob = GaussianLQProblem(A=np.eye(n), B=np.eye(n),
                                 Q=np.zeros((n, n)), R=np.eye(n),
                                 Sigma1=S1, SigmaT=S2, T=2)
        sol = solve_gaussian(prob)
        assert sol.value == pytest.approx(bures_wasserstein(S1, S2), rel=1e-6)


def test_bures_against_scipy():
    from scipy.linalg import sqrtm

    rng = np.random.default_rng(33)
    for n in (2, 3):
        S1, S2 = rand_spd(rng, n), rand_spd(rng, n)
        r1 = sqrtm(S1)
        ref = float(np.trace(S1 + S2 - 2 * sqrtm(r1 @ S2 @ r1).real))
        assert bures_wasserstein(S1, S2) == pytest.approx(ref, rel=1e-10)


def test_problem_validation():
    ok = dict(A=np.eye(2), B=np.eye(2), Q=np.zeros((2, 2)), R=np.eye(2),
              Sigma1=np.eye(2), SigmaT=np.eye(2), T=2)
    GaussianLQProblem(**ok)
    with pytest.raises(ValueError, match="symmetric"):
        GaussianLQProblem(**{**ok, "Q": np.array([[0.0, 1.0], [0.0, 0.0]])})
    with pytest.raises(ValueError, match="positive definite"):
        GaussianLQProblem(**{**ok, "R": np.zeros((2, 2))})
    with pytest.raises(ValueError, match="positive definite"):
        GaussianLQProblem(**{**ok, "Sigma1": np.zeros((2, 2))})
    with pytest.raises(ValueError, match="invertible"):
        GaussianLQProblem(**{**ok, "A": np.array([[1.0, 0.0], [1.0, 0.0]])})
    with pytest.raises(ValueError, match="reachable"):
        GaussianLQProblem(**{**ok, "B": np.array([[0.0], [0.0]]),
                             "R": np.eye(1)})
    with pytest.raises(ValueError, match="T must be"):
        GaussianLQProblem(**{**ok, "T": 1})


def test_reachability_depends_on_horizon():
    # single-input chain needs two transitions to reach the full plane
    kwargs = dict(A=np.array([[1.0, 1.0], [0.0, 1.0]]),
                  B=np.array([[0.0], [1.0]]), Q=np.zeros((2, 2)),
                  R=np.eye(1), Sigma1=np.eye(2), SigmaT=np.eye(2))
    GaussianLQProblem(**kwargs, T=3)
    with pytest.raises(ValueError, match="reachable"):
        GaussianLQProblem(**kwargs, T=2)


def test_verify_lmi_on_equality_solutions():
    prob = scalar_problem(1.0, 4.0, T=4)
    sol = riccati_backward(prob, np.array([[-0.2]]))
    ok, margin = verify_lmi(prob, sol)
    assert ok and margin >= -1e-8


def test_verify_lmi_detects_inflation():
    prob = scalar_problem(1.0, 4.0, T=3)
    sol = riccati_backward(prob, np.array([[-0.3]]))
    P_bad = [P.copy() for P in sol.P]
    P_bad[1] = P_bad[1] + 0.1  # inflate the interior stage
    ok, margin = verify_lmi(prob, P_bad)
    assert not ok and margin < -1e-3


def test_verify_lmi_zero_solution_psd_blocks():
    prob = scalar_problem(1.0, 4.0, T=3, q=0.5)
    ok, margin = verify_lmi(prob, [np.zeros((1, 1))] * 3)
    assert ok and margin >= 0.0


def test_wasserstein_sdp_examples():
    assert wasserstein_sdp(np.eye(2), np.eye(2)) == pytest.approx(0.0, abs=1e-6)
    assert wasserstein_sdp([[1.0]], [[4.0]]) == pytest.approx(1.0, abs=1e-4)
    val = wasserstein_sdp(np.diag([1.0, 4.0]), np.diag([9.0, 1.0]))
    assert val == pytest.approx(5.0, rel=1e-4)


def test_gain_synthesis_scalar_benchmark():
    prob = scalar_problem(1.0, 4.0)
    sol = solve_gaussian(prob)
    gains, covs = gain_synthesis(sol, prob)
    assert 1.0 - gains[0][0, 0] == pytest.approx(2.0, abs=1e-3)
    assert covs[-1][0, 0] == pytest.approx(4.0, rel=1e-4)


def test_gain_synthesis_identity_case():
    prob = scalar_problem(3.0, 3.0)
    sol = solve_gaussian(prob)
    gains, covs = gain_synthesis(sol, prob)
    assert abs(gains[0][0, 0]) <= 1e-4
    assert covs[-1][0, 0] == pytest.approx(3.0, rel=1e-4)


def test_gain_synthesis_steers_covariance():
    rng = np.random.default_rng(5)
    for n in (2, 3):
        S1, S2 = rand_spd(rng, n), rand_spd(rng, n)
        prob = GaussianLQProblem(A=np.eye(n), B=np.eye(n),
                                 Q=np.zeros((n, n)), R=np.eye(n),
                                 Sigma1=S1, SigmaT=S2, T=2)
        sol = solve_gaussian(prob)
        _, covs = gain_synthesis(sol, prob)
        err = np.linalg.norm(covs[-1] - S2) / np.linalg.norm(S2)
        assert err <= 1e-4


def test_grid_cross_check_scalar():
    # the grid solver prices the same scalar instance within 2%
    sigma1_sq, sigmaT_sq = 0.25, 1.0
    lq_value = solve_gaussian(scalar_problem(sigma1_sq, sigmaT_sq)).value
    g = build_grid(-5.0, 5.0, 250)
    rho1 = discretize_gaussian(g, 0.0, sigma1_sq)
    rhoT = discretize_gaussian(g, 0.0, sigmaT_sq)
    sys = SystemSpec(T=2, drift=identity_drift(),
                     lagrangian=quadratic_control_cost())
    from ddot.cpsolver import operator_norm_sq

    base = 0.95 / np.sqrt(operator_norm_sq(g, 2))
    params = CPParams(tau=4 * base, sigma=base / 4, max_iter=30000)
    _, _, report = solve(sys, g, rho1, rhoT, params)
    assert report.converged
    assert report.optimal_value == pytest.approx(lq_value, rel=0.02)


def test_quadratic_ansatz_is_unimprovable_on_grid():
    # value functions from the converged quadratic solution, perturbed in
    # random bounded non-quadratic directions and clipped back to
    # feasibility by a backward transform, never improve the objective
    sigma1, sigmaT = 0.5, 1.0
    P2 = sigma1 / sigmaT - 1.0
    P1 = P2 / (1.0 + P2)
    M = 5000
    g = build_grid(-5.0, 5.0, M)
    rho1 = discretize_gaussian(g, 0.0, sigma1**2)
    rhoT = discretize_gaussian(g, 0.0, sigmaT**2)
    v1 = P1 * g.centers**2
    vT = P2 * g.centers**2
    D_star = g.h * (v1 @ rho1.values - vT @ rhoT.values)
    assert D_star == pytest.approx((sigma1 - sigmaT) ** 2, abs=1e-4)
    rng = np.random.default_rng(3)
    for _ in range(10):
        d1 = np.zeros(M)
        dT = np.zeros(M)
        for _ in range(4):
            fq = rng.uniform(0.3, 3.0, 2)
            ph = rng.uniform(0, 2 * np.pi, 2)
            amp = rng.uniform(-1, 1, 2)
            d1 += amp[0] * np.sin(fq[0] * g.centers + ph[0])
            dT += amp[1] * np.sin(fq[1] * g.centers + ph[1])
        eps = 1e-3
        w1 = v1 + eps * d1
        wT = vT + eps * dT
        # clip w1 below the backward transform of the perturbed terminal
        w1_proj = np.empty(M)
        chunk = 500
        for s in range(0, M, chunk):
            e = min(s + chunk, M)
            cost = (g.centers[None, s:e] - g.centers[:, None]) ** 2
            w1_proj[s:e] = np.minimum(w1[s:e], (cost + wT[:, None]).min(axis=0))
        D_pert = g.h * (w1_proj @ rho1.values - wT @ rhoT.values)
        assert D_pert <= D_star + 1e-6
