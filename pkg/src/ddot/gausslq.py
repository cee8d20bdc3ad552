"""Gaussian-marginal linear-quadratic transport by Riccati shooting.

For ``x_{k+1} = A x_k + B u_k`` with stage cost ``x'Qx + u'Ru`` and
zero-mean Gaussian marginals ``N(0, Sigma_1)``, ``N(0, Sigma_T)``, the
transport value is the supremum of ``Tr(P_1 Sigma_1) - Tr(P_T Sigma_T)``
over quadratic stage value functions ``v_k(x) = x'P_k x`` satisfying a
one-step block LMI.  The supremum is attained on Bellman-equality
solutions, which are determined by the terminal matrix alone through
the backward Riccati recursion

    P_k = Q + A'P_{k+1}A - A'P_{k+1}B (R + B'P_{k+1}B)^{-1} B'P_{k+1}A,

valid while ``R + B'P_{k+1}B`` stays positive definite.  Shooting over
the ``n(n+1)/2`` free entries of ``P_T`` therefore replaces the general
semidefinite program; the LMI is verified after the fact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GaussianLQProblem",
    "RiccatiSolution",
    "RiccatiDomainViolation",
    "InfeasibleStartError",
    "riccati_backward",
    "solve_gaussian",
    "verify_lmi",
    "wasserstein_sdp",
    "gain_synthesis",
    "bures_wasserstein",
]

# Positive-definiteness floor for R + B'PB along the recursion.
_DOMAIN_EIG_FLOOR = 1e-10


class InfeasibleStartError(RuntimeError):
    """No shooting start produced a usable ascent direction."""


def _as_matrix(x, shape, name):
    a = np.array(x, dtype=float)
    if a.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")
    return a


def _check_symmetric(a, name, tol=1e-10):
    scale = max(1.0, float(np.abs(a).max()))
    if float(np.abs(a - a.T).max()) > tol * scale:
        raise ValueError(f"{name} must be symmetric")


@dataclass(frozen=True, eq=False)
class GaussianLQProblem:
    """Linear system, quadratic cost and zero-mean Gaussian marginals.

    Requires symmetric ``Q`` with eigenvalues >= -1e-10, symmetric ``R``
    with eigenvalues >= 1e-10, symmetric positive definite covariances,
    invertible ``A``, and reachability of the full state space within
    the horizon: ``rank([B, AB, ..., A^{min(T-1,n)-1} B]) = n``.
    Marginals are centered by definition; nonzero means are outside this
    model and rejected wherever means can be supplied (see the CLI).
    """

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Sigma1: np.ndarray
    SigmaT: np.ndarray
    T: int

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be a square matrix")
        n = A.shape[0]
        B = np.array(self.B, dtype=float)
        if B.ndim != 2 or B.shape[0] != n:
            raise ValueError(f"B must have {n} rows")
        m = B.shape[1]
        Q = _as_matrix(self.Q, (n, n), "Q")
        R = _as_matrix(self.R, (m, m), "R")
        S1 = _as_matrix(self.Sigma1, (n, n), "Sigma1")
        ST = _as_matrix(self.SigmaT, (n, n), "SigmaT")
        _as_matrix(A, (n, n), "A")
        _check_symmetric(Q, "Q")
        _check_symmetric(R, "R")
        _check_symmetric(S1, "Sigma1")
        _check_symmetric(ST, "SigmaT")
        if np.linalg.eigvalsh(0.5 * (Q + Q.T)).min() < -1e-10:
            raise ValueError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(0.5 * (R + R.T)).min() < 1e-10:
            raise ValueError("R must be positive definite")
        for name, S in (("Sigma1", S1), ("SigmaT", ST)):
            if np.linalg.eigvalsh(0.5 * (S + S.T)).min() <= 0:
                raise ValueError(f"{name} must be positive definite")
        if int(self.T) != self.T or self.T < 2:
            raise ValueError("horizon T must be an integer >= 2")
        if np.linalg.matrix_rank(A) < n:
            raise ValueError("A must be invertible")
        steps = min(self.T - 1, n)
        blocks = [B]
        for _ in range(steps - 1):
            blocks.append(A @ blocks[-1])
        if np.linalg.matrix_rank(np.hstack(blocks)) < n:
            raise ValueError(
                "state space is not reachable within the horizon "
                f"(rank of the {steps}-step controllability matrix < {n})"
            )

    @property
    def n(self) -> int:
        return np.asarray(self.A).shape[0]

    @property
    def m(self) -> int:
        return np.asarray(self.B).shape[1]


@dataclass(frozen=True, eq=False)
class RiccatiDomainViolation:
    """First backward stage at which ``R + B'P_{k+1}B`` loses definiteness."""

    stage: int
    min_eig: float


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    """Backward Riccati sweep: matrices ``P_1..P_T``, gains, and value."""

    P: list
    gains: list
    value: float


def riccati_backward(prob: GaussianLQProblem, P_T: np.ndarray
                     ) -> RiccatiSolution | RiccatiDomainViolation:
    """Run the equality-case backward recursion from a terminal matrix.

    Returns a :class:`RiccatiDomainViolation` (not an exception; the
    shooting optimizer treats it as a barrier) identifying the first
    stage ``k`` where ``R + B'P_{k+1}B`` has an eigenvalue below 1e-10.
    """
    A = np.asarray(prob.A, dtype=float)
    B = np.asarray(prob.B, dtype=float)
    Q = np.asarray(prob.Q, dtype=float)
    R = np.asarray(prob.R, dtype=float)
    P_T = np.asarray(P_T, dtype=float)
    _check_symmetric(P_T, "P_T", tol=1e-8)
    T = prob.T
    P = [None] * T
    gains = [None] * (T - 1)
    P[T - 1] = 0.5 * (P_T + P_T.T)
    for k in range(T - 1, 0, -1):  # 1-based transition index
        P_next = P[k]
        S = R + B.T @ P_next @ B
        S = 0.5 * (S + S.T)
        min_eig = float(np.linalg.eigvalsh(S).min())
        if min_eig < _DOMAIN_EIG_FLOOR:
            return RiccatiDomainViolation(stage=k, min_eig=min_eig)
        G = np.linalg.solve(S, B.T @ P_next @ A)
        gains[k - 1] = G
        Pk = Q + A.T @ P_next @ A - A.T @ P_next @ B @ G
        P[k - 1] = 0.5 * (Pk + Pk.T)
    value = float(np.trace(P[0] @ np.asarray(prob.Sigma1))
                  - np.trace(P[T - 1] @ np.asarray(prob.SigmaT)))
    return RiccatiSolution(P=P, gains=gains, value=value)


def _vec(P, n):
    return P[np.triu_indices(n)]


def _mat(p, n):
    P = np.zeros((n, n))
    iu = np.triu_indices(n)
    P[iu] = p
    P.T[iu] = p
    return P


def _value(prob, p, n):
    sol = riccati_backward(prob, _mat(p, n))
    if isinstance(sol, RiccatiDomainViolation):
        return -math.inf
    return sol.value


def _solve_gaussian_info(prob: GaussianLQProblem, max_outer: int = 5000,
                         grad_tol: float = 1e-7):
    n = prob.n
    nv = n * (n + 1) // 2
    starts = [np.zeros((n, n)), 0.1 * np.eye(n), -0.1 * np.eye(n)]
    best_val = -math.inf
    best_p = None
    total_outer = 0
    grad_converged = False
    any_start = False
    for P0 in starts:
        p = _vec(P0, n)
        f = _value(prob, p, n)
        if not math.isfinite(f):
            continue
        any_start = True
        step = 1.0
        hit_tol = False
        for _ in range(max_outer):
            total_outer += 1
            P_cur = _mat(p, n)
            fd = 1e-6 * (1.0 + float(np.linalg.norm(P_cur)))
            grad = np.zeros(nv)
            for idx in range(nv):
                e = np.zeros(nv)
                e[idx] = fd
                fp = _value(prob, p + e, n)
                fm = _value(prob, p - e, n)
                if math.isfinite(fp) and math.isfinite(fm):
                    grad[idx] = (fp - fm) / (2 * fd)
                elif math.isfinite(fp):
                    grad[idx] = (fp - f) / fd
                elif math.isfinite(fm):
                    grad[idx] = (f - fm) / fd
            if float(np.abs(grad).max()) <= grad_tol:
                hit_tol = True
                break
            t = step
            ascended = False
            for _ in range(60):
                f_try = _value(prob, p + t * grad, n)
                if math.isfinite(f_try) and f_try > f:
                    ascended = True
                    break
                t *= 0.5
            if not ascended:
                break
            p = p + t * grad
            f = f_try
            step = 2.0 * t
        if f > best_val:
            best_val = f
            best_p = p.copy()
            grad_converged = hit_tol
    if not any_start:
        raise InfeasibleStartError(
            "no shooting start (0, +0.1 I, -0.1 I) lies in the Riccati domain"
        )
    sol = riccati_backward(prob, _mat(best_p, n))
    assert isinstance(sol, RiccatiSolution)
    return sol, total_outer, grad_converged


def solve_gaussian(prob: GaussianLQProblem, max_outer: int = 5000,
                   grad_tol: float = 1e-7) -> RiccatiSolution:
    """Maximize ``Tr(P_1 Sigma_1) - Tr(P_T Sigma_T)`` over terminal matrices.

    Gradient ascent on the free entries of ``P_T`` with central
    finite-difference gradients (step ``1e-6 * (1 + |P_T|)``) and a
    backtracking line search that halves until ascent; domain violations
    act as a barrier.  Starts from ``P_T = 0`` and the fallbacks
    ``+-0.1 I`` in fixed order and returns the best iterate.

    Raises
    ------
    InfeasibleStartError
        If every start lies outside the Riccati domain.
    """
    sol, _, _ = _solve_gaussian_info(prob, max_outer=max_outer,
                                     grad_tol=grad_tol)
    return sol


def verify_lmi(prob: GaussianLQProblem, sol) -> tuple[bool, float]:
    """Check the one-step block LMI for a solution or a list of P_k.

    Assembles, for every transition,

        [[R + B'P_{k+1}B,  B'P_{k+1}A],
         [A'P_{k+1}B,      A'P_{k+1}A - P_k + Q]]

    and returns ``(margin >= -1e-8, margin)`` where ``margin`` is the
    smallest eigenvalue over all stages.  Accepts externally supplied
    value matrices, so general sub-solution candidates can be tested.
    """
    P_list = sol.P if isinstance(sol, RiccatiSolution) else list(sol)
    A = np.asarray(prob.A, dtype=float)
    B = np.asarray(prob.B, dtype=float)
    Q = np.asarray(prob.Q, dtype=float)
    R = np.asarray(prob.R, dtype=float)
    if len(P_list) != prob.T:
        raise ValueError(f"expected {prob.T} value matrices, got {len(P_list)}")
    margin = math.inf
    for k in range(prob.T - 1):
        P_next = np.asarray(P_list[k + 1], dtype=float)
        P_cur = np.asarray(P_list[k], dtype=float)
        block = np.block([
            [R + B.T @ P_next @ B, B.T @ P_next @ A],
            [A.T @ P_next @ B, A.T @ P_next @ A - P_cur + Q],
        ])
        block = 0.5 * (block + block.T)
        margin = min(margin, float(np.linalg.eigvalsh(block).min()))
    return margin >= -1e-8, margin


def wasserstein_sdp(Sigma1: np.ndarray, Sigma2: np.ndarray) -> float:
    """Squared Wasserstein-2 distance between centered Gaussians.

    Solved as the one-step transport problem ``x_2 = x_1 + u`` with cost
    ``|u|^2`` (A = B = I, Q = 0, R = I, T = 2) via :func:`solve_gaussian`.
    """
    S1 = np.atleast_2d(np.asarray(Sigma1, dtype=float))
    S2 = np.atleast_2d(np.asarray(Sigma2, dtype=float))
    n = S1.shape[0]
    prob = GaussianLQProblem(A=np.eye(n), B=np.eye(n), Q=np.zeros((n, n)),
                             R=np.eye(n), Sigma1=S1, SigmaT=S2, T=2)
    return solve_gaussian(prob).value


def gain_synthesis(sol: RiccatiSolution, prob: GaussianLQProblem
                   ) -> tuple[list, list]:
    """Feedback gains and the covariance path they steer.

    Returns ``(gains, covariances)`` with
    ``Sigma_{k+1} = (A - B G_k) Sigma_k (A - B G_k)'`` starting from
    ``Sigma_1``; at an optimal solution the final covariance reproduces
    ``Sigma_T``.
    """
    A = np.asarray(prob.A, dtype=float)
    B = np.asarray(prob.B, dtype=float)
    covs = [np.array(prob.Sigma1, dtype=float)]
    for k in range(prob.T - 1):
        Acl = A - B @ sol.gains[k]
        S_next = Acl @ covs[-1] @ Acl.T
        covs.append(0.5 * (S_next + S_next.T))
    return list(sol.gains), covs


def bures_wasserstein(Sigma1: np.ndarray, Sigma2: np.ndarray) -> float:
    """Closed-form squared W2 between centered Gaussians.

    ``Tr(S1 + S2 - 2 (S1^{1/2} S2 S1^{1/2})^{1/2})`` with matrix square
    roots by symmetric eigendecomposition (eigenvalue floor 1e-14).
    """
    S1 = np.atleast_2d(np.asarray(Sigma1, dtype=float))
    S2 = np.atleast_2d(np.asarray(Sigma2, dtype=float))

    def sqrtm_sym(S):
        w, V = np.linalg.eigh(0.5 * (S + S.T))
        return (V * np.sqrt(np.maximum(w, 1e-14))) @ V.T

    root1 = sqrtm_sym(S1)
    cross = sqrtm_sym(root1 @ S2 @ root1)
    return float(np.trace(S1 + S2 - 2.0 * cross))
