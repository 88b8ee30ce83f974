"""Dense convex QP solver with KKT certification.

Public API:
    QpProblem, QpSolution
    ActiveSetSolver().solve(problem, max_iter)
    solve(problem, max_iter)      # convenience wrapper around a fresh solver
    check_kkt(problem, solution)  # max KKT residual (∞-norm per condition)

Problem form: minimise ½zᵀQz + cᵀz subject to A_ineq·z ≤ b_ineq, A_eq·z = b_eq.
Multipliers follow the Lagrangian ½zᵀQz + cᵀz + λᵀ(Az − b), so λ_ineq ≥ 0.

The iteration is the dual active-set scheme of Goldfarb and Idnani: start at the
unconstrained minimiser, repeatedly add the most violated constraint, and drop
active constraints whose multipliers would turn negative. A violated constraint
whose normal lies in the span of the active set takes a dual step only and drops
the blocking constraint; if no inequality multiplier can decrease, the dual ray
is unbounded, which certifies the problem infeasible. Active normals are kept in
a QR-type factorisation updated by Givens rotations, so dependent constraints
are detected and never factored.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from loguru import logger
from scipy.linalg import solve_triangular

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITERATIONS = "max-iterations"

KKT_TOLERANCE = 1e-6
_FEAS_TOL = 1e-10
_PIVOT_FLOOR = 1e-10
_REGULARIZATION = 1e-9
_DEPENDENT_TOL = 1e-12

MAX_VARIABLES = 64
MAX_CONSTRAINTS = 256


@dataclass(frozen=True)
class QpProblem:
    Q: np.ndarray
    c: np.ndarray
    A_ineq: np.ndarray
    b_ineq: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray

    def __post_init__(self):
        n = self.c.shape[0]
        if self.Q.shape != (n, n):
            raise ValueError(f"Q has shape {self.Q.shape}, expected {(n, n)}")
        if self.A_ineq.shape != (self.b_ineq.shape[0], n):
            raise ValueError(f"A_ineq has shape {self.A_ineq.shape}, expected ({self.b_ineq.shape[0]}, {n})")
        if self.A_eq.shape != (self.b_eq.shape[0], n):
            raise ValueError(f"A_eq has shape {self.A_eq.shape}, expected ({self.b_eq.shape[0]}, {n})")
        if np.max(np.abs(self.Q - self.Q.T), initial=0.0) > 1e-12:
            raise ValueError("Q is not symmetric within 1e-12")
        if n > MAX_VARIABLES or self.n_constraints > MAX_CONSTRAINTS:
            raise ValueError(f"problem too large: n={n}, m+p={self.n_constraints}")

    @classmethod
    def build(cls, Q, c, A_ineq=None, b_ineq=None, A_eq=None, b_eq=None) -> "QpProblem":
        """Fill absent constraint blocks with empty arrays of the right width."""
        c = np.asarray(c, dtype=float).reshape(-1)
        n = c.shape[0]
        A_ineq = np.zeros((0, n)) if A_ineq is None else np.atleast_2d(np.asarray(A_ineq, dtype=float))
        b_ineq = np.zeros(0) if b_ineq is None else np.asarray(b_ineq, dtype=float).reshape(-1)
        A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
        b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
        return cls(np.asarray(Q, dtype=float), c, A_ineq, b_ineq, A_eq, b_eq)

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def m(self) -> int:
        return self.b_ineq.shape[0]

    @property
    def p(self) -> int:
        return self.b_eq.shape[0]

    @property
    def n_constraints(self) -> int:
        return self.m + self.p

    def objective(self, z: np.ndarray) -> float:
        return float(0.5 * z @ self.Q @ z + self.c @ z)


@dataclass(frozen=True)
class QpSolution:
    z: np.ndarray
    lam: np.ndarray  # inequality multipliers first, then equality
    status: str
    kkt_residual: float
    iterations: int = 0
    active_set: tuple[int, ...] = ()
    regularized: bool = False
    objective: float = math.nan

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def check_kkt(problem: QpProblem, solution: QpSolution) -> float:
    """
    Max of stationarity ‖Qz + c + Aᵀλ‖∞, primal violation, dual negativity and
    complementarity |λᵢ(Az − b)ᵢ| over the inequalities.
    """
    z = np.asarray(solution.z, dtype=float)
    lam_in = solution.lam[: problem.m]
    lam_eq = solution.lam[problem.m:]
    grad = problem.Q @ z + problem.c + problem.A_ineq.T @ lam_in + problem.A_eq.T @ lam_eq
    slack = problem.A_ineq @ z - problem.b_ineq
    terms = [np.max(np.abs(grad), initial=0.0)]
    terms.append(np.max(np.maximum(slack, 0.0), initial=0.0))
    terms.append(np.max(np.abs(problem.A_eq @ z - problem.b_eq), initial=0.0))
    terms.append(np.max(np.maximum(-lam_in, 0.0), initial=0.0))
    terms.append(np.max(np.abs(lam_in * slack), initial=0.0))
    return float(max(terms))


class ActiveSetSolver:
    """
    Holds the factorisation workspace for one thread. Problems and solutions are
    immutable values and may be shared freely.

    Workspace invariant while constraints are active: with N the matrix of
    active normals (one column each, in activation order), Jᵀ·N = [R; 0] with R
    upper triangular, and J·Jᵀ = Q⁻¹.
    """

    def __init__(self, max_iter: int = 200):
        self.max_iter = max_iter
        self._J = np.zeros((0, 0))
        self._R = np.zeros((0, 0))
        self._q = 0

    def _factor(self, Q: np.ndarray) -> bool:
        """J = L⁻ᵀ for Q = LLᵀ, adding 1e-9·I when a pivot is too small. Returns True if regularised."""
        n = Q.shape[0]
        regularized = False
        try:
            L = np.linalg.cholesky(Q)
            if np.min(np.diag(L), initial=1.0) ** 2 < _PIVOT_FLOOR:
                raise np.linalg.LinAlgError("pivot below floor")
        except np.linalg.LinAlgError:
            logger.warning("QP Hessian near-singular; adding {}·I", _REGULARIZATION)
            L = np.linalg.cholesky(Q + _REGULARIZATION * np.eye(n))
            regularized = True
        self._J = solve_triangular(L, np.eye(n), lower=True).T
        self._R = np.zeros((n, n))
        self._q = 0
        return regularized

    # --- Factorisation updates ---

    def _rotate_columns(self, i: int, j: int, cc: float, ss: float) -> None:
        Ji, Jj = self._J[:, i].copy(), self._J[:, j].copy()
        self._J[:, i] = cc * Ji + ss * Jj
        self._J[:, j] = -ss * Ji + cc * Jj

    def _add(self, d: np.ndarray) -> None:
        """Append the normal whose transformed vector is d = Jᵀnₚ. Its part beyond q must be nonzero."""
        q = self._q
        d = d.copy()
        for j in range(d.shape[0] - 1, q, -1):
            h = math.hypot(d[j - 1], d[j])
            if h == 0.0:
                continue
            cc, ss = d[j - 1] / h, d[j] / h
            d[j - 1], d[j] = h, 0.0
            self._rotate_columns(j - 1, j, cc, ss)
        self._R[: q + 1, q] = d[: q + 1]
        self._q = q + 1

    def _drop(self, k: int) -> None:
        """Remove the k-th active normal and restore R to upper triangular form."""
        q = self._q
        R = self._R
        R[:, k:q - 1] = R[:, k + 1:q].copy()
        R[:, q - 1] = 0.0
        for j in range(k, q - 1):
            h = math.hypot(R[j, j], R[j + 1, j])
            if h == 0.0:
                continue
            cc, ss = R[j, j] / h, R[j + 1, j] / h
            Rj, Rj1 = R[j, :].copy(), R[j + 1, :].copy()
            R[j, :] = cc * Rj + ss * Rj1
            R[j + 1, :] = -ss * Rj + cc * Rj1
            R[j + 1, j] = 0.0
            self._rotate_columns(j, j + 1, cc, ss)
        self._q = q - 1

    def _directions(self, n_p: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
        """
        (d, z, r, dependent): d = Jᵀnₚ, primal step z = J₂d₂, dual step r = R⁻¹d₁.
        dependent is True when nₚ lies in the span of the active normals (z = 0).
        """
        q = self._q
        d = self._J.T @ n_p
        z = self._J[:, q:] @ d[q:]
        r = solve_triangular(self._R[:q, :q], d[:q]) if q else np.zeros(0)
        tail = float(d[q:] @ d[q:])
        dependent = tail <= _DEPENDENT_TOL * max(float(d @ d), 1e-300)
        return d, z, r, dependent

    # --- Solve ---

    def solve(self, problem: QpProblem, max_iter: Optional[int] = None) -> QpSolution:
        max_iter = self.max_iter if max_iter is None else max_iter
        regularized = self._factor(problem.Q)
        n, m, p = problem.n, problem.m, problem.p

        # Work in the "≥" convention nᵢᵀz ≥ eᵢ with nᵢ = −aᵢ, eᵢ = −bᵢ.
        normals = np.vstack([-problem.A_ineq, -problem.A_eq]) if m + p else np.zeros((0, n))
        rhs = np.concatenate([-problem.b_ineq, -problem.b_eq])
        feas_tol = _FEAS_TOL * (1.0 + np.max(np.abs(rhs), initial=0.0))

        x = -(self._J @ (self._J.T @ problem.c))
        active: list[int] = []
        u = np.zeros(0)
        iterations = 0

        def finish(status: str) -> QpSolution:
            lam = np.zeros(m + p)
            for idx, val in zip(active, u):
                lam[idx] = val
            sol = QpSolution(
                z=x.copy(), lam=lam, status=status, kkt_residual=math.nan,
                iterations=iterations, active_set=tuple(sorted(active)),
                regularized=regularized, objective=problem.objective(x),
            )
            residual = check_kkt(problem, sol)
            if status == OPTIMAL and residual > KKT_TOLERANCE:
                logger.warning("QP reported optimal with KKT residual {:.2e}", residual)
            return QpSolution(**{**sol.__dict__, "kkt_residual": residual})

        # Equalities enter first with sign-free multipliers and are never dropped.
        for pidx in range(m, m + p):
            iterations += 1
            n_p = normals[pidx]
            d, z, r, dependent = self._directions(n_p)
            s_p = float(n_p @ x - rhs[pidx])
            if dependent:
                if abs(s_p) <= feas_tol:
                    continue
                logger.debug("QP infeasible: equality {} contradicts earlier equalities", pidx)
                return finish(INFEASIBLE)
            t = -s_p / float(z @ n_p)
            x = x + t * z
            u = np.append(u - t * r, t)
            self._add(d)
            active.append(pidx)

        # Inequalities by most violation.
        while True:
            if m == 0:
                return finish(OPTIMAL)
            slack = normals[:m] @ x - rhs[:m]
            if np.min(slack) >= -feas_tol:
                return finish(OPTIMAL)
            pidx = int(np.argmin(slack))  # argmin takes the lowest index on ties
            n_p = normals[pidx]
            u_p = 0.0

            while True:
                iterations += 1
                if iterations > max_iter:
                    logger.debug("QP hit {} iterations", max_iter)
                    return finish(MAX_ITERATIONS)

                d, z, r, dependent = self._directions(n_p)
                s_p = float(n_p @ x - rhs[pidx])

                # Dual step length: largest t keeping the active inequality multipliers ≥ 0.
                t1, k_drop = math.inf, -1
                for j, idx in enumerate(active):
                    if idx < m and r[j] > 0.0:
                        ratio = u[j] / r[j]
                        if ratio < t1:
                            t1, k_drop = ratio, j
                # Primal step length: the one that makes constraint pidx active.
                t2 = math.inf if dependent else -s_p / float(z @ n_p)

                if math.isinf(t1) and math.isinf(t2):
                    logger.debug("QP infeasible: unbounded dual ray on constraint {}", pidx)
                    return finish(INFEASIBLE)

                if math.isinf(t2):
                    # Partial step in dual space only, then drop the blocking constraint.
                    u = u - t1 * r
                    u_p += t1
                    self._drop(k_drop)
                    active.pop(k_drop)
                    u = np.delete(u, k_drop)
                    continue

                t = min(t1, t2)
                x = x + t * z
                u = u - t * r
                u_p += t
                if t2 <= t1:
                    self._add(d)
                    active.append(pidx)
                    u = np.append(u, u_p)
                    break
                self._drop(k_drop)
                active.pop(k_drop)
                u = np.delete(u, k_drop)


def solve(problem: QpProblem, max_iter: int = 200) -> QpSolution:
    return ActiveSetSolver(max_iter=max_iter).solve(problem)
