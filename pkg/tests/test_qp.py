"""Unit tests for qp.py: the dual active-set solver against brute-force enumeration."""
import itertools
from dataclasses import replace

import numpy as np
import pytest

from stepnav.qp import (
    INFEASIBLE,
    KKT_TOLERANCE,
    MAX_ITERATIONS,
    OPTIMAL,
    ActiveSetSolver,
    QpProblem,
    check_kkt,
    solve,
)


def _random_problem(rng, n: int, m: int, p: int = 0) -> QpProblem:
    M = rng.standard_normal((n, n))
    Q = M @ M.T + np.eye(n)
    c = rng.standard_normal(n)
    z0 = rng.standard_normal(n)
    A = rng.standard_normal((m, n))
    b = A @ z0 + rng.uniform(0.0, 1.0, m)  # z0 is strictly feasible
    A_eq = rng.standard_normal((p, n)) if p else None
    b_eq = A_eq @ z0 if p else None
    return QpProblem.build(Q, c, A, b, A_eq, b_eq)


def _enumerate(problem: QpProblem) -> float:
    """Best objective over every active set whose KKT point is primal and dual feasible."""
    n, m = problem.n, problem.m
    best = np.inf
    for size in range(0, min(m, n) + 1):
        for active in itertools.combinations(range(m), size):
            A = problem.A_ineq[list(active)]
            K = np.block([[problem.Q, A.T], [A, np.zeros((size, size))]])
            rhs = np.concatenate([-problem.c, problem.b_ineq[list(active)]])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            z, lam = sol[:n], sol[n:]
            if np.all(problem.A_ineq @ z <= problem.b_ineq + 1e-9) and np.all(lam >= -1e-9):
                best = min(best, problem.objective(z))
    return best


def test_projection_onto_half_plane():
    # min ½‖z‖² − z₁ − z₂  s.t.  z₁ + z₂ ≤ 1
    problem = QpProblem.build(np.eye(2), [-1.0, -1.0], [[1.0, 1.0]], [1.0])
    sol = solve(problem)
    assert sol.status == OPTIMAL
    np.testing.assert_allclose(sol.z, [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(sol.lam, [0.5], atol=1e-12)
    assert sol.active_set == (0,)

def test_unconstrained_minimum_inactive_constraint():
    problem = QpProblem.build(np.eye(2), [-1.0, 0.0], [[1.0, 0.0]], [5.0])
    sol = solve(problem)
    np.testing.assert_allclose(sol.z, [1.0, 0.0], atol=1e-12)
    assert sol.active_set == ()

def test_equality_constraint():
    problem = QpProblem.build(np.eye(2), [0.0, 0.0], A_eq=[[1.0, 1.0]], b_eq=[2.0])
    sol = solve(problem)
    assert sol.status == OPTIMAL
    np.testing.assert_allclose(sol.z, [1.0, 1.0], atol=1e-12)

def test_infeasible_box():
    # z ≤ −1 and z ≥ 1
    problem = QpProblem.build([[1.0]], [0.0], [[1.0], [-1.0]], [-1.0, -1.0])
    sol = solve(problem)
    assert sol.status == INFEASIBLE
    assert not sol.optimal

def test_iteration_cap():
    problem = QpProblem.build(np.eye(2), [-5.0, -5.0], np.eye(2), [1.0, 1.0])
    assert solve(problem, max_iter=1).status == MAX_ITERATIONS
    assert solve(problem).status == OPTIMAL

def test_singular_hessian_is_regularized():
    problem = QpProblem.build(np.diag([1.0, 0.0]), [0.0, 0.0], [[0.0, 1.0], [0.0, -1.0]], [1.0, 1.0])
    sol = solve(problem)
    assert sol.regularized

def test_asymmetric_hessian_rejected():
    with pytest.raises(ValueError):
        QpProblem.build([[1.0, 0.5], [0.0, 1.0]], [0.0, 0.0])

def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        QpProblem.build(np.eye(2), [0.0, 0.0], [[1.0, 0.0, 0.0]], [1.0])

def test_random_problems_match_enumeration():
    rng = np.random.default_rng(0)
    solver = ActiveSetSolver()
    for _ in range(100):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, 9))
        problem = _random_problem(rng, n, m)
        sol = solver.solve(problem)
        assert sol.status == OPTIMAL
        assert sol.objective == pytest.approx(_enumerate(problem), abs=1e-6)

def test_random_problems_certified_by_kkt():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = int(rng.integers(2, 20))
        problem = _random_problem(rng, n, int(rng.integers(1, 40)), p=int(rng.integers(0, 2)))
        sol = solve(problem)
        assert sol.status == OPTIMAL
        assert sol.kkt_residual <= KKT_TOLERANCE
        assert check_kkt(problem, sol) == pytest.approx(sol.kkt_residual)

def test_solver_instance_is_reusable():
    rng = np.random.default_rng(2)
    solver = ActiveSetSolver()
    problems = [_random_problem(rng, 3, 5) for _ in range(5)]
    first = [solver.solve(p).z for p in problems]
    second = [solver.solve(p).z for p in problems]
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a, b)

def test_scalar_lower_bound_multiplier():
    # min z²  s.t.  z ≥ 1
    sol = solve(QpProblem.build([[2.0]], [0.0], [[-1.0]], [-1.0]))
    assert sol.status == OPTIMAL
    assert sol.z[0] == pytest.approx(1.0, abs=1e-12)
    assert sol.lam[0] == pytest.approx(2.0, abs=1e-12)

def test_dependent_constraint_replaces_active_one():
    # 10z ≥ 10 is the most violated at z = 0 and enters first; z ≥ 2 then lies in its span
    problem = QpProblem.build([[1.0]], [0.0], [[-10.0], [-1.0]], [-10.0, -2.0])
    sol = solve(problem)
    assert sol.status == OPTIMAL
    assert sol.z[0] == pytest.approx(2.0, abs=1e-12)
    np.testing.assert_allclose(sol.lam, [0.0, 2.0], atol=1e-12)
    assert sol.active_set == (1,)

def test_redundant_equality_is_skipped():
    problem = QpProblem.build(np.eye(2), [0.0, 0.0], A_eq=[[1.0, 1.0], [2.0, 2.0]], b_eq=[2.0, 4.0])
    sol = solve(problem)
    assert sol.status == OPTIMAL
    np.testing.assert_allclose(sol.z, [1.0, 1.0], atol=1e-12)
    assert sol.kkt_residual <= KKT_TOLERANCE

def test_contradictory_equalities_are_infeasible():
    problem = QpProblem.build(np.eye(2), [0.0, 0.0], A_eq=[[1.0, 1.0], [2.0, 2.0]], b_eq=[2.0, 5.0])
    assert solve(problem).status == INFEASIBLE

def test_parallel_rows_never_fail_to_factor():
    rng = np.random.default_rng(5)
    for _ in range(50):
        n = int(rng.integers(2, 6))
        base = _random_problem(rng, n, 4)
        A = np.vstack([base.A_ineq, 2.0 * base.A_ineq, base.A_ineq[:2] + base.A_ineq[2:4]])
        b = np.concatenate([base.b_ineq, 2.0 * base.b_ineq + 0.5, base.b_ineq[:2] + base.b_ineq[2:4] + 0.1])
        problem = QpProblem.build(base.Q, base.c, A, b)
        sol = solve(problem)
        assert sol.status == OPTIMAL
        assert sol.kkt_residual <= KKT_TOLERANCE

def test_every_optimal_report_is_certified():
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(2, 30))
        problem = _random_problem(rng, n, int(rng.integers(1, 60)), p=int(rng.integers(0, 3)))
        sol = solve(problem)
        if sol.status == OPTIMAL:
            assert sol.kkt_residual <= KKT_TOLERANCE

def test_kkt_check_detects_perturbations():
    problem = QpProblem.build(np.eye(2), [-1.0, -1.0], [[1.0, 1.0]], [1.0])
    sol = solve(problem)
    assert check_kkt(problem, sol) <= 1e-12
    moved = replace(sol, z=sol.z + np.array([0.1, 0.0]))
    assert check_kkt(problem, moved) >= 0.1 - 1e-12
    negative = replace(sol, lam=-sol.lam)
    assert check_kkt(problem, negative) >= 0.5 - 1e-12
    infeasible = replace(sol, z=np.array([1.0, 1.0]), lam=np.zeros(1))
    assert check_kkt(problem, infeasible) >= 1.0 - 1e-12
