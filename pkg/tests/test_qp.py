"""Tests for the convex QP engine.

The reference used throughout is an independent dual projected-gradient
solver written below (never the engine itself), plus a handful of
hand-solved problems.
"""

import numpy as np
import pytest

from heatstack.qp import (
    QuadraticProgram,
    canonical_form,
    kkt_residuals,
    qp_objective,
    solve_convex_qp,
    verify_psd,
)


def oracle_dual_projected_gradient(qp, iters=60000):
    """Accelerated dual ascent for strictly convex QPs.

    Maximizes the dual over (mu free, lam >= 0) with x recovered as the
    unconstrained Lagrangian minimizer.  Slow but entirely independent of
    the engine under test.
    """
    G, h, _, _ = canonical_form(qp)
    Gd = G.toarray()
    Ad = qp.A.toarray()
    Qd = qp.Q.toarray()
    Qinv = np.linalg.inv(Qd)
    C = np.vstack([Ad, Gd])
    me = Ad.shape[0]
    L = np.linalg.norm(C @ Qinv @ C.T, 2) if C.size else 1.0
    step = 1.0 / max(L, 1e-12)
    y = np.zeros(C.shape[0])
    y_prev = y.copy()
    t_prev = 1.0
    rhs = np.concatenate([qp.b, h])
    for _ in range(iters):
        t = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_prev**2))
        z = y + ((t_prev - 1.0) / t) * (y - y_prev)
        z[me:] = np.clip(z[me:], 0.0, None)
        x = -Qinv @ (qp.c + C.T @ z)
        grad = C @ x - rhs
        y_prev, t_prev = y, t
        y = z + step * grad
        y[me:] = np.clip(y[me:], 0.0, None)
    x = -Qinv @ (qp.c + C.T @ y)
    # Final polish: project x back to the nearby feasible point.
    return x, y[:me], y[me:]


def random_feasible_qp(rng, n, m_eq, m_in, with_bounds=False):
    M = rng.standard_normal((n, n))
    Q = M.T @ M + 0.5 * np.eye(n)
    c = rng.standard_normal(n)
    x0 = rng.standard_normal(n)
    A = rng.standard_normal((m_eq, n)) if m_eq else None
    b = A @ x0 if m_eq else None
    G = rng.standard_normal((m_in, n)) if m_in else None
    h = G @ x0 + rng.uniform(0.1, 2.0, m_in) if m_in else None
    lb = ub = None
    if with_bounds:
        lb = x0 - rng.uniform(0.5, 3.0, n)
        ub = x0 + rng.uniform(0.5, 3.0, n)
    return QuadraticProgram.build(Q, c, A, b, G, h, lb, ub)


class TestHandSolved:
    def test_scalar_bound(self):
        # min x^2 s.t. x >= 1  ->  x = 1, multiplier on (-x <= -1) is 2
        qp = QuadraticProgram.build(Q=[[2.0]], c=[0.0], G=[[-1.0]], h=[-1.0])
        sol = solve_convex_qp(qp)
        assert sol.status == "optimal"
        assert sol.x[0] == pytest.approx(1.0, abs=1e-9)
        assert sol.ineq_mult[0] == pytest.approx(2.0, abs=1e-8)

    def test_equality_projection(self):
        # min 0.5(x^2+y^2) s.t. x + y = 2  ->  (1, 1), eq multiplier -1
        qp = QuadraticProgram.build(Q=np.eye(2), c=np.zeros(2), A=[[1.0, 1.0]], b=[2.0])
        sol = solve_convex_qp(qp)
        assert sol.status == "optimal"
        np.testing.assert_allclose(sol.x, [1.0, 1.0], atol=1e-9)
        assert sol.eq_mult[0] == pytest.approx(-1.0, abs=1e-9)

    def test_bounds_become_canonical_rows(self):
        qp = QuadraticProgram.build(
            Q=2 * np.eye(2), c=[-2.0, -2.0], G=[[1.0, 1.0]], h=[10.0],
            lb=[0.0, -np.inf], ub=[0.4, np.inf],
        )
        sol = solve_convex_qp(qp)
        # canonical rows: 1 user + 1 finite ub + 1 finite lb
        assert len(sol.ineq_mult) == 3
        assert sol.x[0] == pytest.approx(0.4, abs=1e-9)
        assert sol.x[1] == pytest.approx(1.0, abs=1e-9)
        assert sol.ineq_mult[1] == pytest.approx(2.0 - 2 * 0.4, abs=1e-8)

    def test_infeasible_box(self):
        qp = QuadraticProgram.build(Q=[[2.0]], c=[0.0], G=[[-1.0], [1.0]], h=[-1.0, 0.0])
        for method in ("active-set", "ipm"):
            sol = solve_convex_qp(qp, method=method)
            assert sol.status == "infeasible"

    def test_unbounded_ray(self):
        qp = QuadraticProgram.build(Q=np.zeros((1, 1)), c=[-1.0], G=[[-1.0]], h=[0.0])
        sol = solve_convex_qp(qp, method="active-set")
        assert sol.status == "unbounded"

    def test_degenerate_duplicate_rows(self):
        qp = QuadraticProgram.build(Q=[[2.0]], c=[0.0], G=[[-1.0], [-1.0]], h=[-1.0, -1.0])
        sol = solve_convex_qp(qp)
        assert sol.status == "optimal"
        assert sol.x[0] == pytest.approx(1.0, abs=1e-9)
        res = kkt_residuals(qp, sol)
        assert max(res.values()) < 1e-7

    def test_fixed_variable_via_bounds(self):
        qp = QuadraticProgram.build(Q=2 * np.eye(2), c=[0.0, -4.0], lb=[3.0, -10.0], ub=[3.0, 10.0])
        sol = solve_convex_qp(qp)
        assert sol.x[0] == pytest.approx(3.0, abs=1e-10)
        assert sol.x[1] == pytest.approx(2.0, abs=1e-9)


class TestAgainstOracle:
    @pytest.mark.parametrize("seed", range(20))
    def test_active_set_matches_dual_gradient(self, seed):
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(2, 14))
        qp = random_feasible_qp(rng, n, m_eq=int(rng.integers(0, max(1, n // 3) + 1)),
                                m_in=int(rng.integers(1, 12)), with_bounds=bool(seed % 2))
        x_ref, _, _ = oracle_dual_projected_gradient(qp)
        sol = solve_convex_qp(qp, method="active-set")
        assert sol.status == "optimal"
        assert qp_objective(qp, sol.x) <= qp_objective(qp, x_ref) + 1e-6
        np.testing.assert_allclose(sol.x, x_ref, atol=2e-5)
        assert max(kkt_residuals(qp, sol).values()) < 1e-6

    @pytest.mark.parametrize("seed", range(8))
    def test_ipm_matches_active_set(self, seed):
        rng = np.random.default_rng(2000 + seed)
        n = 40
        qp = random_feasible_qp(rng, n, m_eq=5, m_in=30, with_bounds=True)
        a = solve_convex_qp(qp, method="active-set")
        b = solve_convex_qp(qp, method="ipm")
        assert a.status == "optimal" and b.status == "optimal"
        assert b.objective == pytest.approx(a.objective, abs=1e-6 * (1 + abs(a.objective)))
        np.testing.assert_allclose(b.x, a.x, atol=1e-5)

    def test_equality_only_ipm(self):
        rng = np.random.default_rng(7)
        n = 30
        M = rng.standard_normal((n, n))
        Q = M.T @ M + np.eye(n)
        A = rng.standard_normal((6, n))
        x0 = rng.standard_normal(n)
        qp = QuadraticProgram.build(Q, rng.standard_normal(n), A, A @ x0)
        sol = solve_convex_qp(qp, method="ipm")
        assert sol.status == "optimal"
        assert max(kkt_residuals(qp, sol).values()) < 1e-6


class TestEngineProperties:
    def test_bitwise_determinism(self):
        rng = np.random.default_rng(42)
        qp = random_feasible_qp(rng, 25, 4, 18, with_bounds=True)
        s1 = solve_convex_qp(qp)
        s2 = solve_convex_qp(qp)
        assert np.array_equal(s1.x, s2.x)
        assert np.array_equal(s1.ineq_mult, s2.ineq_mult)
        assert s1.objective == s2.objective
        big = solve_convex_qp(qp, method="ipm")
        big2 = solve_convex_qp(qp, method="ipm")
        assert np.array_equal(big.x, big2.x)

    def test_dual_bound_not_above_objective(self):
        rng = np.random.default_rng(5)
        for seed in range(5):
            qp = random_feasible_qp(np.random.default_rng(seed), 10, 2, 8)
            sol = solve_convex_qp(qp)
            assert sol.dual_bound <= sol.objective + 1e-7 * (1 + abs(sol.objective))

    def test_objective_scaling_invariance(self):
        rng = np.random.default_rng(11)
        qp = random_feasible_qp(rng, 8, 1, 6)
        sol = solve_convex_qp(qp)
        scaled = QuadraticProgram.build(
            1000.0 * qp.Q.toarray(), 1000.0 * qp.c, qp.A.toarray(), qp.b,
            qp.G.toarray(), qp.h, qp.lb, qp.ub,
        )
        sol_s = solve_convex_qp(scaled)
        np.testing.assert_allclose(sol_s.x, sol.x, atol=1e-6)
        assert sol_s.objective == pytest.approx(1000.0 * sol.objective, rel=1e-8)

    def test_psd_verifier_rejects_indefinite(self):
        qp = QuadraticProgram.build(Q=[[1.0, 0.0], [0.0, -1.0]], c=[0.0, 0.0])
        with pytest.raises(ValueError):
            verify_psd(qp)
        good = QuadraticProgram.build(Q=np.eye(2), c=np.zeros(2))
        assert verify_psd(good)

    def test_dimension_checks(self):
        with pytest.raises(ValueError):
            QuadraticProgram.build(Q=np.eye(2), c=[1.0])
        with pytest.raises(ValueError):
            QuadraticProgram.build(Q=np.eye(1), c=[0.0], lb=[2.0], ub=[1.0])

    def test_warm_independent_of_row_duplication_scale(self):
        # Scaling one inequality row must not change the argmin.
        qp = QuadraticProgram.build(Q=2 * np.eye(2), c=[-2.0, 0.0], G=[[1.0, 0.0]], h=[0.3])
        qp2 = QuadraticProgram.build(Q=2 * np.eye(2), c=[-2.0, 0.0], G=[[100.0, 0.0]], h=[30.0])
        a, b = solve_convex_qp(qp), solve_convex_qp(qp2)
        np.testing.assert_allclose(a.x, b.x, atol=1e-9)
