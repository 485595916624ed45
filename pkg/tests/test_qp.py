import itertools

import numpy as np
import pytest

from urbansmpc import qp as qpmod
from urbansmpc.qp import (
    QpDimensionError,
    QuadraticProgram,
    solve,
)


def brute_force_active_set(H, g, A, b, A_eq=None, b_eq=None):
    """Enumeration oracle: solve the KKT system for every subset of
    inequality rows treated as active, keep the best KKT-consistent point."""
    n = H.shape[0]
    m = A.shape[0] if A is not None else 0
    me = A_eq.shape[0] if A_eq is not None else 0
    best = None
    for r in range(m + 1):
        for subset in itertools.combinations(range(m), r):
            rows = []
            rhs = []
            if me:
                rows.append(A_eq)
                rhs.append(b_eq)
            if subset:
                rows.append(A[list(subset)])
                rhs.append(b[list(subset)])
            C = np.vstack(rows) if rows else np.zeros((0, n))
            c = np.concatenate(rhs) if rhs else np.zeros(0)
            KKT = np.block([[H, C.T], [C, np.zeros((C.shape[0], C.shape[0]))]])
            vec = np.concatenate([-g, c])
            try:
                sol = np.linalg.solve(KKT, vec)
            except np.linalg.LinAlgError:
                continue
            if np.linalg.norm(KKT @ sol - vec) > 1e-8 * (1.0 + np.linalg.norm(vec)):
                continue  # rank-deficient active set, solve was meaningless
            z = sol[:n]
            lam = sol[n + me:]
            if np.any(lam < -1e-9):
                continue
            if m and np.any(A @ z - b > 1e-8):
                continue
            obj = 0.5 * z @ H @ z + g @ z
            if best is None or obj < best[0] - 1e-12:
                best = (obj, z)
    return best


def random_qp(rng, n, m, with_eq=False):
    M = rng.normal(size=(n, n))
    H = M @ M.T + 0.1 * np.eye(n)
    g = rng.normal(size=n)
    A = rng.normal(size=(m, n))
    # keep the problem feasible: bound each row away from the origin
    b = A @ rng.normal(scale=0.3, size=n) + rng.uniform(0.05, 1.0, size=m)
    if with_eq:
        A_eq = rng.normal(size=(1, n))
        b_eq = np.array([rng.normal(scale=0.2)])
        return QuadraticProgram(H, g, A, b, A_eq, b_eq)
    return QuadraticProgram(H, g, A, b)


class TestBasics:
    def test_clipped_scalar(self):
        # min (z-1)^2 s.t. z <= 0.5
        sol = solve(QuadraticProgram(H=[[2.0]], g=[-2.0], A_ineq=[[1.0]], b_ineq=[0.5]))
        assert sol.status == "optimal"
        assert sol.z[0] == pytest.approx(0.5, abs=1e-10)
        assert sol.objective + 1.0 == pytest.approx(0.25, abs=1e-9)  # +1 for the constant

    def test_equality_symmetry(self):
        # min 0.5||z||^2 s.t. sum z = 1 -> all entries 0.25
        sol = solve(
            QuadraticProgram(
                H=np.eye(4), g=np.zeros(4), A_eq=np.ones((1, 4)), b_eq=[1.0]
            )
        )
        np.testing.assert_allclose(sol.z, 0.25, atol=1e-10)

    def test_unconstrained(self):
        sol = solve(QuadraticProgram(H=np.diag([2.0, 4.0]), g=[-2.0, -4.0]))
        np.testing.assert_allclose(sol.z, [1.0, 1.0], atol=1e-12)

    def test_infeasible_hard(self):
        sol = solve(
            QuadraticProgram(
                H=np.eye(1), g=[0.0], A_ineq=[[1.0], [-1.0]], b_ineq=[-1.0, -1.0]
            )
        )
        assert sol.status == "infeasible"

    def test_dimension_validation(self):
        with pytest.raises(QpDimensionError):
            QuadraticProgram(H=np.eye(2), g=[1.0])
        with pytest.raises(QpDimensionError):
            QuadraticProgram(H=np.eye(2), g=[1.0, 2.0], A_ineq=[[1.0, 0.0]], b_ineq=None)


class TestOracle:
    def test_random_qps_match_enumeration(self):
        rng = np.random.default_rng(2024)
        checked = 0
        for i in range(500):
            n = int(rng.integers(1, 7))
            m = int(rng.integers(1, 9))
            qp = random_qp(rng, n, m, with_eq=(i % 5 == 0) and n > 1)
            ref = brute_force_active_set(qp.H, qp.g, qp.A_ineq, qp.b_ineq, qp.A_eq, qp.b_eq)
            sol = solve(qp)
            if ref is None:
                assert sol.status == "infeasible"
                continue
            assert sol.status == "optimal", f"case {i}"
            assert sol.objective == pytest.approx(ref[0], abs=1e-6), f"case {i}"
            checked += 1
        assert checked > 400

    def test_kkt_residuals_on_optimal(self):
        rng = np.random.default_rng(77)
        for _ in range(100):
            qp = random_qp(rng, int(rng.integers(2, 7)), int(rng.integers(1, 9)))
            sol = solve(qp)
            if sol.status != "optimal":
                continue
            assert sol.residuals["stationarity"] < 1e-6
            assert sol.residuals["primal"] < 1e-6
            assert abs(sol.residuals["complementarity"]) < 1e-6 * qp.A_ineq.shape[0]
            assert np.all(sol.lam_ineq >= -1e-9)


class TestDeterminism:
    def test_same_bytes(self):
        rng = np.random.default_rng(5)
        qp = random_qp(rng, 5, 7)
        a = solve(qp)
        b = solve(QuadraticProgram(qp.H.copy(), qp.g.copy(), qp.A_ineq.copy(), qp.b_ineq.copy()))
        assert a.z.tobytes() == b.z.tobytes()
        assert a.objective == b.objective


class TestSoftConstraints:
    def test_slack_activates_when_infeasible(self):
        # z <= -1 and z >= 1: soften the first row, the solver must return.
        qp = QuadraticProgram(
            H=np.eye(1),
            g=[0.0],
            A_ineq=[[1.0], [-1.0]],
            b_ineq=[-1.0, -1.0],
            soft_rows=[0],
        )
        sol = solve(qp)
        assert sol.status == "optimal"
        assert sol.z[0] >= 1.0 - 1e-8
        assert sol.slacks[0] >= 2.0 - 1e-6

    def test_rho_convergence_to_hard_solution(self):
        # As rho -> inf the softened solution approaches the hard one.
        H = np.diag([2.0, 2.0])
        g = np.array([-2.0, -6.0])
        A = np.array([[1.0, 1.0]])
        b = np.array([1.0])
        hard = solve(QuadraticProgram(H, g, A, b))
        gaps = []
        for rho in (1e2, 1e4, 1e6):
            soft = solve(QuadraticProgram(H, g, A, b, soft_rows=[0], rho_slack=rho, slack_lin=0.0))
            gaps.append(np.linalg.norm(soft.z - hard.z))
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] < 1e-5

    def test_inactive_soft_rows_cost_nothing(self):
        qp = QuadraticProgram(
            H=np.eye(2), g=[-1.0, -1.0], A_ineq=[[1.0, 0.0]], b_ineq=[10.0], soft_rows=[0]
        )
        sol = solve(qp)
        np.testing.assert_allclose(sol.z, [1.0, 1.0], atol=1e-9)
        assert sol.slacks[0] == pytest.approx(0.0, abs=1e-10)


class TestBackends:
    def test_backend_reported(self):
        assert qpmod.backend_name() in ("pure", "compiled")

    def test_pure_kernel_direct(self):
        from urbansmpc.qp import _pure

        H = np.diag([2.0])
        z, lam, status, iters = _pure.solve_ineq(H, np.array([-2.0]), np.array([[1.0]]), np.array([0.5]), 100)
        assert status == 0
        assert z[0] == pytest.approx(0.5)
        assert lam[0] == pytest.approx(1.0)  # gradient balance: 2z - 2 + lam = 0

    def test_compiled_matches_pure(self):
        _core = pytest.importorskip("urbansmpc.qp._core")
        from urbansmpc.qp import _pure

        rng = np.random.default_rng(7)
        for _ in range(200):
            n = int(rng.integers(1, 9))
            m = int(rng.integers(0, 13))
            M = rng.standard_normal((n, n))
            H = M @ M.T + np.eye(n)
            g = rng.standard_normal(n)
            A = rng.standard_normal((m, n)) if m else None
            b = rng.standard_normal(m) + 0.5 if m else None
            zp, lp, sp, _ = _pure.solve_ineq(H, g, A, b, 500)
            zc, lc, sc, _ = _core.solve_ineq(H, g, A, b, 500)
            assert sp == sc
            if sp == _pure.STATUS_OPTIMAL:
                assert np.allclose(zp, zc, atol=1e-8)
                assert np.allclose(lp, lc, atol=1e-8)
