import numpy as np
import pytest

from stipt.convex_kernel import (ConvexProgram, KernelError, QuadConstraint,
                                 SocConstraint, embed_conjugate_row,
                                 embed_hermitian, embed_plain_row, solve,
                                 split_complex, stack_complex)


def ball_projection_program(c):
    n = c.shape[0]
    return ConvexProgram(
        P=2.0 * np.eye(n), q=-2.0 * c,
        quads=[QuadConstraint(Q=None, q_diag=np.ones(n), r=np.zeros(n), s=1.0)])


class TestBasics:
    def test_ball_projection(self):
        c = np.array([1.2, -1.6])  # norm 2
        sol = solve(ball_projection_program(c))
        assert sol.status == "optimal"
        np.testing.assert_allclose(sol.x, c / 2.0, atol=1e-6)

    def test_active_affine_constraint(self):
        prog = ConvexProgram(P=2.0 * np.eye(1), q=np.zeros(1),
                             G=np.array([[-1.0]]), h=np.array([-1.0]))  # x >= 1
        sol = solve(prog)
        assert sol.status == "optimal"
        assert sol.x[0] == pytest.approx(1.0, abs=1e-6)

    def test_unconstrained(self):
        P = np.diag([2.0, 4.0])
        q = np.array([-2.0, -4.0])
        sol = solve(ConvexProgram(P=P, q=q))
        np.testing.assert_allclose(sol.x, [1.0, 1.0], atol=1e-9)

    def test_infeasible_detected(self):
        prog = ConvexProgram(P=2.0 * np.eye(1), q=np.zeros(1),
                             G=np.array([[-1.0], [1.0]]),
                             h=np.array([-1.0, 0.0]))  # x >= 1 and x <= 0
        sol = solve(prog)
        assert sol.status == "infeasible"

    def test_soc_constraint(self):
        # minimize x3 subject to ||(x1-1, x2-1)|| <= x3
        P = np.zeros((3, 3))
        q = np.array([0.0, 0.0, 1.0])
        A = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        b = np.array([-1.0, -1.0])
        c = np.array([0.0, 0.0, 1.0])
        prog = ConvexProgram(P=P, q=q, socs=[SocConstraint(A=A, b=b, c=c, d=0.0)])
        sol = solve(prog)
        assert sol.status == "optimal"
        assert sol.x[2] == pytest.approx(np.linalg.norm(sol.x[:2] - 1.0), abs=1e-5)
        assert sol.x[2] == pytest.approx(0.0, abs=1e-4)

    def test_non_psd_rejected(self):
        with pytest.raises(KernelError):
            solve(ConvexProgram(P=np.array([[-1.0]]), q=np.zeros(1)))


class TestOracle:
    def test_box_qp_matches_projected_gradient(self):
        rng = np.random.default_rng(42)
        for trial in range(5):
            n = 6
            M = rng.standard_normal((n, n))
            P = M @ M.T + 0.5 * np.eye(n)
            q = rng.standard_normal(n)
            lo, hi = -0.5, 0.8
            G = np.vstack([np.eye(n), -np.eye(n)])
            h = np.concatenate([hi * np.ones(n), -lo * np.ones(n)])
            sol = solve(ConvexProgram(P=P, q=q, G=G, h=h))
            assert sol.status == "optimal"

            # independent oracle: projected gradient descent to tight tolerance
            L = float(np.max(np.linalg.eigvalsh(P)))
            x = np.zeros(n)
            for _ in range(200000):
                x_new = np.clip(x - (P @ x + q) / L, lo, hi)
                if np.max(np.abs(x_new - x)) < 1e-13:
                    x = x_new
                    break
                x = x_new
            f_pg = 0.5 * x @ P @ x + q @ x
            assert sol.objective == pytest.approx(f_pg, rel=1e-5, abs=1e-8)

    def test_ball_qp_matches_projected_gradient(self):
        rng = np.random.default_rng(7)
        n = 8
        M = rng.standard_normal((n, n))
        P = M @ M.T + np.eye(n)
        q = 3.0 * rng.standard_normal(n)
        prog = ConvexProgram(P=P, q=q, quads=[QuadConstraint(
            Q=None, q_diag=np.ones(n), r=np.zeros(n), s=1.0)])
        sol = solve(prog)
        L = float(np.max(np.linalg.eigvalsh(P)))
        x = np.zeros(n)
        for _ in range(200000):
            y = x - (P @ x + q) / L
            nrm = np.linalg.norm(y)
            y = y if nrm <= 1.0 else y / nrm
            if np.max(np.abs(y - x)) < 1e-13:
                x = y
                break
            x = y
        f_pg = 0.5 * x @ P @ x + q @ x
        assert sol.objective == pytest.approx(f_pg, rel=1e-5, abs=1e-8)


class TestInvariants:
    def test_determinism(self):
        rng = np.random.default_rng(3)
        M = rng.standard_normal((5, 5))
        P = M @ M.T + np.eye(5)
        q = rng.standard_normal(5)
        G = rng.standard_normal((3, 5))
        h = np.abs(rng.standard_normal(3)) + 0.5
        a = solve(ConvexProgram(P=P, q=q, G=G, h=h))
        b = solve(ConvexProgram(P=P.copy(), q=q.copy(), G=G.copy(), h=h.copy()))
        assert np.array_equal(a.x, b.x)
        assert a.objective == b.objective

    def test_objective_scaling_leaves_argmin(self):
        c = np.array([0.9, -1.1, 0.4])
        base = solve(ball_projection_program(c))
        scaled_prog = ball_projection_program(c)
        scaled_prog.P = 250.0 * scaled_prog.P
        scaled_prog.q = 250.0 * scaled_prog.q
        scaled = solve(scaled_prog)
        np.testing.assert_allclose(base.x, scaled.x, atol=1e-6)

    def test_kkt_residual_small_on_optimal(self):
        c = np.array([2.0, 0.0])
        sol = solve(ball_projection_program(c))
        assert sol.status == "optimal"
        assert sol.kkt_residual < 1e-6

    def test_feasibility_of_solution(self):
        rng = np.random.default_rng(5)
        M = rng.standard_normal((4, 4))
        P = M @ M.T + np.eye(4)
        q = rng.standard_normal(4) * 4
        G = np.vstack([np.eye(4), -np.eye(4)])
        h = 0.3 * np.ones(8)
        sol = solve(ConvexProgram(P=P, q=q, G=G, h=h))
        assert np.all(G @ sol.x - h <= 1e-8)


class TestComplexEmbedding:
    def test_quadratic_form_round_trip(self):
        rng = np.random.default_rng(0)
        n = 5
        B = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        A = B @ B.conj().T  # Hermitian PSD
        z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        x = stack_complex(z)
        M = embed_hermitian(A)
        direct = float((z.conj() @ A @ z).real)
        assert x @ M @ x == pytest.approx(direct, rel=1e-12)
        np.testing.assert_allclose(split_complex(x), z, atol=0)

    def test_linear_rows(self):
        rng = np.random.default_rng(1)
        n = 4
        w = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        x = stack_complex(z)
        assert embed_conjugate_row(w) @ x == pytest.approx(
            float((w.conj() @ z).real), rel=1e-12)
        assert embed_plain_row(w) @ x == pytest.approx(
            float((w @ z).real), rel=1e-12)

    def test_complex_program_objective_preserved(self):
        rng = np.random.default_rng(2)
        n = 3
        B = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        A = B @ B.conj().T
        xi = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        P = 2.0 * embed_hermitian(A)
        q = embed_plain_row(xi)
        sol = solve(ConvexProgram(P=P, q=q, quads=[QuadConstraint(
            Q=None, q_diag=np.ones(2 * n), r=np.zeros(2 * n), s=float(n))]))
        z = split_complex(sol.x)
        direct = float((z.conj() @ A @ z).real) + float((xi @ z).real)
        assert sol.objective == pytest.approx(direct, rel=1e-10, abs=1e-12)
