import numpy as np
import pytest

from takeoversim import qp


def project_box(x, lo, hi):
    return np.minimum(np.maximum(x, lo), hi)


def projected_gradient_oracle(H, g, lo, hi, iters=40000):
    """Box-constrained QP by projected gradient, run to convergence."""
    L = float(np.linalg.eigvalsh(H).max())
    x = np.zeros_like(g)
    step = 1.0 / L
    for _ in range(iters):
        x_new = project_box(x - step * (H @ x + g), lo, hi)
        if np.abs(x_new - x).max() < 1e-12:
            x = x_new
            break
        x = x_new
    return x


def obj(H, g, x):
    return 0.5 * x @ H @ x + g @ x


class TestSolve:
    def test_clamped_scalar(self):
        # min (x-3)^2 on [-1, 1]  ->  x = 1
        p = qp.QpProblem(H=[[2.0]], g=[-6.0], lower=[-1.0], upper=[1.0])
        s = qp.solve(p)
        assert s.status == qp.STATUS_OPTIMAL
        assert s.x[0] == pytest.approx(1.0, abs=1e-10)

    def test_unconstrained_newton_point(self):
        p = qp.QpProblem(H=np.eye(2), g=[-1.0, -2.0],
                         lower=[-10, -10], upper=[10, 10])
        s = qp.solve(p)
        assert s.x == pytest.approx([1.0, 2.0])
        assert s.iterations == 0

    def test_empty_bound_set_infeasible(self):
        p = qp.QpProblem(H=np.eye(2), g=[0.0, 0.0],
                         lower=[1.0, 0.0], upper=[-1.0, 1.0])
        s = qp.solve(p)
        assert s.status == qp.STATUS_INFEASIBLE

    def test_general_rows_respected(self):
        # min x1^2 + x2^2 s.t. x1 + x2 >= 1
        p = qp.QpProblem(H=2 * np.eye(2), g=[0.0, 0.0],
                         lower=[-5, -5], upper=[5, 5],
                         A_ineq=[[1.0, 1.0]], l_ineq=[1.0], u_ineq=[np.inf])
        s = qp.solve(p)
        assert s.status == qp.STATUS_OPTIMAL
        assert s.x == pytest.approx([0.5, 0.5], abs=1e-9)

    def test_random_psd_instances_match_projected_gradient(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = rng.integers(1, 5)
            M = rng.normal(size=(n, n))
            H = M.T @ M + 0.1 * np.eye(n)
            g = rng.normal(size=n)
            lo = rng.uniform(-2.0, -0.1, n)
            hi = rng.uniform(0.1, 2.0, n)
            s = qp.solve(qp.QpProblem(H=H, g=g, lower=lo, upper=hi))
            assert s.status == qp.STATUS_OPTIMAL
            x_o = projected_gradient_oracle(H, g, lo, hi)
            assert obj(H, g, s.x) <= obj(H, g, x_o) + 1e-5
            assert abs(obj(H, g, s.x) - obj(H, g, x_o)) < 1e-5

    def test_kkt_residual_small_on_optimal(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            n = 4
            M = rng.normal(size=(n, n))
            H = M.T @ M + 0.5 * np.eye(n)
            g = rng.normal(size=n)
            s = qp.solve(qp.QpProblem(H=H, g=g, lower=-np.ones(n),
                                      upper=np.ones(n)))
            assert s.status == qp.STATUS_OPTIMAL
            assert s.kkt_residual < 1e-8

    def test_warm_start_idempotent(self):
        H = np.array([[3.0, 1.0], [1.0, 2.0]])
        p = qp.QpProblem(H=H, g=[-4.0, 1.0], lower=[-0.5, -0.5],
                         upper=[0.5, 0.5])
        s1 = qp.solve(p)
        s2 = qp.solve(p, warm_start=s1.x)
        assert np.abs(s1.x - s2.x).max() < 1e-10
        assert s2.iterations <= s1.iterations

    def test_deterministic(self):
        H = np.array([[3.0, 1.0], [1.0, 2.0]])
        p = qp.QpProblem(H=H, g=[-4.0, 1.0], lower=[-0.5, -0.5],
                         upper=[0.5, 0.5],
                         A_ineq=[[1.0, -1.0]], l_ineq=[-0.3], u_ineq=[0.3])
        s1, s2 = qp.solve(p), qp.solve(p)
        assert np.array_equal(s1.x, s2.x)
        assert s1.iterations == s2.iterations

    def test_semidefinite_gets_regularized(self):
        H = np.array([[1.0, 0.0], [0.0, 0.0]])
        p = qp.QpProblem(H=H, g=[-1.0, -1.0], lower=[-2, -2], upper=[2, 2])
        s = qp.solve(p)
        assert s.regularized
        assert s.status == qp.STATUS_OPTIMAL
        assert s.x[1] == pytest.approx(2.0, abs=1e-6)

    def test_dump_is_textual(self):
        p = qp.QpProblem(H=np.eye(2), g=[0.0, 1.0], lower=[-1, -1],
                         upper=[1, 1])
        text = qp.dump(p)
        assert "QpProblem n=2" in text and "lower" in text


class TestCondense:
    def test_scalar_horizon_one_closed_form(self):
        # x+ = x + b u, target r, weight w: u* = w b (r - x)/(w b^2 + q)
        b, w, q, r, x0 = 0.5, 3.0, 0.7, 2.0, 0.4
        prob = qp.condense(1.0, b, 1.0, x0, 1, w, q, [r],
                           -10.0, 10.0, -100.0, 100.0, 0.0)
        s = qp.solve(prob)
        expect = w * b * (r - x0) / (w * b * b + q)
        assert s.x[0] == pytest.approx(expect, abs=1e-10)

    def test_zero_tracking_weight_gives_zero_input(self):
        prob = qp.condense(1.0, 0.5, 1.0, 1.0, 5, 0.0, 1.0, np.ones(5),
                           -10.0, 10.0, -100.0, 100.0, 0.0)
        s = qp.solve(prob)
        assert np.abs(s.x).max() < 1e-9

    def test_frozen_rate_pins_sequence_to_previous_input(self):
        prob = qp.condense(1.0, 0.5, 1.0, 0.0, 4, 2.0, 0.1, np.ones(4),
                           -10.0, 10.0, 0.0, 0.0, 0.5)
        s = qp.solve(prob)
        assert s.status == qp.STATUS_OPTIMAL
        assert s.x == pytest.approx(0.5 * np.ones(4), abs=1e-9)

    def test_rate_chain_limits_consecutive_moves(self):
        prob = qp.condense(1.0, 1.0, 1.0, 0.0, 5, 100.0, 1e-6, 5 * np.ones(5),
                           -10.0, 10.0, -0.1, 0.1, 0.0)
        s = qp.solve(prob)
        assert s.status == qp.STATUS_OPTIMAL
        u = s.x
        assert abs(u[0]) <= 0.1 + 1e-9
        assert np.abs(np.diff(u)).max() <= 0.1 + 1e-9

    def test_du_first_overrides_first_window(self):
        prob = qp.condense(1.0, 1.0, 1.0, 0.0, 3, 100.0, 1e-6, 5 * np.ones(3),
                           -10.0, 10.0, -1.0, 1.0, 0.2,
                           du_first=(-0.05, 0.05))
        s = qp.solve(prob)
        assert abs(s.x[0] - 0.2) <= 0.05 + 1e-9

    def test_dimension_mismatch_raises(self):
        with pytest.raises(ValueError):
            qp.condense(np.eye(2), [1.0], 1.0, [0.0, 0.0], 3, 1.0, 1.0,
                        np.ones(3), -1, 1, -1, 1, 0.0)

    def test_condensed_template_matches_one_shot(self):
        rng = np.random.default_rng(3)
        A = np.array([[0.9, 0.1], [0.0, 0.8]])
        B = np.array([0.1, 0.5])
        Cm = np.array([[1.0, 0.0]])
        x0 = rng.normal(size=2)
        ref = rng.normal(size=4)
        tpl = qp.CondensedMpc(A, B, Cm, 4, 2.0, 0.3, -1, 1, -0.5, 0.5)
        p1 = tpl.problem_for(x0, ref, 0.1)
        p2 = qp.condense(A, B, Cm, x0, 4, 2.0, 0.3, ref, -1, 1, -0.5, 0.5, 0.1)
        assert np.allclose(p1.H, p2.H)
        assert np.allclose(p1.g, p2.g)
        assert np.allclose(p1.l_ineq, p2.l_ineq)
