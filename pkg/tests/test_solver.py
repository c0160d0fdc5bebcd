import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ipl.polycore import build_centers, kernel_matrix
from ipl.solver import (
    AdmmConfig,
    SolverDivergence,
    fit_admm,
    fit_pinv,
    fit_weights,
    get_loss,
    u_update,
    v_update_newton,
    v_update_prox_hinge,
    w_update,
)


def kernel_problem(rng, T, D, s=2, noise=0.05):
    X = rng.random((T, D))
    A = kernel_matrix(X, build_centers(X, s, "first"), s)
    y = np.sin(3 * X[:, 0]) + X[:, -1] ** 2 + noise * rng.standard_normal(T)
    return A, y


def hinge_grid_oracle(b, y, mu):
    """Dense grid then local refinement of max(0, 1 - y v) + (v - b)^2 / (2 mu)."""
    f = lambda v: np.maximum(0.0, 1.0 - y * v) + (v - b) ** 2 / (2 * mu)
    lo, hi = min(b, y) - 2 * mu - 1, max(b, y) + 2 * mu + 1
    for _ in range(4):
        grid = np.linspace(lo, hi, 2001)
        k = int(np.argmin(f(grid)))
        step = grid[1] - grid[0]
        lo, hi = grid[max(k - 1, 0)] - step, grid[min(k + 1, 2000)] + step
    return grid[k]


def golden_oracle(fun, lo, hi, iters=200):
    g = (np.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    for _ in range(iters):
        if fun(c) < fun(d):
            b = d
        else:
            a = c
        c, d = b - g * (b - a), a + g * (b - a)
    return 0.5 * (a + b)


class TestLoss:
    def test_values(self):
        assert get_loss("squared").value(3.0, 1.0) == 4.0
        assert get_loss("hinge").value(0.25, 1.0) == 0.75
        assert get_loss("hinge").value(2.0, 1.0) == 0.0
        assert get_loss("logistic").value(0.0, 1.0) == pytest.approx(np.log(2))

    def test_unknown(self):
        with pytest.raises(ValueError):
            get_loss("huber")


class TestUUpdate:
    def test_identity(self):
        e1 = np.eye(3)[0]
        u = u_update(np.zeros(3), e1, np.zeros(3), np.eye(3), alpha=1.0, beta=1.0)
        np.testing.assert_allclose(u, 0.5 * e1)

    def test_cancelling_rhs(self):
        rng = np.random.default_rng(0)
        A, v = rng.standard_normal((8, 3)), rng.standard_normal(8)
        u = u_update(np.zeros(3), v, 2.0 * v, A, alpha=0.1, beta=2.0)
        np.testing.assert_allclose(u, 0.0, atol=1e-14)

    def test_dense_solve_oracle(self):
        rng = np.random.default_rng(1)
        A = rng.standard_normal((50, 10))
        up, v, w = rng.standard_normal(10), rng.standard_normal(50), rng.standard_normal(50)
        alpha, beta = 0.3, 1.7
        expected = np.linalg.solve(beta * A.T @ A + alpha * np.eye(10), alpha * up + beta * A.T @ v - A.T @ w)
        np.testing.assert_allclose(u_update(up, v, w, A, alpha, beta), expected, rtol=1e-10)


class TestVUpdate:
    def test_squared_consistent_point(self):
        v = v_update_newton(np.array([1.0]), np.array([1.0]), "squared", T=1, beta=1.0)
        assert v[0] == pytest.approx(1.0)

    def test_logistic_large_beta(self):
        rng = np.random.default_rng(2)
        b, y = rng.standard_normal(20), rng.choice([-1.0, 1.0], 20)
        v = v_update_newton(b, y, "logistic", T=5, beta=1e8)
        assert np.max(np.abs(v - b)) <= 1e-6

    def test_logistic_scalar_oracle(self):
        rng = np.random.default_rng(3)
        T, beta = 10, 1.0
        b, y = 3 * rng.standard_normal(T), rng.choice([-1.0, 1.0], T)
        v = v_update_newton(b, y, "logistic", T=T, beta=beta)
        for i in range(T):
            f = lambda z: np.logaddexp(0, -y[i] * z) / T + beta / 2 * (z - b[i]) ** 2
            ref = golden_oracle(f, b[i] - 5, b[i] + 5)
            assert abs(v[i] - ref) <= 1e-6

    def test_logistic_first_order_optimality(self):
        rng = np.random.default_rng(4)
        T, beta = 7, 0.01
        b, y = 50 * rng.standard_normal(200), rng.choice([-1.0, 1.0], 200)
        v = v_update_newton(b, y, "logistic", T=T, beta=beta)
        grad = -y / (1 + np.exp(y * v)) / T + beta * (v - b)
        assert np.max(np.abs(grad)) <= 1e-6

    def test_logistic_bisection_fallback(self):
        # one Newton iteration cannot converge; the bracketing fallback must
        b, y = np.array([30.0, -4.0]), np.array([-1.0, 1.0])
        v = v_update_newton(b, y, "logistic", T=1, beta=0.05, max_iters=1)
        grad = -y / (1 + np.exp(y * v)) + 0.05 * (v - b)
        assert np.max(np.abs(grad)) <= 1e-9

    def test_hinge_zero_loss_region(self):
        for mu in (0.01, 1.0, 10.0):
            v = v_update_prox_hinge(np.array([2.0]), np.array([1.0]), T=1, beta=1 / mu)
            assert v[0] == 2.0

    def test_hinge_linear_branch(self):
        v = v_update_prox_hinge(np.array([0.0]), np.array([1.0]), T=1, beta=10.0)
        assert v[0] == pytest.approx(0.1)

    def test_hinge_kink_branch(self):
        v = v_update_prox_hinge(np.array([0.95]), np.array([1.0]), T=1, beta=10.0)
        assert v[0] == 1.0

    def test_hinge_bad_label(self):
        with pytest.raises(ValueError):
            v_update_prox_hinge(np.array([0.0]), np.array([0.0]), T=1, beta=1.0)

    def test_hinge_grid_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            b, y, mu = rng.uniform(-3, 3), rng.choice([-1.0, 1.0]), 10 ** rng.uniform(-2, 1)
            v = v_update_prox_hinge(np.array([b]), np.array([y]), T=1, beta=1 / mu)[0]
            assert abs(v - hinge_grid_oracle(b, y, mu)) <= 1e-4

    @settings(max_examples=100, deadline=None)
    @given(
        b=st.floats(-10, 10), y=st.sampled_from([-1.0, 1.0]), mu=st.floats(1e-3, 10),
    )
    def test_hinge_subgradient_containment(self, b, y, mu):
        v = v_update_prox_hinge(np.array([b]), np.array([y]), T=1, beta=1 / mu)[0]
        # (b - v)/mu must lie in the subdifferential of max(0, 1 - y v)
        g = (b - v) / mu
        m = y * v
        if m > 1 + 1e-12:
            assert abs(g) <= 1e-9
        elif m < 1 - 1e-12:
            assert abs(g - (-y)) <= 1e-9 * (1 + abs(g))
        else:
            assert -1e-9 <= -y * g <= 1 + 1e-9


class TestWUpdate:
    def test_zero_residual(self):
        rng = np.random.default_rng(0)
        A, u = rng.standard_normal((5, 3)), rng.standard_normal(3)
        w = rng.standard_normal(5)
        np.testing.assert_array_equal(w_update(w, A, u, A @ u, 2.0), w)

    def test_arithmetic(self):
        A, u = np.eye(3), np.array([1.0, 0.0, 0.0])
        np.testing.assert_array_equal(w_update(np.zeros(3), A, u, np.zeros(3), 2.0), [2.0, 0, 0])

    def test_elementwise(self):
        rng = np.random.default_rng(1)
        A, u, v, w = rng.standard_normal((6, 4)), rng.standard_normal(4), rng.standard_normal(6), rng.standard_normal(6)
        out = w_update(w, A, u, v, 0.7)
        for i in range(6):
            assert out[i] == pytest.approx(w[i] + 0.7 * (sum(A[i, j] * u[j] for j in range(4)) - v[i]))


class TestPinv:
    def test_identity(self):
        y = np.array([1.0, -2.0, 3.0])
        np.testing.assert_allclose(fit_pinv(np.eye(3), y), y)

    def test_column_span(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((30, 5))
        y = A @ rng.standard_normal(5)
        u = fit_pinv(A, y)
        assert np.linalg.norm(A @ u - y) <= 1e-8 * np.linalg.norm(y)

    def test_minimum_norm(self):
        rng = np.random.default_rng(1)
        A = rng.standard_normal((20, 4))
        A = np.hstack([A, A[:, :1]])
        y = rng.standard_normal(20)
        u = fit_pinv(A, y)
        ridge = np.linalg.solve(A.T @ A + 1e-12 * np.eye(5), A.T @ y)
        np.testing.assert_allclose(A @ u, A @ ridge, atol=1e-6)
        assert np.linalg.norm(u) <= np.linalg.norm(ridge) + 1e-9
        # any other least-squares solution is longer
        null = np.array([1.0, 0, 0, 0, -1.0])
        assert np.linalg.norm(u) <= np.linalg.norm(u + 0.3 * null)

    def test_non_finite(self):
        with pytest.raises(ValueError):
            fit_pinv(np.array([[np.inf]]), np.array([1.0]))


class TestAdmm:
    def test_zero_target(self):
        rng = np.random.default_rng(0)
        A = rng.random((40, 6))
        u, rep = fit_admm(A, np.zeros(40), "squared")
        np.testing.assert_array_equal(u, 0.0)
        assert rep.converged

    def test_matches_pinv(self):
        rng = np.random.default_rng(1)
        A, y = kernel_problem(rng, 200, 5)
        u, rep = fit_admm(A, y, "squared")
        ref = A @ fit_pinv(A, y)
        assert rep.converged
        assert np.linalg.norm(A @ u - ref) <= 1e-6 * np.linalg.norm(ref)
        assert rep.primal_residual <= 1e-6 * np.sqrt(200)

    def test_objective_decreases(self):
        rng = np.random.default_rng(2)
        A, y = kernel_problem(rng, 300, 4)
        for loss, target in (("squared", y), ("hinge", np.sign(y - np.median(y))),
                             ("logistic", np.sign(y - np.median(y)))):
            _, rep = fit_admm(A, target, loss, AdmmConfig(max_iters=500))
            tr = rep.objective_trace
            assert tr[-1] <= get_loss(loss).objective(np.zeros_like(target), target)
            assert tr[-1] <= tr[0] + 1e-12

    def test_separable_hinge_toy(self):
        rng = np.random.default_rng(3)
        x = rng.random((200, 1))
        y = np.where(x[:, 0] > 0.5, 1.0, -1.0)
        A = kernel_matrix(x, build_centers(x, 1, "first"), 1)
        u, _ = fit_admm(A, y, "hinge")
        assert np.mean(np.where(A @ u >= 0, 1, -1) == y) == 1.0

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            fit_admm(np.array([[np.nan]]), np.array([1.0]))

    def test_rejects_bad_labels(self):
        with pytest.raises(ValueError):
            fit_admm(np.ones((3, 1)), np.array([0.0, 1.0, 2.0]), "hinge")

    def test_warns_underdetermined(self):
        with pytest.warns(RuntimeWarning, match="fewer samples"):
            fit_admm(np.random.default_rng(0).random((3, 5)), np.ones(3), "squared",
                     AdmmConfig(max_iters=5))

    def test_divergence_raises_with_report(self):
        # residual above the divergence limit aborts with the partial trace
        with pytest.raises(SolverDivergence) as info:
            fit_admm(np.ones((2, 1)), np.array([1e14, -1e14]), "squared")
        assert info.value.report.iterations == 1

    def test_max_iters_reported(self):
        rng = np.random.default_rng(4)
        A, y = kernel_problem(rng, 100, 3)
        _, rep = fit_admm(A, y, "squared", AdmmConfig(max_iters=2))
        assert rep.iterations == 2 and not rep.converged

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        A, y = kernel_problem(rng, 150, 3)
        t = np.sign(y - y.mean())
        u1, _ = fit_admm(A, t, "logistic", AdmmConfig(max_iters=300))
        u2, _ = fit_admm(A, t, "logistic", AdmmConfig(max_iters=300))
        assert u1.tobytes() == u2.tobytes()

    def test_fit_weights_routes(self):
        rng = np.random.default_rng(6)
        A, y = kernel_problem(rng, 100, 2)
        assert fit_weights(A, y)[1].method == "pinv"
        assert fit_weights(A, y, method="admm")[1].method == "admm"
        with pytest.raises(ValueError):
            fit_weights(A, np.sign(y), "hinge", method="pinv")

    def test_config_validation(self):
        with pytest.raises(ValueError):
            AdmmConfig(beta=0.0)
        with pytest.raises(ValueError):
            AdmmConfig(max_iters=0)
