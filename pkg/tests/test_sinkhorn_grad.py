import numpy as np
import pytest

from otkit import build_kernel, kernels, solve_log_with_grad, solve_vanilla_with_grad
from otkit.errors import NonPositiveHistogram, TraceTooShort
from otkit.gradcheck import relative_error, simplex_fd
from otkit.sinkhorn_grad import backward_log, backward_vanilla, forward_log, forward_vanilla, sinkhorn_loss

from .conftest import random_simplex


def instance(seed, M=None, N=None, eps=None):
    rng = np.random.default_rng(seed)
    M = M or int(rng.integers(2, 11))
    N = N or int(rng.integers(2, 11))
    eps = eps or rng.uniform(0.3, 1.0)
    return random_simplex(rng, M), random_simplex(rng, N), build_kernel(rng.random((M, N)), eps)


def coordinate_fd(a, b, ck, L, mode, h=1e-6):
    """Unconstrained central differences (the loss is defined off the simplex too)."""
    out = np.empty_like(a)
    for i in range(a.size):
        d = np.zeros_like(a)
        d[i] = h
        lp = _raw_loss(a + d, b, ck, L, mode)
        lm = _raw_loss(a - d, b, ck, L, mode)
        out[i] = (lp - lm) / (2 * h)
    return out


def _raw_loss(a, b, ck, L, mode):
    # bypass histogram validation so that off-simplex probes are possible
    K, C, eps = ck.kernel, ck.cost, ck.epsilon
    if mode == "vanilla":
        v = np.ones(b.size)
        for _ in range(L):
            u = a / (K @ v)
            v = b / (K.T @ u)
        P = u[:, None] * K * v[None, :]
    else:
        f, g = np.zeros(a.size), np.zeros(b.size)
        for _ in range(L):
            f = f + eps * np.log(a) + kernels.softmin_rows(C, f, g, eps)
            g = g + eps * np.log(b) + kernels.softmin_cols(C, f, g, eps)
        P = np.exp(-(C - f[:, None] - g[None, :]) / eps)
    return (P * C).sum() + eps * (P * (np.log(P) - 1)).sum()


class TestVanillaGrad:
    @pytest.mark.parametrize("seed", range(6))
    def test_simplex_fd(self, seed):
        a, b, ck = instance(seed)
        g = solve_vanilla_with_grad(a, b, ck, 100).grad_a
        fd, an = simplex_fd(lambda x: sinkhorn_loss(x, b, ck, 100, "vanilla"), a, g, 1e-6)
        assert relative_error(fd, an) <= 1e-4

    @pytest.mark.parametrize("seed", range(3))
    def test_full_fd(self, seed):
        # every component, not only tangent directions
        a, b, ck = instance(seed, eps=0.5)
        g = solve_vanilla_with_grad(a, b, ck, 30).grad_a
        np.testing.assert_allclose(coordinate_fd(a, b, ck, 30, "vanilla"), g, rtol=1e-5, atol=1e-7)

    def test_single_cell(self):
        res = solve_vanilla_with_grad([1.0], [1.0], build_kernel([[0.7]], 0.5), 10)
        np.testing.assert_allclose(res.coupling.plan, [[1.0]])
        assert np.all(np.isfinite(res.grad_a))
        fd = coordinate_fd(np.array([1.0]), np.array([1.0]), build_kernel([[0.7]], 0.5), 10, "vanilla")
        # b = [1] pins P = [[1]] after the last column update, so the gradient is 0
        np.testing.assert_allclose(res.grad_a, fd, atol=1e-9)
        assert res.grad_a[0] == 0.0

    def test_symmetric_instance(self):
        C = np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]])
        u = np.full(3, 1 / 3)
        g = solve_vanilla_with_grad(u, u, build_kernel(C, 0.5), 50).grad_a
        # the center bin differs from the two ends, which mirror each other
        assert g[0] == pytest.approx(g[2], rel=1e-12)
        C = np.ones((3, 3)) - np.eye(3)
        g = solve_vanilla_with_grad(u, u, build_kernel(C, 0.5), 50).grad_a
        np.testing.assert_allclose(g, g[0], rtol=1e-10, atol=1e-12)

    def test_replay_determinism(self):
        a, b, ck = instance(1)
        tr = forward_vanilla(a, b, ck, 40)
        g1 = backward_vanilla(tr)
        g2 = backward_vanilla(tr)
        np.testing.assert_array_equal(g1, g2)
        with pytest.raises(ValueError):
            tr.u[0, 0] = 5.0

    def test_trace_length(self):
        a, b, ck = instance(2)
        tr = forward_vanilla(a, b, ck, 7)
        assert tr.u.shape[0] == 8 and tr.iters == 7
        with pytest.raises(TraceTooShort):
            solve_vanilla_with_grad(a, b, ck, 0)


class TestLogGrad:
    @pytest.mark.parametrize("seed", range(6))
    def test_simplex_fd(self, seed):
        a, b, ck = instance(seed)
        g = solve_log_with_grad(a, b, ck, 100).grad_a
        fd, an = simplex_fd(lambda x: sinkhorn_loss(x, b, ck, 100, "log"), a, g, 1e-6)
        assert relative_error(fd, an) <= 1e-4

    @pytest.mark.parametrize("seed", range(3))
    def test_full_fd(self, seed):
        a, b, ck = instance(seed, eps=0.5)
        g = solve_log_with_grad(a, b, ck, 30).grad_a
        np.testing.assert_allclose(coordinate_fd(a, b, ck, 30, "log"), g, rtol=1e-5, atol=1e-7)

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_vanilla(self, seed):
        a, b, ck = instance(seed, 6, 7, 0.5)
        gv = solve_vanilla_with_grad(a, b, ck, 200).grad_a
        gl = solve_log_with_grad(a, b, ck, 200).grad_a
        assert np.abs(gv - gl).max() <= 1e-5 * np.abs(gv).max()

    def test_W_X_stochastic(self):
        a, b, ck = instance(3)
        tr = forward_log(a, b, ck, 20)
        for l in range(1, 21):
            W = kernels.softmin_cols_grad(ck.cost, tr.f[l], tr.g[l - 1], ck.epsilon)
            X = kernels.softmin_rows_grad(ck.cost, tr.f[l], tr.g[l], ck.epsilon)
            assert np.all(W > 0) and np.all(X > 0)
            np.testing.assert_allclose(W.sum(axis=0), 1, atol=1e-12)
            np.testing.assert_allclose(X.sum(axis=1), 1, atol=1e-12)

    def test_replay_determinism(self):
        a, b, ck = instance(4)
        tr = forward_log(a, b, ck, 40)
        np.testing.assert_array_equal(backward_log(tr), backward_log(tr))

    def test_zero_entry(self):
        with pytest.raises(NonPositiveHistogram):
            solve_log_with_grad([0.0, 1.0], [0.5, 0.5], build_kernel(np.ones((2, 2)), 1.0), 5)

    def test_last_iteration_term_matters(self):
        # dropping the l = L contribution visibly breaks agreement with finite differences
        a, b, ck = instance(5, 4, 4, 0.5)
        tr = forward_log(a, b, ck, 1)
        g = backward_log(tr)
        fd = coordinate_fd(a, b, ck, 1, "log")
        np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-8)
        assert np.abs(fd).max() > 1e-3
