import numpy as np
import pytest

from otkit import BarycenterProblem, barycenter_parallel, build_kernel
from otkit.core import SolveOptions, softmax_mat
from otkit.errors import BatchLargerThanData, ConfigError
from otkit.gradcheck import coordinate_fd, relative_error
from otkit.wdl import (
    BatchSampler,
    WdlConfig,
    WdlParams,
    batch_gradients,
    init_params,
    init_state,
    reconstruct,
    wdl_step,
    wdl_train,
)


@pytest.fixture
def setup():
    rng = np.random.default_rng(5)
    N, M, S = 6, 10, 2
    x = np.linspace(0, 1, N)
    ck = build_kernel((x[:, None] - x[None, :]) ** 2, 0.3)
    A = rng.dirichlet(np.ones(N), size=S).T
    W = rng.dirichlet(np.ones(S), size=M).T
    Y = reconstruct(A, W, ck, 30)
    return Y, ck


class TestInit:
    def test_zeros(self):
        p = init_params(4, 3, 5)
        np.testing.assert_allclose(p.atoms, 0.25)
        np.testing.assert_allclose(p.weights, 1 / 3)

    def test_seeded(self):
        p1 = init_params(4, 2, 3, seed=7, scheme="gaussian")
        p2 = init_params(4, 2, 3, seed=7, scheme="gaussian")
        np.testing.assert_array_equal(p1.alpha, p2.alpha)
        np.testing.assert_array_equal(p1.lam, p2.lam)
        np.testing.assert_allclose(p1.atoms.sum(axis=0), 1, atol=1e-15)
        assert np.all(p1.atoms > 0)

    def test_unknown_scheme(self):
        with pytest.raises(ConfigError):
            init_params(2, 2, 2, scheme="uniform")


class TestSampler:
    def test_epochs_cover_everything(self):
        s = BatchSampler(10, seed=1)
        seen = np.concatenate([s.next_batch(5) for _ in range(2)])
        np.testing.assert_array_equal(np.sort(seen), np.arange(10))

    def test_deterministic_and_resumable(self):
        s1 = BatchSampler(7, seed=3)
        s1.next_batch(3)
        snap = s1.get_state()
        rest = [s1.next_batch(3) for _ in range(4)]
        s2 = BatchSampler(7, seed=99)
        s2.set_state(snap)
        for r in rest:
            np.testing.assert_array_equal(s2.next_batch(3), r)

    def test_too_large(self):
        with pytest.raises(BatchLargerThanData):
            BatchSampler(3).next_batch(4)


class TestGradients:
    @pytest.mark.parametrize("mode", ["parallel", "log"])
    def test_alpha_fd(self, setup, mode):
        Y, ck = setup
        rng = np.random.default_rng(0)
        p = WdlParams(0.5 * rng.standard_normal((6, 2)), 0.5 * rng.standard_normal((2, 10)))
        idx = np.array([0, 3, 4])
        _, ga, _ = batch_gradients(p, Y, ck, idx, 20, mode)
        fd = coordinate_fd(lambda al: batch_gradients(WdlParams(al, p.lam), Y, ck, idx, 20, mode)[0], p.alpha, 1e-6)
        assert relative_error(fd, ga) <= 1e-3
        # the softmax Jacobian annihilates constant shifts
        np.testing.assert_allclose(ga.sum(axis=0), 0, atol=1e-10)

    def test_lambda_fd(self, setup):
        Y, ck = setup
        rng = np.random.default_rng(1)
        p = WdlParams(0.5 * rng.standard_normal((6, 2)), 0.5 * rng.standard_normal((2, 10)))
        idx = np.array([2, 5])
        _, _, gl = batch_gradients(p, Y, ck, idx, 20)
        for k, m in enumerate(idx):
            def f(col, m=m):
                lam = p.lam.copy()
                lam[:, m] = col
                return batch_gradients(WdlParams(p.alpha, lam), Y, ck, idx, 20)[0]

            assert relative_error(coordinate_fd(f, p.lam[:, m].copy(), 1e-6), gl[:, k]) <= 1e-3

    def test_shift_invariance(self, setup):
        Y, ck = setup
        p = init_params(6, 2, 10, seed=2, scheme="gaussian")
        q = WdlParams(p.alpha + np.array([[3.0, -1.0]]), p.lam)
        np.testing.assert_allclose(q.atoms, p.atoms, rtol=1e-14)
        l1 = batch_gradients(p, Y, ck, np.arange(4), 20)[0]
        l2 = batch_gradients(q, Y, ck, np.arange(4), 20)[0]
        assert l1 == pytest.approx(l2, rel=1e-12)


class TestStep:
    def test_zero_lr(self, setup):
        Y, ck = setup
        cfg = WdlConfig(topics=2, lr=0.0, batch_size=4, inner_iters=20, init="gaussian")
        st = init_state(Y, cfg)
        p0 = st.params.copy()
        idx = np.array([1, 2, 3, 7])
        p1, loss = wdl_step(st.params, Y, ck, cfg, st, idx)
        np.testing.assert_array_equal(p1.alpha, p0.alpha)
        np.testing.assert_array_equal(p1.lam, p0.lam)
        R = reconstruct(p0.atoms, p0.weights, ck, 20)
        assert loss == pytest.approx(((R[:, idx] - Y[:, idx]) ** 2).sum(axis=0).mean(), rel=1e-12)

    def test_zero_residual(self, setup):
        _, ck = setup
        p = init_params(6, 2, 4, seed=4, scheme="gaussian")
        Y = reconstruct(p.atoms, p.weights, ck, 20)
        Y = Y / Y.sum(axis=0)
        cfg = WdlConfig(topics=2, lr=0.1, batch_size=4, inner_iters=20, optimizer="sgd")
        st = init_state(Y, cfg, p.copy())
        p1, loss = wdl_step(p, Y, ck, cfg, st, np.arange(4))
        assert loss < 1e-26
        np.testing.assert_allclose(p1.alpha, p.alpha, atol=1e-12)
        np.testing.assert_allclose(p1.lam, p.lam, atol=1e-12)

    def test_only_sampled_columns_move(self, setup):
        Y, ck = setup
        cfg = WdlConfig(topics=2, lr=0.1, batch_size=3, inner_iters=20, init="gaussian")
        st = init_state(Y, cfg)
        p0 = st.params.copy()
        idx = np.array([0, 4, 4])
        p1, _ = wdl_step(st.params, Y, ck, cfg, st, idx)
        moved = np.any(p1.lam != p0.lam, axis=0)
        np.testing.assert_array_equal(np.flatnonzero(moved), [0, 4])
        assert st.lambda_opt[4].t == 1 and st.lambda_opt[1].t == 0

    def test_broadcast_moves_all(self, setup):
        Y, ck = setup
        cfg = WdlConfig(topics=2, lr=0.1, batch_size=3, inner_iters=20, init="gaussian", lambda_broadcast=True)
        st = init_state(Y, cfg)
        p0 = st.params.copy()
        p1, _ = wdl_step(st.params, Y, ck, cfg, st, np.array([0, 1, 2]))
        d = p1.lam - p0.lam
        assert np.all(d != 0)
        np.testing.assert_allclose(d, np.repeat(d[:, :1], d.shape[1], axis=1), rtol=1e-12)


class TestTrain:
    def test_zero_steps(self, setup):
        Y, ck = setup
        out = wdl_train(Y, ck, WdlConfig(topics=2, steps=0, batch_size=4))
        np.testing.assert_allclose(out["A"], 1 / 6)
        assert out["loss_history"] == []

    def test_loss_decreases_and_is_deterministic(self, setup):
        Y, ck = setup
        cfg = WdlConfig(topics=2, steps=40, batch_size=10, inner_iters=20, lr=0.05, init="gaussian", seed=1)
        h1 = wdl_train(Y, ck, cfg)["loss_history"]
        h2 = wdl_train(Y, ck, cfg)["loss_history"]
        assert h1 == h2
        assert h1[-1] < h1[0]

    def test_each_document_its_own_atom(self, setup):
        _, ck = setup
        Y = np.eye(6)[:, :3] * 0.7 + 0.05
        Y /= Y.sum(axis=0)
        cfg = WdlConfig(topics=3, steps=30, batch_size=3, inner_iters=20, lr=0.1, init="gaussian")
        h = wdl_train(Y, ck, cfg)["loss_history"]
        assert h[-1] < h[0]

    def test_columns_stay_on_simplex(self, setup):
        Y, ck = setup
        seen = []
        cfg = WdlConfig(topics=2, steps=5, batch_size=4, inner_iters=10, lr=0.5, init="gaussian")
        wdl_train(Y, ck, cfg, callback=lambda st: seen.append((st.params.atoms, st.params.weights)))
        for A, W in seen:
            np.testing.assert_allclose(A.sum(axis=0), 1, atol=1e-14)
            np.testing.assert_allclose(W.sum(axis=0), 1, atol=1e-14)

    def test_resume_matches_uninterrupted(self, setup):
        Y, ck = setup
        cfg = WdlConfig(topics=2, steps=6, batch_size=4, inner_iters=10, init="gaussian")
        full = wdl_train(Y, ck, cfg)
        half = wdl_train(Y, ck, WdlConfig(**{**cfg.__dict__, "steps": 3}))
        rest = wdl_train(Y, ck, cfg, state=half["state"])
        assert rest["loss_history"] == full["loss_history"]
        np.testing.assert_array_equal(rest["A"], full["A"])

    def test_rectangular_cost_rejected(self):
        ck = build_kernel(np.ones((3, 4)), 1.0)
        with pytest.raises(ConfigError):
            wdl_train(np.full((3, 2), 1 / 3), ck, WdlConfig(topics=1, batch_size=1))

    def test_batch_too_large(self, setup):
        Y, ck = setup
        with pytest.raises(BatchLargerThanData):
            wdl_train(Y, ck, WdlConfig(topics=2, batch_size=11))


class TestReconstruct:
    def test_single_atom(self, setup):
        _, ck = setup
        A = softmax_mat(np.random.default_rng(0).standard_normal((6, 1)))
        R = reconstruct(A, np.ones((1, 4)), ck, 20)
        np.testing.assert_array_equal(R, np.repeat(R[:, :1], 4, axis=1))

    def test_one_hot(self, setup):
        _, ck = setup
        A = softmax_mat(np.random.default_rng(1).standard_normal((6, 2)))
        W = np.array([[1.0, 0.0], [0.0, 1.0]])
        R = reconstruct(A, W, ck, 20)
        opts = SolveOptions(max_iters=20, fixed_iters=True)
        for s in range(2):
            ref = barycenter_parallel(BarycenterProblem(A[:, [s]], np.ones(1), ck), opts).barycenter
            np.testing.assert_allclose(R[:, s], ref, atol=1e-14)

    def test_per_column(self, setup):
        _, ck = setup
        rng = np.random.default_rng(2)
        A = softmax_mat(rng.standard_normal((6, 3)))
        W = softmax_mat(rng.standard_normal((3, 4)))
        R = reconstruct(A, W, ck, 15, "log")
        from otkit.barycenter import barycenter_log

        opts = SolveOptions(max_iters=15, fixed_iters=True)
        for m in range(4):
            np.testing.assert_array_equal(R[:, m], barycenter_log(BarycenterProblem(A, W[:, m], ck), opts).barycenter)
