"""Wasserstein dictionary learning.

Documents (columns of ``Y``, shape (N, M)) are reconstructed as
barycenters of ``S`` atoms.  Atoms and per-document weights are the
column-wise softmax images of unconstrained logits ``alpha`` (N, S) and
``lam`` (S, M), so plain first-order optimizers keep them on the simplex.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .barycenter import BarycenterProblem, barycenter_log, barycenter_parallel
from .barycenter_grad import barycenter_grad
from .core import CostKernelPair, SolveOptions, softmax_mat, softmax_vjp, validate_histogram_batch
from .errors import BatchLargerThanData, ConfigError, DimensionMismatch
from .optim import OptimizerState, step

logger = logging.getLogger(__name__)


@dataclass
class WdlParams:
    """Atom logits ``alpha`` (N, S) and weight logits ``lam`` (S, M)."""

    alpha: np.ndarray
    lam: np.ndarray

    @property
    def atoms(self):
        return softmax_mat(self.alpha)

    @property
    def weights(self):
        return softmax_mat(self.lam)

    def copy(self):
        return WdlParams(self.alpha.copy(), self.lam.copy())


@dataclass
class WdlConfig:
    """Training configuration.

    ``epsilon`` is optional here because the cost/kernel pair passed to
    :func:`wdl_train` already carries it; if given it must agree.
    ``init`` is ``"zeros"`` or ``"gaussian"`` (scale ``init_scale``).
    Zero logits give identical atoms, which stay identical under every
    update, so symmetric problems need the gaussian scheme.
    """

    topics: int = 2
    epsilon: Optional[float] = None
    inner_iters: int = 50
    mode: str = "parallel"
    optimizer: str = "adam"
    lr: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    weight_decay: float = 0.01
    batch_size: int = 8
    steps: int = 200
    seed: int = 0
    init: str = "zeros"
    init_scale: float = 0.1
    lambda_broadcast: bool = False
    track_full_loss: bool = False

    def validate(self):
        if self.topics < 1 or self.batch_size < 1 or self.steps < 0 or self.inner_iters < 1:
            raise ConfigError("topics, batch_size and inner_iters must be >= 1 and steps >= 0")
        if self.mode not in ("parallel", "log"):
            raise ConfigError(f"mode must be 'parallel' or 'log', got {self.mode!r}")
        if self.init not in ("zeros", "gaussian"):
            raise ConfigError(f"init must be 'zeros' or 'gaussian', got {self.init!r}")
        if self.optimizer not in ("sgd", "adam", "adamw"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        return self

    def optimizer_state(self):
        return OptimizerState(
            self.optimizer, self.lr, self.beta1, self.beta2, self.eps_hat, self.weight_decay
        )


def init_params(N, S, M, seed=0, scheme="zeros", sigma=0.1) -> WdlParams:
    """Initial logits; ``"gaussian"`` draws N(0, sigma^2) entries from ``seed``."""
    if scheme == "zeros":
        return WdlParams(np.zeros((N, S)), np.zeros((S, M)))
    if scheme == "gaussian":
        rng = np.random.default_rng([int(seed), 0])
        return WdlParams(sigma * rng.standard_normal((N, S)), sigma * rng.standard_normal((S, M)))
    raise ConfigError(f"unknown init scheme {scheme!r}")


class BatchSampler:
    """Sequential passes over seeded shuffles of ``range(n)``.

    A batch that straddles two epochs takes the tail of one permutation
    and the head of the next, so it may contain a document twice.
    """

    def __init__(self, n, seed=0):
        self.n = int(n)
        self.rng = np.random.default_rng([int(seed), 1])
        self.perm = None
        self.pos = 0

    def next_batch(self, B):
        if B > self.n:
            raise BatchLargerThanData(f"batch size {B} exceeds the {self.n} documents")
        out = []
        while len(out) < B:
            if self.perm is None or self.pos >= self.n:
                self.perm = self.rng.permutation(self.n)
                self.pos = 0
            take = min(B - len(out), self.n - self.pos)
            out.extend(int(i) for i in self.perm[self.pos:self.pos + take])
            self.pos += take
        return np.array(out, dtype=np.int64)

    def get_state(self):
        return {
            "n": self.n,
            "rng": self.rng.bit_generator.state,
            "perm": None if self.perm is None else self.perm.tolist(),
            "pos": self.pos,
        }

    def set_state(self, st):
        self.n = int(st["n"])
        self.rng.bit_generator.state = st["rng"]
        self.perm = None if st["perm"] is None else np.array(st["perm"], dtype=np.int64)
        self.pos = int(st["pos"])


@dataclass
class WdlState:
    """Everything needed to resume training bit-for-bit."""

    params: WdlParams
    alpha_opt: OptimizerState
    lambda_opt: list  # one state per document, or a single state when broadcasting
    sampler: BatchSampler
    step: int = 0
    loss_history: list = field(default_factory=list)
    full_loss_history: list = field(default_factory=list)


def init_state(Y, cfg: WdlConfig, params: WdlParams = None) -> WdlState:
    N, M = np.shape(Y)
    if params is None:
        params = init_params(N, cfg.topics, M, cfg.seed, cfg.init, cfg.init_scale)
    proto = cfg.optimizer_state()
    lam_opt = [proto.clone_empty()] if cfg.lambda_broadcast else [proto.clone_empty() for _ in range(M)]
    return WdlState(params, proto.clone_empty(), lam_opt, BatchSampler(M, cfg.seed))


def _check_data(Y, ck: CostKernelPair, cfg: WdlConfig):
    cfg.validate()
    N0, N1 = ck.cost.shape
    if N0 != N1:
        raise ConfigError(f"dictionary learning needs a square cost matrix, got {ck.cost.shape}")
    if cfg.epsilon is not None and float(cfg.epsilon) != ck.epsilon:
        raise ConfigError(f"config epsilon {cfg.epsilon} differs from kernel epsilon {ck.epsilon}")
    Y = validate_histogram_batch(Y)
    if Y.shape[0] != N0:
        raise DimensionMismatch(f"data has {Y.shape[0]} bins but cost is {ck.cost.shape}")
    if cfg.batch_size > Y.shape[1]:
        raise BatchLargerThanData(f"batch size {cfg.batch_size} exceeds the {Y.shape[1]} documents")
    return Y


def batch_gradients(params: WdlParams, Y, ck: CostKernelPair, idx, inner_iters=50, mode="parallel"):
    """Mean batch loss and its gradients with respect to the logits.

    Returns
    -------
    loss : float
        Mean of ``|b_m - y_m|^2`` over the batch.
    g_alpha : ndarray, shape (N, S)
    g_lam_cols : ndarray, shape (S, B)
        Column ``k`` is the gradient with respect to ``lam[:, idx[k]]``.
    """
    A = params.atoms
    Wt = params.weights
    B = len(idx)
    gA = np.zeros_like(A)
    wbars = np.empty((A.shape[1], B))
    losses = np.empty(B)
    for k, m in enumerate(idx):
        prob = BarycenterProblem(A, Wt[:, m], ck)
        res = barycenter_grad(prob, Y[:, m], inner_iters, mode)
        losses[k] = res.loss
        gA += res.grad_atoms
        wbars[:, k] = res.grad_weights
    g_alpha = softmax_vjp(A, gA / B)
    g_lam_cols = softmax_vjp(Wt[:, idx], wbars) / B
    return float(losses.sum() / B), g_alpha, g_lam_cols


def full_loss(params: WdlParams, Y, ck: CostKernelPair, inner_iters=50, mode="parallel"):
    """Mean reconstruction loss over every document."""
    R = reconstruct(params.atoms, params.weights, ck, inner_iters, mode)
    return float(((R - Y) ** 2).sum(axis=0).mean())


def wdl_step(params: WdlParams, Y, ck: CostKernelPair, cfg: WdlConfig, state: WdlState, idx=None):
    """One mini-batch update; returns ``(new_params, batch_loss)``.

    ``state`` supplies the optimizer buffers and the batch sampler and is
    advanced in place.  The loss is evaluated before the update.
    """
    if idx is None:
        idx = state.sampler.next_batch(cfg.batch_size)
    loss, g_alpha, g_cols = batch_gradients(params, Y, ck, idx, cfg.inner_iters, cfg.mode)
    alpha = step(state.alpha_opt, params.alpha, g_alpha)
    lam = params.lam.copy()
    if cfg.lambda_broadcast:
        g = g_cols.sum(axis=1)
        lam = step(state.lambda_opt[0], lam, np.repeat(g[:, None], lam.shape[1], axis=1))
    else:
        G = np.zeros_like(lam)
        np.add.at(G.T, idx, g_cols.T)
        for m in np.unique(idx):
            lam[:, m] = step(state.lambda_opt[m], lam[:, m], G[:, m])
    return WdlParams(alpha, lam), loss


def wdl_train(Y, ck: CostKernelPair, cfg: WdlConfig, state: WdlState = None, callback=None):
    """Run (or resume) training until ``cfg.steps`` updates have been made.

    Returns
    -------
    dict
        ``A`` (N, S) atoms, ``W`` (S, M) weights, ``loss_history`` (batch
        loss before each step), ``full_loss_history`` (full-data loss
        before each step, when ``cfg.track_full_loss``) and the final
        ``state``.
    """
    Y = _check_data(Y, ck, cfg)
    if state is None:
        state = init_state(Y, cfg)
    while state.step < cfg.steps:
        if cfg.track_full_loss:
            state.full_loss_history.append(full_loss(state.params, Y, ck, cfg.inner_iters, cfg.mode))
        state.params, loss = wdl_step(state.params, Y, ck, cfg, state)
        state.loss_history.append(loss)
        state.step += 1
        logger.debug("step %d batch loss %.6g", state.step, loss)
        if callback is not None:
            callback(state)
    return {
        "A": state.params.atoms,
        "W": state.params.weights,
        "loss_history": list(state.loss_history),
        "full_loss_history": list(state.full_loss_history),
        "state": state,
    }


def reconstruct(A, W, ck: CostKernelPair, inner_iters=50, mode="parallel"):
    """Barycenter of the atoms ``A`` under each weight column of ``W``; shape (N, M)."""
    A = np.asarray(A, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if A.shape[1] != W.shape[0]:
        raise DimensionMismatch(f"{A.shape[1]} atoms but weights have {W.shape[0]} rows")
    solver = barycenter_log if mode == "log" else barycenter_parallel
    opts = SolveOptions(max_iters=int(inner_iters), fixed_iters=True, mode=mode)
    out = np.empty((ck.cost.shape[1], W.shape[1]))
    for m in range(W.shape[1]):
        out[:, m] = solver(BarycenterProblem(A, W[:, m], ck), opts).barycenter
    return out
