"""Gradients of the quadratic reconstruction loss ``|b - target|^2`` of a barycenter.

The forward pass is the barycenter solver run for exactly ``L``
iterations; the backward pass replays its trace to give the adjoints of
the atoms ``A`` and the weights ``w``.  The loss enters only through the
seed adjoint (:func:`quadratic_loss`), so other losses need only a new
seed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .barycenter import (
    BarycenterProblem,
    LogTrace,
    ParallelTrace,
    barycenter_log,
    barycenter_parallel,
)
from .core import SolveOptions, validate_histogram
from .errors import DimensionMismatch, TraceTooShort


@dataclass
class BarycenterGradResult:
    barycenter: np.ndarray
    loss: float
    grad_atoms: np.ndarray
    grad_weights: np.ndarray
    trace: object = None


def quadratic_loss(b, target):
    """Loss value and its gradient with respect to ``b``."""
    r = b - target
    return float(r @ r), 2.0 * r


def _forward(prob, target, L, solver):
    L = int(L)
    if L < 1:
        raise TraceTooShort(f"a differentiable solve needs at least one iteration, got {L}")
    t = validate_histogram(target)
    if t.shape[0] != prob.ck.cost.shape[1]:
        raise DimensionMismatch(f"target of length {t.shape[0]} does not fit cost {prob.ck.cost.shape}")
    res = solver(prob, SolveOptions(max_iters=L, fixed_iters=True))
    return t, res


def backward_parallel(prob: BarycenterProblem, tr: ParallelTrace, bbar):
    """Adjoints ``(A_bar, w_bar)`` of the scaling iteration given ``bbar = dloss/db[L]``."""
    K, w = prob.ck.kernel, prob.weights
    L = tr.iters
    U, V, b, KV, KTU = tr.U, tr.V, tr.b, tr.KV, tr.KTU
    logKTU = np.log(KTU[L])
    Ubar = K @ (np.outer(bbar, w) * V[L])
    Abar = Ubar / KV[L - 1]
    wbar = logKTU.T @ (bbar * b[L])
    for l in range(L - 1, 0, -1):
        Vbar = -(K.T @ (Ubar * U[l + 1] / KV[l]))
        VbarK = Vbar / KTU[l]
        bbar = VbarK.sum(axis=1)
        Ubar = K @ ((np.outer(bbar, w) - VbarK) * V[l])
        Abar = Abar + Ubar / KV[l - 1]
        wbar = wbar + np.log(KTU[l]).T @ (bbar * b[l])
    return Abar, wbar


def backward_log(prob: BarycenterProblem, tr: LogTrace, logbbar):
    """Adjoints ``(A_bar, w_bar)`` of the log-domain iteration given ``dloss/dlog b[L]``.

    ``W_s(F, G)`` are the column-wise and ``X_s(F, G)`` the row-wise
    soft-min gradients of ``R(F_s, G_s)``, each (M, N) per atom.
    """
    C, eps = prob.ck.cost, prob.ck.epsilon
    A, w = prob.atoms, prob.weights
    L = tr.iters
    F, G, Q = tr.F, tr.G, tr.Q
    W = kernels.softmin_cols_grad_batch(C, F[L], G[L - 1], eps)  # (S, M, N)
    Fbar = (w / eps)[None, :] * np.einsum("smn,n->ms", W, logbbar)
    Abar = eps * Fbar / A
    wbar = -(Q[L].T @ logbbar) / eps
    for l in range(L - 1, 0, -1):
        X = kernels.softmin_rows_grad_batch(C, F[l], G[l], eps)
        Gbar = -np.einsum("smn,ms->ns", X, Fbar)
        logbbar = eps * Gbar.sum(axis=1)
        W = kernels.softmin_cols_grad_batch(C, F[l], G[l - 1], eps)
        Fbar = (w / eps)[None, :] * np.einsum("smn,n->ms", W, logbbar) - np.einsum(
            "smn,ns->ms", W, Gbar
        )
        Abar = Abar + eps * Fbar / A
        wbar = wbar - (Q[l].T @ logbbar) / eps
    return Abar, wbar


def barycenter_parallel_grad(prob: BarycenterProblem, target, L=60) -> BarycenterGradResult:
    """Scaling-iteration barycenter after ``L`` iterations, with loss gradients.

    Parameters
    ----------
    prob : BarycenterProblem
    target : array_like, shape (N,)
    L : int

    Returns
    -------
    BarycenterGradResult
        ``grad_atoms`` is (M, S), ``grad_weights`` is (S,).  No projection
        onto the simplex tangent is applied.
    """
    t, res = _forward(prob, target, L, barycenter_parallel)
    b = res.barycenter
    loss, bbar = quadratic_loss(b, t)
    Abar, wbar = backward_parallel(prob, res.trace, bbar)
    return BarycenterGradResult(b, loss, Abar, wbar, res.trace)


def barycenter_log_grad(prob: BarycenterProblem, target, L=60) -> BarycenterGradResult:
    """Log-domain barycenter after ``L`` iterations, with loss gradients."""
    t, res = _forward(prob, target, L, barycenter_log)
    b = res.barycenter
    loss, bbar = quadratic_loss(b, t)
    Abar, wbar = backward_log(prob, res.trace, bbar * b)
    return BarycenterGradResult(b, loss, Abar, wbar, res.trace)


def barycenter_grad(prob: BarycenterProblem, target, L=60, mode="parallel") -> BarycenterGradResult:
    if mode == "log":
        return barycenter_log_grad(prob, target, L)
    if mode == "parallel":
        return barycenter_parallel_grad(prob, target, L)
    raise ValueError(f"mode must be 'parallel' or 'log', got {mode!r}")


def barycenter_loss(prob: BarycenterProblem, target, L=60, mode="parallel") -> float:
    """Quadratic loss after exactly ``L`` iterations (finite-difference target)."""
    solver = barycenter_log if mode == "log" else barycenter_parallel
    t, res = _forward(prob, target, L, solver)
    return quadratic_loss(res.barycenter, t)[0]
