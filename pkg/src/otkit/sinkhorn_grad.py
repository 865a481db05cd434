"""Reverse-mode gradient of the entropic loss with respect to the source histogram.

The forward pass runs a fixed number ``L`` of Sinkhorn iterations and
records every iterate.  The backward pass replays that trace in reverse,
propagating adjoints of the scalings (vanilla) or of the dual potentials
(log domain) down to ``a``.  Forward and backward are separate functions
so a trace can be replayed any number of times; trace arrays are
read-only.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import CostKernelPair, Coupling, entropic_loss, validate_histogram
from .errors import KernelDegenerate, NumericOverflow, TraceTooShort
from .sinkhorn import _OVERFLOW_HINT, _check_shapes, check_kernel_support


@dataclass(frozen=True)
class VanillaTrace:
    """Iterates of a fixed-length vanilla solve.

    ``u[l]``, ``v[l]`` for ``l = 0..L``; ``Kv[l] = K v[l]`` for
    ``l = 0..L-1`` and ``KTu[l] = K^T u[l]`` for ``l = 1..L`` (row 0 unused).
    """

    a: np.ndarray
    b: np.ndarray
    ck: CostKernelPair
    u: np.ndarray
    v: np.ndarray
    Kv: np.ndarray
    KTu: np.ndarray

    @property
    def iters(self):
        return self.u.shape[0] - 1


@dataclass(frozen=True)
class LogTrace:
    """Potentials ``f[l]``, ``g[l]`` for ``l = 0..L`` of a fixed-length log solve."""

    a: np.ndarray
    b: np.ndarray
    ck: CostKernelPair
    f: np.ndarray
    g: np.ndarray

    @property
    def iters(self):
        return self.f.shape[0] - 1


@dataclass
class GradResult:
    coupling: Coupling
    loss: float
    grad_a: np.ndarray
    trace: object = None


def _freeze(*arrays):
    for x in arrays:
        x.setflags(write=False)


def _check_iters(L):
    L = int(L)
    if L < 1:
        raise TraceTooShort(f"a differentiable solve needs at least one iteration, got {L}")
    return L


def forward_vanilla(a, b, ck: CostKernelPair, L=100) -> VanillaTrace:
    """Run exactly ``L`` vanilla iterations and record the trace."""
    L = _check_iters(L)
    a = validate_histogram(a)
    b = validate_histogram(b)
    _check_shapes(a, b, ck)
    K = ck.kernel
    check_kernel_support(K)
    M, N = K.shape
    u = np.empty((L + 1, M))
    v = np.empty((L + 1, N))
    Kv = np.empty((L + 1, M))
    KTu = np.zeros((L + 1, N))
    u[0] = 1.0
    v[0] = 1.0
    with np.errstate(over="ignore", divide="ignore", invalid="ignore", under="ignore"):
        Kv[0] = K @ v[0]
        for l in range(1, L + 1):
            if np.any(Kv[l - 1] == 0):
                raise KernelDegenerate(f"Kv has a zero entry at iteration {l}" + _OVERFLOW_HINT)
            u[l] = a / Kv[l - 1]
            KTu[l] = K.T @ u[l]
            if np.any(KTu[l] == 0):
                raise KernelDegenerate(f"K^T u has a zero entry at iteration {l}" + _OVERFLOW_HINT)
            v[l] = b / KTu[l]
            Kv[l] = K @ v[l]
            if not (np.all(np.isfinite(u[l])) and np.all(np.isfinite(v[l]))):
                raise NumericOverflow(f"scalings became non-finite at iteration {l}" + _OVERFLOW_HINT)
    _freeze(u, v, Kv, KTu)
    return VanillaTrace(a, b, ck, u, v, Kv, KTu)


def backward_vanilla(tr: VanillaTrace):
    """Adjoint of ``a`` from a recorded vanilla trace.

    Seeds ``Pbar = C + eps log P`` and runs the scaling adjoints from the
    last iteration down to the first.  ``C + eps log P`` is evaluated as
    ``eps (log u_i + log v_j)``, which equals it wherever ``P > 0`` and
    stays finite at zero entries of ``a``.
    """
    K, eps = tr.ck.kernel, tr.ck.epsilon
    L = tr.iters
    u, v, Kv, KTu = tr.u, tr.v, tr.Kv, tr.KTu
    with np.errstate(divide="ignore"):
        lu = np.where(u[L] > 0, np.log(u[L]), 0.0)
        lv = np.where(v[L] > 0, np.log(v[L]), 0.0)
    PbarK = eps * (lu[:, None] + lv[None, :]) * K
    vbar = PbarK.T @ u[L]
    ubar = PbarK @ v[L] - K @ (vbar * v[L] / KTu[L])
    abar = ubar / Kv[L - 1]
    for l in range(L - 1, 0, -1):
        vbar = -(K.T @ (ubar * u[l + 1] / Kv[l]))
        ubar = -(K @ (vbar * v[l] / KTu[l]))
        abar = abar + ubar / Kv[l - 1]
    return abar


def _vanilla_plan(tr: VanillaTrace):
    L = tr.iters
    return tr.u[L][:, None] * tr.ck.kernel * tr.v[L][None, :]


def solve_vanilla_with_grad(a, b, ck: CostKernelPair, L=100) -> GradResult:
    """Vanilla Sinkhorn for exactly ``L`` iterations plus ``d loss / d a``.

    Parameters
    ----------
    a, b : array_like
        Source and target histograms.
    ck : CostKernelPair
    L : int
        Iteration count; the backward pass indexes the full trace.

    Returns
    -------
    GradResult
        Coupling, entropic loss and the adjoint ``grad_a``.
    """
    tr = forward_vanilla(a, b, ck, L)
    P = _vanilla_plan(tr)
    loss = entropic_loss(P, ck.cost, ck.epsilon)
    return GradResult(Coupling(P, tr.a, tr.b), loss, backward_vanilla(tr), tr)


def forward_log(a, b, ck: CostKernelPair, L=100, clamp=False) -> LogTrace:
    """Run exactly ``L`` log-domain iterations and record the potentials."""
    L = _check_iters(L)
    a = validate_histogram(a, strict_positive=True, clamp=clamp)
    b = validate_histogram(b, strict_positive=True, clamp=clamp)
    _check_shapes(a, b, ck)
    C, eps = ck.cost, ck.epsilon
    la, lb = np.log(a), np.log(b)
    M, N = C.shape
    f = np.zeros((L + 1, M))
    g = np.zeros((L + 1, N))
    for l in range(1, L + 1):
        f[l] = f[l - 1] + eps * la + kernels.softmin_rows(C, f[l - 1], g[l - 1], eps)
        g[l] = g[l - 1] + eps * lb + kernels.softmin_cols(C, f[l], g[l - 1], eps)
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
        raise NumericOverflow("dual potentials became non-finite")
    _freeze(f, g)
    return LogTrace(a, b, ck, f, g)


def backward_log(tr: LogTrace):
    """Adjoint of ``a`` from a recorded log-domain trace.

    ``W(f, g)`` stacks the column-wise soft-min gradients of ``R(f, g)``
    and ``X(f, g)`` the row-wise ones, both as (M, N) arrays.  Every
    iteration ``l = 1..L`` contributes ``eps fbar[l] / a``.
    """
    C, eps = tr.ck.cost, tr.ck.epsilon
    L = tr.iters
    f, g, a = tr.f, tr.g, tr.a
    P = np.exp(-((C - f[L][:, None]) - g[L][None, :]) / eps)
    PbarP = (f[L][:, None] + g[L][None, :]) * P
    gbar = PbarP.sum(axis=0) / eps
    W = kernels.softmin_cols_grad(C, f[L], g[L - 1], eps)
    fbar = PbarP.sum(axis=1) / eps - W @ gbar
    abar = eps * fbar / a
    for l in range(L - 1, 0, -1):
        X = kernels.softmin_rows_grad(C, f[l], g[l], eps)
        gbar = -(X.T @ fbar)
        W = kernels.softmin_cols_grad(C, f[l], g[l - 1], eps)
        fbar = -(W @ gbar)
        abar = abar + eps * fbar / a
    return abar


def _log_plan(tr: LogTrace):
    L = tr.iters
    return np.exp(-((tr.ck.cost - tr.f[L][:, None]) - tr.g[L][None, :]) / tr.ck.epsilon)


def solve_log_with_grad(a, b, ck: CostKernelPair, L=100, clamp=False) -> GradResult:
    """Log-domain Sinkhorn for exactly ``L`` iterations plus ``d loss / d a``."""
    tr = forward_log(a, b, ck, L, clamp=clamp)
    P = _log_plan(tr)
    loss = entropic_loss(P, ck.cost, ck.epsilon)
    return GradResult(Coupling(P, tr.a, tr.b), loss, backward_log(tr), tr)


def sinkhorn_loss(a, b, ck: CostKernelPair, L=100, mode="vanilla"):
    """Entropic loss after exactly ``L`` iterations (finite-difference target)."""
    if mode == "vanilla":
        return entropic_loss(_vanilla_plan(forward_vanilla(a, b, ck, L)), ck.cost, ck.epsilon)
    return entropic_loss(_log_plan(forward_log(a, b, ck, L)), ck.cost, ck.epsilon)
