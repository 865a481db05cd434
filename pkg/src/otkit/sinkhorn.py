"""Forward Sinkhorn solvers: vanilla, log-domain and column-parallel.

All three alternate the row and column scaling updates until the marginal
residuals fall below ``opts.tol`` (checked after both half-updates) or
``opts.max_iters`` iterations have run.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .core import (
    CostKernelPair,
    Coupling,
    SolveOptions,
    as_options,
    diag_scale,
    entropic_loss,
    validate_histogram,
    validate_histogram_batch,
)
from .errors import (
    ColumnCountMismatch,
    DimensionMismatch,
    KernelDegenerate,
    NumericOverflow,
)

logger = logging.getLogger(__name__)

_OVERFLOW_HINT = "; the log-domain solver (mode='log') is stable for small epsilon"


@dataclass
class ScalingState:
    """Scalings ``(u, v)`` and/or dual potentials ``(f, g) = eps (log u, log v)``.

    The solver fills the representation it iterates on and derives the
    other one where it is finite; entries that cannot be represented are
    left as ``None``.
    """

    u: Optional[np.ndarray]
    v: Optional[np.ndarray]
    f: Optional[np.ndarray]
    g: Optional[np.ndarray]
    iteration: int
    epsilon: float


@dataclass
class SinkhornResult:
    """Output of a forward solve.

    ``marginal_error`` holds the Euclidean norms ``|P 1 - a|`` and
    ``|P^T 1 - b|`` of the returned plan.
    """

    coupling: Coupling
    state: ScalingState
    iterations_run: int
    marginal_error: tuple
    loss: float
    converged: bool

    @property
    def plan(self):
        return self.coupling.plan


def _check_shapes(a, b, ck):
    M, N = ck.cost.shape
    if a.shape[0] != M or b.shape[0] != N:
        raise DimensionMismatch(
            f"histograms of length {a.shape[0]}, {b.shape[0]} do not fit cost {ck.cost.shape}"
        )


def check_kernel_support(K):
    """Raise if a whole row or column of ``K`` underflowed to zero."""
    if np.any(~K.any(axis=1)) or np.any(~K.any(axis=0)):
        raise KernelDegenerate(
            "a row or column of the Gibbs kernel underflowed to zero" + _OVERFLOW_HINT
        )


def _finish(P, a, b, ck, state, it, converged):
    err = (
        float(np.linalg.norm(P.sum(axis=1) - a)),
        float(np.linalg.norm(P.sum(axis=0) - b)),
    )
    if not converged:
        logger.warning("Sinkhorn stopped after %d iterations without reaching tol", it)
    return SinkhornResult(
        Coupling(P, a, b), state, it, err, entropic_loss(P, ck.cost, ck.epsilon), converged
    )


def _safe_log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def _safe_exp(x):
    with np.errstate(over="ignore", under="ignore"):
        y = np.exp(x)
    return y if np.all(np.isfinite(y)) else None


def solve_vanilla(a, b, ck: CostKernelPair, opts: SolveOptions = None, v0=None) -> SinkhornResult:
    """Multiplicative Sinkhorn iterations ``u = a / Kv``, ``v = b / K^T u``.

    Parameters
    ----------
    a, b : array_like
        Source (M,) and target (N,) histograms.
    ck : CostKernelPair
    opts : SolveOptions, optional
    v0 : array_like, optional
        Initial column scaling; defaults to ones.  The coupling does not
        depend on it, only the scalings do.

    Raises
    ------
    NumericOverflow
        When a scaling becomes non-finite.
    KernelDegenerate
        When a kernel product has an exact zero.
    """
    opts = as_options(opts)
    a = validate_histogram(a)
    b = validate_histogram(b)
    _check_shapes(a, b, ck)
    K = ck.kernel
    check_kernel_support(K)
    u = np.ones(a.shape[0])
    v = np.ones(b.shape[0]) if v0 is None else np.array(v0, dtype=np.float64)
    converged = False
    it = 0
    with np.errstate(over="ignore", divide="ignore", invalid="ignore", under="ignore"):
        Kv = K @ v
        for it in range(1, int(opts.max_iters) + 1):
            if np.any(Kv == 0):
                raise KernelDegenerate(f"Kv has a zero entry at iteration {it}" + _OVERFLOW_HINT)
            u = a / Kv
            KTu = K.T @ u
            if np.any(KTu == 0):
                raise KernelDegenerate(
                    f"K^T u has a zero entry at iteration {it}" + _OVERFLOW_HINT
                )
            v = b / KTu
            Kv = K @ v
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v)) and np.all(np.isfinite(Kv))):
                raise NumericOverflow(
                    f"scalings became non-finite at iteration {it}" + _OVERFLOW_HINT
                )
            if opts.fixed_iters:
                continue
            if (
                np.linalg.norm(u * Kv - a) <= opts.tol
                and np.linalg.norm(v * KTu - b) <= opts.tol
            ):
                converged = True
                break
    P = diag_scale(u, K, v)
    if not np.all(np.isfinite(P)):
        raise NumericOverflow("coupling is non-finite" + _OVERFLOW_HINT)
    eps = ck.epsilon
    state = ScalingState(u, v, eps * _safe_log(u), eps * _safe_log(v), it, eps)
    return _finish(P, a, b, ck, state, it, converged or opts.fixed_iters)


def solve_log(a, b, ck: CostKernelPair, opts: SolveOptions = None, clamp=False) -> SinkhornResult:
    """Log-domain Sinkhorn on the dual potentials ``(f, g)``.

    ``f <- f + eps log a + Min_row R(f, g)`` and then
    ``g <- g + eps log b + Min_col R(f, g)``, with ``R`` refreshed between
    the two half-steps.  The coupling is ``exp(-R(f, g) / eps)``.

    Parameters
    ----------
    clamp : bool
        Floor zero histogram entries at 1e-16 instead of raising.

    Raises
    ------
    NonPositiveHistogram
        When ``a`` or ``b`` has a zero entry and ``clamp`` is off.
    """
    opts = as_options(opts)
    a = validate_histogram(a, strict_positive=True, clamp=clamp)
    b = validate_histogram(b, strict_positive=True, clamp=clamp)
    _check_shapes(a, b, ck)
    C, eps = ck.cost, ck.epsilon
    la, lb = np.log(a), np.log(b)
    f = np.zeros(a.shape[0])
    g = np.zeros(b.shape[0])
    rmin = kernels.softmin_rows(C, f, g, eps)
    converged = False
    it = 0
    for it in range(1, int(opts.max_iters) + 1):
        f = f + eps * la + rmin
        g = g + eps * lb + kernels.softmin_cols(C, f, g, eps)
        rmin = kernels.softmin_rows(C, f, g, eps)
        if opts.fixed_iters:
            continue
        if np.linalg.norm(-rmin / eps - la) <= opts.tol:
            cmin = kernels.softmin_cols(C, f, g, eps)
            if np.linalg.norm(-cmin / eps - lb) <= opts.tol:
                converged = True
                break
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
        raise NumericOverflow("dual potentials became non-finite")
    P = np.exp(-((C - f[:, None]) - g[None, :]) / eps)
    state = ScalingState(_safe_exp(f / eps), _safe_exp(g / eps), f, g, it, eps)
    return _finish(P, a, b, ck, state, it, converged or opts.fixed_iters)


def solve_parallel(A, B, ck: CostKernelPair, opts: SolveOptions = None) -> list:
    """Sinkhorn on S histogram pairs at once, ``U = A / KV``, ``V = B / K^T U``.

    Termination is global: all columns stop together once the Frobenius
    norms of both residual matrices are below ``opts.tol``.

    Parameters
    ----------
    A : array_like, shape (M, S)
    B : array_like, shape (N, S)

    Returns
    -------
    list of SinkhornResult
        One per column.
    """
    opts = as_options(opts)
    A = validate_histogram_batch(A)
    B = validate_histogram_batch(B)
    if A.shape[1] != B.shape[1]:
        raise ColumnCountMismatch(
            f"A has {A.shape[1]} columns but B has {B.shape[1]}; replicate columns to broadcast"
        )
    M, N = ck.cost.shape
    if A.shape[0] != M or B.shape[0] != N:
        raise DimensionMismatch(f"batches {A.shape}, {B.shape} do not fit cost {ck.cost.shape}")
    K = ck.kernel
    check_kernel_support(K)
    S = A.shape[1]
    U = np.ones((M, S))
    V = np.ones((N, S))
    converged = False
    it = 0
    with np.errstate(over="ignore", divide="ignore", invalid="ignore", under="ignore"):
        KV = K @ V
        for it in range(1, int(opts.max_iters) + 1):
            if np.any(KV == 0):
                raise KernelDegenerate(f"KV has a zero entry at iteration {it}" + _OVERFLOW_HINT)
            U = A / KV
            KTU = K.T @ U
            if np.any(KTU == 0):
                raise KernelDegenerate(
                    f"K^T U has a zero entry at iteration {it}" + _OVERFLOW_HINT
                )
            V = B / KTU
            KV = K @ V
            if not (np.all(np.isfinite(U)) and np.all(np.isfinite(V)) and np.all(np.isfinite(KV))):
                raise NumericOverflow(
                    f"scalings became non-finite at iteration {it}" + _OVERFLOW_HINT
                )
            if opts.fixed_iters:
                continue
            if (
                np.linalg.norm(U * KV - A) <= opts.tol
                and np.linalg.norm(V * KTU - B) <= opts.tol
            ):
                converged = True
                break
    eps = ck.epsilon
    out = []
    for s in range(S):
        u, v = U[:, s].copy(), V[:, s].copy()
        P = diag_scale(u, K, v)
        state = ScalingState(u, v, eps * _safe_log(u), eps * _safe_log(v), it, eps)
        out.append(_finish(P, A[:, s], B[:, s], ck, state, it, converged or opts.fixed_iters))
    return out


def solve(a, b, ck: CostKernelPair, opts: SolveOptions = None):
    """Dispatch on ``opts.mode``; parallel mode expects matrices."""
    opts = as_options(opts)
    if opts.mode == "vanilla":
        return solve_vanilla(a, b, ck, opts)
    if opts.mode == "log":
        return solve_log(a, b, ck, opts)
    return solve_parallel(a, b, ck, opts)


__all__ = [
    "ScalingState",
    "SinkhornResult",
    "solve",
    "solve_log",
    "solve_parallel",
    "solve_vanilla",
]
