"""Entropic Wasserstein barycenters of S atoms sharing one cost matrix.

Both solvers record every iterate so the gradient module can replay
them; with ``opts.fixed_iters`` they run exactly ``opts.max_iters``
iterations.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import (
    CostKernelPair,
    SolveOptions,
    as_options,
    validate_histogram,
    validate_histogram_batch,
)
from .errors import DimensionMismatch, KernelDegenerate, NonPositiveHistogram, NumericOverflow
from .sinkhorn import _OVERFLOW_HINT, check_kernel_support

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BarycenterProblem:
    """Atoms (M, S), weights (S,) and the shared cost/kernel pair (M, N)."""

    atoms: np.ndarray
    weights: np.ndarray
    ck: CostKernelPair

    @classmethod
    def create(cls, atoms, weights, ck, strict_positive=False, clamp=False):
        """Validate and build a problem.

        ``strict_positive``/``clamp`` are forwarded to the atom validation
        (the log-domain solver needs positive atoms).
        """
        A = validate_histogram_batch(atoms, strict_positive=strict_positive, clamp=clamp)
        w = validate_histogram(weights)
        if A.shape[1] != w.shape[0]:
            raise DimensionMismatch(f"{A.shape[1]} atoms but {w.shape[0]} weights")
        if A.shape[0] != ck.cost.shape[0]:
            raise DimensionMismatch(f"atoms of length {A.shape[0]} do not fit cost {ck.cost.shape}")
        return cls(A, w, ck)

    @property
    def n_atoms(self):
        return self.atoms.shape[1]


@dataclass(frozen=True)
class ParallelTrace:
    """Iterates of the scaling iteration, index ``l = 0..L``.

    ``KV[l] = K V[l]``; ``KTU[l] = K^T U[l]`` (index 0 unused); ``b[0]`` is
    unused.
    """

    U: np.ndarray
    V: np.ndarray
    b: np.ndarray
    KV: np.ndarray
    KTU: np.ndarray

    @property
    def iters(self):
        return self.U.shape[0] - 1


@dataclass(frozen=True)
class LogTrace:
    """Iterates of the log-domain iteration, index ``l = 0..L``.

    ``Q[l] = G[l-1] + Min_col R(F[l], G[l-1])`` is the matrix whose
    weighted row combination gives ``log b[l]``.
    """

    F: np.ndarray
    G: np.ndarray
    logb: np.ndarray
    Q: np.ndarray

    @property
    def iters(self):
        return self.F.shape[0] - 1


@dataclass
class BarycenterResult:
    barycenter: np.ndarray
    trace: object
    iterations_run: int
    converged: bool
    mode: str


def _check_problem(prob):
    if not isinstance(prob, BarycenterProblem):
        raise TypeError("expected a BarycenterProblem; build one with BarycenterProblem.create")


def _freeze(*arrays):
    for x in arrays:
        x.setflags(write=False)


def barycenter_parallel(prob: BarycenterProblem, opts: SolveOptions = None) -> BarycenterResult:
    """Scaling iteration ``U = A / KV``, ``b = prod_s (K^T U_s)^w_s``, ``V = b / K^T U``.

    The weighted geometric mean is formed in the log domain
    (``log b = log(K^T U) w``) and exponentiated, which avoids overflow
    in the elementwise powers without changing the update.

    Raises
    ------
    NumericOverflow
        Iterates became non-finite; the log-domain solver is the remedy.
    KernelDegenerate
        A kernel product has an exact zero.
    """
    _check_problem(prob)
    opts = as_options(opts)
    A, w, K = prob.atoms, prob.weights, prob.ck.kernel
    check_kernel_support(K)
    M, N = K.shape
    S = A.shape[1]
    L = int(opts.max_iters)
    U = np.empty((L + 1, M, S))
    V = np.empty((L + 1, N, S))
    b = np.zeros((L + 1, N))
    KV = np.empty((L + 1, M, S))
    KTU = np.ones((L + 1, N, S))
    U[0] = 1.0
    V[0] = 1.0
    converged = False
    it = 0
    with np.errstate(over="ignore", divide="ignore", invalid="ignore", under="ignore"):
        KV[0] = K @ V[0]
        for it in range(1, L + 1):
            if np.any(KV[it - 1] == 0):
                raise KernelDegenerate(f"KV has a zero entry at iteration {it}" + _OVERFLOW_HINT)
            U[it] = A / KV[it - 1]
            KTU[it] = K.T @ U[it]
            if np.any(KTU[it] == 0):
                raise KernelDegenerate(f"K^T U has a zero entry at iteration {it}" + _OVERFLOW_HINT)
            b[it] = np.exp(np.log(KTU[it]) @ w)
            V[it] = b[it][:, None] / KTU[it]
            KV[it] = K @ V[it]
            if not (np.all(np.isfinite(U[it])) and np.all(np.isfinite(V[it])) and np.all(np.isfinite(b[it]))):
                raise NumericOverflow(f"iterates became non-finite at iteration {it}" + _OVERFLOW_HINT)
            if not opts.fixed_iters and np.linalg.norm(U[it] * KV[it] - A) <= opts.tol:
                converged = True
                break
    n = it + 1
    tr = ParallelTrace(U[:n], V[:n], b[:n], KV[:n], KTU[:n])
    _freeze(tr.U, tr.V, tr.b, tr.KV, tr.KTU)
    if not (converged or opts.fixed_iters):
        logger.warning("barycenter stopped after %d iterations without reaching tol", it)
    return BarycenterResult(b[it].copy(), tr, it, converged or opts.fixed_iters, "parallel")


def barycenter_log(prob: BarycenterProblem, opts: SolveOptions = None) -> BarycenterResult:
    """Log-domain barycenter iteration on stacked potentials ``F`` (M, S), ``G`` (N, S).

    Each iteration updates ``F`` with a row-wise soft-min, then forms
    ``log b = -(G + Min_col R(F, G)) w / eps`` and updates ``G``, both
    using ``R`` at the new ``F`` and the old ``G``.  ``F`` and ``G``
    start at zero.
    """
    _check_problem(prob)
    opts = as_options(opts)
    A, w = prob.atoms, prob.weights
    if np.any(A <= 0):
        raise NonPositiveHistogram("log-domain barycenter needs strictly positive atoms (clamp them)")
    C, eps = prob.ck.cost, prob.ck.epsilon
    M, N = C.shape
    S = A.shape[1]
    L = int(opts.max_iters)
    logA = np.log(A)
    F = np.zeros((L + 1, M, S))
    G = np.zeros((L + 1, N, S))
    logb = np.zeros((L + 1, N))
    Q = np.zeros((L + 1, N, S))
    rmin = kernels.softmin_rows_batch(C, F[0], G[0], eps)
    converged = False
    it = 0
    for it in range(1, L + 1):
        F[it] = F[it - 1] + eps * logA + rmin
        Rc = kernels.softmin_cols_batch(C, F[it], G[it - 1], eps)
        Q[it] = G[it - 1] + Rc
        logb[it] = -(Q[it] @ w) / eps
        G[it] = G[it - 1] + eps * logb[it][:, None] + Rc
        rmin = kernels.softmin_rows_batch(C, F[it], G[it], eps)
        if not opts.fixed_iters and np.linalg.norm(-rmin / eps - logA) <= opts.tol:
            converged = True
            break
    n = it + 1
    if not (np.all(np.isfinite(F[:n])) and np.all(np.isfinite(G[:n]))):
        raise NumericOverflow("dual potentials became non-finite")
    tr = LogTrace(F[:n], G[:n], logb[:n], Q[:n])
    _freeze(tr.F, tr.G, tr.logb, tr.Q)
    if not (converged or opts.fixed_iters):
        logger.warning("barycenter stopped after %d iterations without reaching tol", it)
    return BarycenterResult(np.exp(logb[it]), tr, it, converged or opts.fixed_iters, "log")


def barycenter(prob: BarycenterProblem, opts: SolveOptions = None) -> BarycenterResult:
    """Dispatch on ``opts.mode`` (``"parallel"`` or ``"log"``)."""
    opts = as_options(opts, mode="parallel") if opts is None else opts
    if opts.mode == "log":
        return barycenter_log(prob, opts)
    return barycenter_parallel(prob, opts)
