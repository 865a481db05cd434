"""Foundational types and primitives for entropic optimal transport.

Histograms are plain float64 ndarrays that have passed
:func:`validate_histogram`; the dataclasses below bundle the arrays that
travel together through the solvers.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .errors import (
    DimensionMismatch,
    EmptyMatrix,
    EmptyVector,
    NegativeEntry,
    NonPositiveEpsilon,
    NotNormalized,
    ShapeMismatch,
    ZeroEntryInLogMode,
)

#: Floor used when clamping histograms for the log-domain solvers.
CLAMP_FLOOR = 1e-16
#: Allowed deviation of a histogram's mass from 1 before it is rejected.
NORMALIZATION_TOL = 1e-9

MODES = ("vanilla", "log", "parallel")


# ---------------------------------------------------------------------------
# types


@dataclass(frozen=True)
class CostKernelPair:
    """Cost matrix, regularization and Gibbs kernel ``exp(-cost / epsilon)``.

    Build with :func:`build_kernel`.  ``underflow`` is set when some kernel
    entry is exactly 0 in float64.
    """

    cost: np.ndarray
    epsilon: float
    kernel: np.ndarray
    underflow: bool = False

    @property
    def shape(self):
        return self.cost.shape


@dataclass
class Coupling:
    """Transport plan together with the marginals it was asked to match."""

    plan: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray

    def marginal_residuals(self):
        """Infinity-norm errors ``(|P 1 - a|, |P^T 1 - b|)``."""
        r = np.abs(self.plan.sum(axis=1) - self.row_marginal).max()
        c = np.abs(self.plan.sum(axis=0) - self.col_marginal).max()
        return float(r), float(c)


@dataclass(frozen=True)
class SolveOptions:
    """Iteration controls shared by the forward solvers.

    Parameters
    ----------
    max_iters : int
        Iteration cap ``L``.
    tol : float
        Residual threshold ``rho`` on the marginal violations.
    mode : {"vanilla", "log", "parallel"}
    fixed_iters : bool
        Run exactly ``max_iters`` iterations and skip the convergence test.
    """

    max_iters: int = 1000
    tol: float = 1e-9
    mode: str = "vanilla"
    fixed_iters: bool = False

    def __post_init__(self):
        if int(self.max_iters) < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


# ---------------------------------------------------------------------------
# validation


def validate_histogram(values, strict_positive=False, renormalize=False, clamp=False):
    """Check that ``values`` lies on the probability simplex.

    Parameters
    ----------
    values : array_like, shape (n,)
    strict_positive : bool
        Require every entry to be positive (log-domain solvers).
    renormalize : bool
        Divide by the total mass instead of rejecting unnormalized input.
    clamp : bool
        With ``strict_positive``, raise entries to ``CLAMP_FLOOR`` and
        renormalize rather than rejecting zeros.

    Returns
    -------
    numpy.ndarray
        Fresh float64 copy.
    """
    if np.ndim(values) > 1:
        raise DimensionMismatch(f"histogram must be a vector, got shape {np.shape(values)}")
    x = np.array(values, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise EmptyVector("histogram is empty")
    if not np.all(np.isfinite(x)):
        raise NotNormalized("histogram has non-finite entries")
    if np.any(x < 0):
        i = int(np.argmax(x < 0))
        raise NegativeEntry(f"histogram entry {i} is negative ({x[i]!r})")
    total = x.sum()
    if renormalize:
        if total <= 0:
            raise NotNormalized("histogram has zero mass")
        x = x / total
    elif abs(total - 1.0) > NORMALIZATION_TOL:
        raise NotNormalized(f"histogram sums to {total!r}, expected 1")
    if strict_positive and np.any(x <= 0):
        if not clamp:
            raise ZeroEntryInLogMode(
                "histogram has zero entries; log-domain solvers need strictly "
                "positive input (enable clamping)"
            )
        x = np.maximum(x, CLAMP_FLOOR)
        x = x / x.sum()
        x = np.maximum(x, CLAMP_FLOOR)
    return x


def validate_histogram_batch(values, strict_positive=False, renormalize=False, clamp=False):
    """Column-wise :func:`validate_histogram` on an (n, s) matrix."""
    X = np.asarray(values, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DimensionMismatch(f"histogram batch must be a matrix, got shape {X.shape}")
    if X.size == 0:
        raise EmptyMatrix("histogram batch is empty")
    cols = [
        validate_histogram(X[:, s], strict_positive, renormalize, clamp) for s in range(X.shape[1])
    ]
    return np.ascontiguousarray(np.stack(cols, axis=1))


def _as_matrix(x, name):
    X = np.asarray(x, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {X.shape}")
    if X.size == 0:
        raise EmptyMatrix(f"{name} is empty")
    return X


def _as_vector(x, name):
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-D, got shape {v.shape}")
    if v.size == 0:
        raise EmptyVector(f"{name} is empty")
    return v


# ---------------------------------------------------------------------------
# kernel


def build_kernel(cost, epsilon) -> CostKernelPair:
    """Gibbs kernel ``K = exp(-C / epsilon)``.

    Raises
    ------
    NonPositiveEpsilon
        If ``epsilon <= 0``.
    NegativeEntry
        If the cost has negative entries.
    """
    eps = float(epsilon)
    if not eps > 0 or not np.isfinite(eps):
        raise NonPositiveEpsilon(f"epsilon must be positive and finite, got {epsilon!r}")
    C = np.array(_as_matrix(cost, "cost"), dtype=np.float64, order="C")
    if not np.all(np.isfinite(C)):
        raise NegativeEntry("cost has non-finite entries")
    if np.any(C < 0):
        raise NegativeEntry("cost has negative entries")
    with np.errstate(under="ignore"):
        K = np.exp(-C / eps)
    C.setflags(write=False)
    K.setflags(write=False)
    return CostKernelPair(C, eps, K, bool(np.any(K == 0.0)))


# ---------------------------------------------------------------------------
# soft-minimum


def soft_min(z, epsilon) -> float:
    """Stable soft-minimum ``-eps log sum exp(-z / eps)``.

    Computed as ``min z - eps log sum exp(-(z - min z) / eps)``, so the
    largest exponent is exactly 0.
    """
    z = _as_vector(z, "z")
    m = z[np.argmin(z)]
    return float(m - epsilon * np.log(np.exp(-(z - m) / epsilon).sum()))


def soft_min_grad(z, epsilon):
    """Gradient of :func:`soft_min`: the softmax of ``-z / epsilon``."""
    z = _as_vector(z, "z")
    e = np.exp(-(z - z[np.argmin(z)]) / epsilon)
    return e / e.sum()


def residual_matrix(f, g, cost):
    """``R(f, g) = C - f 1^T - 1 g^T``."""
    C = _as_matrix(cost, "cost")
    f = np.asarray(f, dtype=np.float64).reshape(-1)
    g = np.asarray(g, dtype=np.float64).reshape(-1)
    if f.shape[0] != C.shape[0] or g.shape[0] != C.shape[1]:
        raise DimensionMismatch(
            f"potentials of length {f.shape[0]}, {g.shape[0]} do not fit cost {C.shape}"
        )
    return (C - f[:, None]) - g[None, :]


def min_row(R, epsilon):
    """Soft-min of every row of ``R``; shape (M,)."""
    R = _as_matrix(R, "R")
    M, N = R.shape
    return kernels.softmin_rows(R, np.zeros(M), np.zeros(N), epsilon)


def min_col(R, epsilon):
    """Soft-min of every column of ``R``; shape (N,)."""
    R = _as_matrix(R, "R")
    M, N = R.shape
    return kernels.softmin_cols(R, np.zeros(M), np.zeros(N), epsilon)


# ---------------------------------------------------------------------------
# entropy and loss


def entropy(P) -> float:
    """Discrete entropy ``-sum P (log P - 1)`` with ``0 log 0 = 0``."""
    P = np.asarray(P, dtype=np.float64)
    if np.any(P < 0):
        raise NegativeEntry("coupling has negative entries")
    pos = P > 0
    p = P[pos]
    return float(-(p * (np.log(p) - 1.0)).sum())


def entropic_loss(P, cost, epsilon) -> float:
    """``<P, C> - epsilon H(P)``."""
    P = np.asarray(P, dtype=np.float64)
    C = np.asarray(cost, dtype=np.float64)
    if P.shape != C.shape:
        raise DimensionMismatch(f"coupling {P.shape} and cost {C.shape} differ in shape")
    lin = float((P * C).sum())
    if epsilon == 0:
        return lin
    return lin - float(epsilon) * entropy(P)


# ---------------------------------------------------------------------------
# softmax


def softmax_vec(x):
    """Max-shifted softmax of a vector."""
    x = _as_vector(x, "x")
    e = np.exp(x - x.max())
    return e / e.sum()


def softmax_jacobian_vec(x):
    """Jacobian ``diag s - s s^T`` of :func:`softmax_vec` at ``x``."""
    s = softmax_vec(x)
    return np.diag(s) - np.outer(s, s)


def softmax_mat(X):
    """Column-wise softmax of an (n, s) matrix."""
    X = _as_matrix(X, "X")
    E = np.exp(X - X.max(axis=0, keepdims=True))
    return E / E.sum(axis=0, keepdims=True)


def softmax_vjp(S, G):
    """Pull a cotangent ``G`` back through the column-wise softmax.

    ``S`` holds the softmax images column by column.  Column ``j`` of the
    result is ``(diag s - s s^T) G[:, j]``; the block-diagonal Jacobian is
    never formed.
    """
    S = np.asarray(S, dtype=np.float64)
    G = np.asarray(G, dtype=np.float64)
    if S.shape != G.shape:
        raise ShapeMismatch(f"softmax images {S.shape} and cotangent {G.shape} differ")
    return S * G - S * (S * G).sum(axis=0, keepdims=True)


def diag_scale(x, A, y):
    """``diag(x) A diag(y)`` as the elementwise product ``(x y^T) * A``."""
    A = np.asarray(A, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if A.ndim != 2 or x.shape != (A.shape[0],) or y.shape != (A.shape[1],):
        raise DimensionMismatch(
            f"cannot scale matrix {A.shape} by vectors {x.shape} and {y.shape}"
        )
    return x[:, None] * A * y[None, :]


def check_epsilon(epsilon) -> float:
    eps = float(epsilon)
    if not eps > 0:
        raise NonPositiveEpsilon(f"epsilon must be positive, got {epsilon!r}")
    return eps


def as_options(opts: Optional[SolveOptions], **overrides) -> SolveOptions:
    if opts is None:
        return SolveOptions(**overrides)
    if overrides:
        fields = dict(
            max_iters=opts.max_iters, tol=opts.tol, mode=opts.mode, fixed_iters=opts.fixed_iters
        )
        fields.update(overrides)
        return SolveOptions(**fields)
    return opts
