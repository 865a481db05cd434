"""Pure NumPy soft-min reductions over ``R = C - f 1^T - 1 g^T``.

Reference implementation of the kernels in ``_kernels.pyx``.  Every
function takes C-contiguous float64 inputs and never forms ``R`` outside
of a temporary.  The shift by the row (column) minimum keeps the largest
exponent at exactly zero.
"""
import numpy as np


def _residual(C, f, g):
    return (C - f[:, None]) - g[None, :]


def softmin_rows(C, f, g, eps):
    """Soft-min of every row of ``R(f, g)``; shape (M,)."""
    R = _residual(C, f, g)
    m = R.min(axis=1)
    s = np.exp(-(R - m[:, None]) / eps).sum(axis=1)
    return m - eps * np.log(s)


def softmin_cols(C, f, g, eps):
    """Soft-min of every column of ``R(f, g)``; shape (N,)."""
    R = _residual(C, f, g)
    m = R.min(axis=0)
    s = np.exp(-(R - m[None, :]) / eps).sum(axis=0)
    return m - eps * np.log(s)


def softmin_rows_grad(C, f, g, eps):
    """Row-wise soft-min gradients stacked as an (M, N) row-stochastic matrix."""
    R = _residual(C, f, g)
    E = np.exp(-(R - R.min(axis=1)[:, None]) / eps)
    return E / E.sum(axis=1)[:, None]


def softmin_cols_grad(C, f, g, eps):
    """Column-wise soft-min gradients stacked as an (M, N) column-stochastic matrix."""
    R = _residual(C, f, g)
    E = np.exp(-(R - R.min(axis=0)[None, :]) / eps)
    return E / E.sum(axis=0)[None, :]


def _residual_batch(C, F, G):
    # (S, M, N)
    return (C[None, :, :] - F.T[:, :, None]) - G.T[:, None, :]


def softmin_rows_batch(C, F, G, eps):
    """Column ``s`` of the (M, S) output is ``softmin_rows(C, F[:, s], G[:, s])``."""
    R = _residual_batch(C, F, G)
    m = R.min(axis=2)
    s = np.exp(-(R - m[:, :, None]) / eps).sum(axis=2)
    return np.ascontiguousarray((m - eps * np.log(s)).T)


def softmin_cols_batch(C, F, G, eps):
    """Column ``s`` of the (N, S) output is ``softmin_cols(C, F[:, s], G[:, s])``."""
    R = _residual_batch(C, F, G)
    m = R.min(axis=1)
    s = np.exp(-(R - m[:, None, :]) / eps).sum(axis=1)
    return np.ascontiguousarray((m - eps * np.log(s)).T)


def softmin_rows_grad_batch(C, F, G, eps):
    """(S, M, N) stack of :func:`softmin_rows_grad` per column pair."""
    R = _residual_batch(C, F, G)
    E = np.exp(-(R - R.min(axis=2)[:, :, None]) / eps)
    return E / E.sum(axis=2)[:, :, None]


def softmin_cols_grad_batch(C, F, G, eps):
    """(S, M, N) stack of :func:`softmin_cols_grad` per column pair."""
    R = _residual_batch(C, F, G)
    E = np.exp(-(R - R.min(axis=1)[:, None, :]) / eps)
    return E / E.sum(axis=1)[:, None, :]
