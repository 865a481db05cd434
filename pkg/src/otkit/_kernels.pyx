# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled soft-min reductions over ``R = C - f 1^T - 1 g^T``.

Same contract as ``otkit._kernels_py``; ``R`` is never materialized.
Each reduction makes two passes: one for the shift (the slice minimum)
and one for the shifted exponential sum.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


cdef inline void _rows(const double[:, ::1] C, const double[::1] f,
                       const double[::1] g, double eps, double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, j, M = C.shape[0], N = C.shape[1]
    cdef double m, r, s
    for i in range(M):
        m = INFINITY
        for j in range(N):
            r = (C[i, j] - f[i]) - g[j]
            if r < m:
                m = r
        s = 0.0
        for j in range(N):
            r = (C[i, j] - f[i]) - g[j]
            s += exp(-(r - m) / eps)
        out[i] = m - eps * log(s)


cdef inline void _cols(const double[:, ::1] C, const double[::1] f,
                       const double[::1] g, double eps, double[::1] mins,
                       double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, j, M = C.shape[0], N = C.shape[1]
    cdef double r
    for j in range(N):
        mins[j] = INFINITY
        out[j] = 0.0
    for i in range(M):
        for j in range(N):
            r = (C[i, j] - f[i]) - g[j]
            if r < mins[j]:
                mins[j] = r
    for i in range(M):
        for j in range(N):
            r = (C[i, j] - f[i]) - g[j]
            out[j] += exp(-(r - mins[j]) / eps)
    for j in range(N):
        out[j] = mins[j] - eps * log(out[j])


cdef inline void _rows_grad(const double[:, ::1] C, const double[::1] f,
                            const double[::1] g, double eps, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t i, j, M = C.shape[0], N = C.shape[1]
    cdef double m, r, s, e
    for i in range(M):
        m = INFINITY
        for j in range(N):
            r = (C[i, j] - f[i]) - g[j]
            if r < m:
                m = r
        s = 0.0
        for j in range(N):
            r = (C[i, j] - f[i]) - g[j]
            e = exp(-(r - m) / eps)
            out[i, j] = e
            s += e
        for j in range(N):
            out[i, j] = out[i, j] / s


cdef inline void _cols_grad(const double[:, ::1] C, const double[::1] f,
                            const double[::1] g, double eps, double[::1] mins,
                            double[::1] sums, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t i, j, M = C.shape[0], N = C.shape[1]
    cdef double r, e
    for j in range(N):
        mins[j] = INFINITY
        sums[j] = 0.0
    for i in range(M):
        for j in range(N):
            r = (C[i, j] - f[i]) - g[j]
            if r < mins[j]:
                mins[j] = r
    for i in range(M):
        for j in range(N):
            r = (C[i, j] - f[i]) - g[j]
            e = exp(-(r - mins[j]) / eps)
            out[i, j] = e
            sums[j] += e
    for i in range(M):
        for j in range(N):
            out[i, j] = out[i, j] / sums[j]


def softmin_rows(const double[:, ::1] C, const double[::1] f, const double[::1] g, double eps):
    out = np.empty(C.shape[0])
    cdef double[::1] o = out
    with nogil:
        _rows(C, f, g, eps, o)
    return out


def softmin_cols(const double[:, ::1] C, const double[::1] f, const double[::1] g, double eps):
    out = np.empty(C.shape[1])
    cdef double[::1] o = out
    cdef double[::1] mins = np.empty(C.shape[1])
    with nogil:
        _cols(C, f, g, eps, mins, o)
    return out


def softmin_rows_grad(const double[:, ::1] C, const double[::1] f, const double[::1] g, double eps):
    out = np.empty((C.shape[0], C.shape[1]))
    cdef double[:, ::1] o = out
    with nogil:
        _rows_grad(C, f, g, eps, o)
    return out


def softmin_cols_grad(const double[:, ::1] C, const double[::1] f, const double[::1] g, double eps):
    out = np.empty((C.shape[0], C.shape[1]))
    cdef double[:, ::1] o = out
    cdef double[::1] mins = np.empty(C.shape[1])
    cdef double[::1] sums = np.empty(C.shape[1])
    with nogil:
        _cols_grad(C, f, g, eps, mins, sums, o)
    return out


def softmin_rows_batch(const double[:, ::1] C, F, G, double eps):
    cdef Py_ssize_t s, S = F.shape[1]
    # column-major copies so each potential column is contiguous
    cdef const double[:, ::1] Ft = np.ascontiguousarray(F.T)
    cdef const double[:, ::1] Gt = np.ascontiguousarray(G.T)
    out = np.empty((S, C.shape[0]))
    cdef double[:, ::1] o = out
    with nogil:
        for s in range(S):
            _rows(C, Ft[s], Gt[s], eps, o[s])
    return np.ascontiguousarray(out.T)


def softmin_cols_batch(const double[:, ::1] C, F, G, double eps):
    cdef Py_ssize_t s, S = F.shape[1]
    cdef const double[:, ::1] Ft = np.ascontiguousarray(F.T)
    cdef const double[:, ::1] Gt = np.ascontiguousarray(G.T)
    out = np.empty((S, C.shape[1]))
    cdef double[:, ::1] o = out
    cdef double[::1] mins = np.empty(C.shape[1])
    with nogil:
        for s in range(S):
            _cols(C, Ft[s], Gt[s], eps, mins, o[s])
    return np.ascontiguousarray(out.T)


def softmin_rows_grad_batch(const double[:, ::1] C, F, G, double eps):
    cdef Py_ssize_t s, S = F.shape[1]
    cdef const double[:, ::1] Ft = np.ascontiguousarray(F.T)
    cdef const double[:, ::1] Gt = np.ascontiguousarray(G.T)
    out = np.empty((S, C.shape[0], C.shape[1]))
    cdef double[:, :, ::1] o = out
    with nogil:
        for s in range(S):
            _rows_grad(C, Ft[s], Gt[s], eps, o[s])
    return out


def softmin_cols_grad_batch(const double[:, ::1] C, F, G, double eps):
    cdef Py_ssize_t s, S = F.shape[1]
    cdef const double[:, ::1] Ft = np.ascontiguousarray(F.T)
    cdef const double[:, ::1] Gt = np.ascontiguousarray(G.T)
    out = np.empty((S, C.shape[0], C.shape[1]))
    cdef double[:, :, ::1] o = out
    cdef double[::1] mins = np.empty(C.shape[1])
    cdef double[::1] sums = np.empty(C.shape[1])
    with nogil:
        for s in range(S):
            _cols_grad(C, Ft[s], Gt[s], eps, mins, sums, o[s])
    return out
