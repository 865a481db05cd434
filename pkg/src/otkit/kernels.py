"""Backend selection for the soft-min kernels.

The compiled extension is used when it imported cleanly; otherwise the
NumPy fallback is used.  Setting ``OTKIT_PURE_PYTHON=1`` forces the
fallback.  All entry points coerce their inputs to C-contiguous float64
so both backends see identical data.
"""
import os

import numpy as np

from . import _kernels_py

try:
    from . import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

_NAMES = (
    "softmin_rows",
    "softmin_cols",
    "softmin_rows_grad",
    "softmin_cols_grad",
    "softmin_rows_batch",
    "softmin_cols_batch",
    "softmin_rows_grad_batch",
    "softmin_cols_grad_batch",
)

_impl = None
BACKEND = None


def available_backends():
    """Names of the backends that can be selected in this process."""
    return ["cython", "python"] if _kernels_c is not None else ["python"]


def use_backend(name):
    """Select ``"cython"`` or ``"python"``; returns the previous backend name."""
    global _impl, BACKEND
    if name == "cython":
        if _kernels_c is None:
            raise ImportError("compiled kernels are not available in this build")
        mod = _kernels_c
    elif name == "python":
        mod = _kernels_py
    else:
        raise ValueError(f"unknown backend {name!r}")
    previous = BACKEND
    _impl = mod
    BACKEND = name
    return previous


def _default_backend():
    if os.environ.get("OTKIT_PURE_PYTHON", "").strip() not in ("", "0"):
        return "python"
    return "cython" if _kernels_c is not None else "python"


use_backend(_default_backend())


def _c(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def softmin_rows(C, f, g, eps):
    return _impl.softmin_rows(_c(C), _c(f), _c(g), float(eps))


def softmin_cols(C, f, g, eps):
    return _impl.softmin_cols(_c(C), _c(f), _c(g), float(eps))


def softmin_rows_grad(C, f, g, eps):
    return _impl.softmin_rows_grad(_c(C), _c(f), _c(g), float(eps))


def softmin_cols_grad(C, f, g, eps):
    return _impl.softmin_cols_grad(_c(C), _c(f), _c(g), float(eps))


def softmin_rows_batch(C, F, G, eps):
    return _impl.softmin_rows_batch(_c(C), _c(F), _c(G), float(eps))


def softmin_cols_batch(C, F, G, eps):
    return _impl.softmin_cols_batch(_c(C), _c(F), _c(G), float(eps))


def softmin_rows_grad_batch(C, F, G, eps):
    return _impl.softmin_rows_grad_batch(_c(C), _c(F), _c(G), float(eps))


def softmin_cols_grad_batch(C, F, G, eps):
    return _impl.softmin_cols_grad_batch(_c(C), _c(F), _c(G), float(eps))
