"""Finite-difference verification of the analytic gradients.

Histogram inputs are probed along simplex-tangent directions
``e_i - e_{(i+1) mod n}`` with central differences, so perturbed inputs
stay normalized.  Unconstrained inputs (the dictionary-learning logits)
are probed coordinate by coordinate.  The error of one trial is
``max|fd - an| / max(max|an|, max|fd|, floor)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .barycenter import BarycenterProblem
from .barycenter_grad import barycenter_grad, barycenter_loss
from .core import build_kernel
from .sinkhorn_grad import sinkhorn_loss, solve_log_with_grad, solve_vanilla_with_grad
from .wdl import WdlParams, batch_gradients

TARGETS = ("sinkhorn-vanilla", "sinkhorn-log", "barycenter-parallel", "barycenter-log", "wdl-alpha")
DEFAULT_ITERS = {"sinkhorn": 100, "barycenter": 60, "wdl": 30}
DEFAULT_TOL = {"sinkhorn": 1e-4, "barycenter": 1e-4, "wdl": 1e-3}
ERROR_FLOOR = 1e-12


@dataclass
class GradcheckReport:
    which: str
    tol: float
    errors: list = field(default_factory=list)
    worst: dict = None

    @property
    def max_error(self):
        return max(self.errors) if self.errors else 0.0

    @property
    def passed(self):
        return self.max_error <= self.tol


def relative_error(fd, an, floor=ERROR_FLOOR):
    fd = np.asarray(fd, dtype=np.float64)
    an = np.asarray(an, dtype=np.float64)
    if fd.size == 0:
        return 0.0
    scale = max(np.abs(an).max(), np.abs(fd).max(), floor)
    return float(np.abs(fd - an).max() / scale)


def tangent_directions(n):
    """Pairs ``(i, (i+1) mod n)``; empty for a single bin."""
    if n < 2:
        return []
    return [(i, (i + 1) % n) for i in range(n if n > 2 else 1)]


def simplex_fd(fun, x, grad, h):
    """Central differences of ``fun`` along the tangent directions of ``x``.

    Returns the numeric and analytic directional derivatives.
    """
    fd, an = [], []
    for i, j in tangent_directions(x.shape[0]):
        d = np.zeros_like(x)
        d[i], d[j] = h, -h
        fd.append((fun(x + d) - fun(x - d)) / (2 * h))
        an.append(grad[i] - grad[j])
    return np.array(fd), np.array(an)


def coordinate_fd(fun, x, h):
    out = np.empty(x.size)
    flat = x.reshape(-1)
    for k in range(flat.size):
        d = np.zeros_like(flat)
        d[k] = h
        out[k] = (fun((flat + d).reshape(x.shape)) - fun((flat - d).reshape(x.shape))) / (2 * h)
    return out.reshape(x.shape)


def parse_dims(dims):
    """``"MxNxS"`` to a tuple of ints; ``None`` passes through."""
    if dims is None:
        return None
    parts = [int(p) for p in str(dims).lower().split("x")]
    if not 2 <= len(parts) <= 3 or min(parts) < 1:
        raise ValueError(f"dims must look like MxN or MxNxS, got {dims!r}")
    return tuple(parts) if len(parts) == 3 else (parts[0], parts[1], 1)


def _simplex(rng, n):
    x = rng.random(n) + 0.05
    return x / x.sum()


def _family(which):
    return which.split("-")[0]


def make_instance(which, rng, dims=None, epsilon=None):
    """Random problem for one trial, as a dict of plain arrays."""
    fam = _family(which)
    eps = float(epsilon) if epsilon is not None else float(rng.uniform(0.3, 1.0))
    if fam == "sinkhorn":
        M, N = (dims[0], dims[1]) if dims else (int(rng.integers(2, 11)), int(rng.integers(2, 11)))
        return {"epsilon": eps, "a": _simplex(rng, M), "b": _simplex(rng, N), "cost": rng.random((M, N))}
    if fam == "barycenter":
        if dims:
            M, S = dims[0], dims[2]
        else:
            M, S = int(rng.integers(2, 9)), int(rng.integers(1, 4))
        A = np.stack([_simplex(rng, M) for _ in range(S)], axis=1)
        return {
            "epsilon": eps,
            "atoms": A,
            "weights": _simplex(rng, S),
            "target": _simplex(rng, M),
            "cost": rng.random((M, M)),
        }
    M, N, S = dims if dims else (6, 6, 2)
    return {
        "epsilon": eps,
        "data": np.stack([_simplex(rng, N) for _ in range(M)], axis=1),
        "alpha": 0.5 * rng.standard_normal((N, S)),
        "lam": 0.5 * rng.standard_normal((S, M)),
        "cost": rng.random((N, N)),
    }


def check_instance(which, inst, iters, h, corrupt=False):
    """Relative error of one instance; ``corrupt`` skews the analytic gradient."""
    fam = _family(which)
    ck = build_kernel(inst["cost"], inst["epsilon"])
    skew = 1.5 if corrupt else 1.0
    if fam == "sinkhorn":
        mode = which.split("-")[1]
        solver = solve_vanilla_with_grad if mode == "vanilla" else solve_log_with_grad
        g = skew * solver(inst["a"], inst["b"], ck, iters).grad_a
        fd, an = simplex_fd(lambda x: sinkhorn_loss(x, inst["b"], ck, iters, mode), inst["a"], g, h)
        return relative_error(fd, an)
    if fam == "barycenter":
        mode = which.split("-")[1]
        A, w, t = inst["atoms"], inst["weights"], inst["target"]
        res = barycenter_grad(BarycenterProblem(A, w, ck), t, iters, mode)
        gA, gw = skew * res.grad_atoms, skew * res.grad_weights
        errs = []
        for s in range(A.shape[1]):
            def loss_col(x, s=s):
                B = A.copy()
                B[:, s] = x
                return barycenter_loss(BarycenterProblem(B, w, ck), t, iters, mode)

            errs.append(relative_error(*simplex_fd(loss_col, A[:, s], gA[:, s], h)))
        fd, an = simplex_fd(
            lambda x: barycenter_loss(BarycenterProblem(A, x, ck), t, iters, mode), w, gw, h
        )
        errs.append(relative_error(fd, an))
        return max(errs)
    Y, lam = inst["data"], inst["lam"]
    idx = np.arange(Y.shape[1])
    _, g_alpha, _ = batch_gradients(WdlParams(inst["alpha"], lam), Y, ck, idx, iters)
    fd = coordinate_fd(lambda al: batch_gradients(WdlParams(al, lam), Y, ck, idx, iters)[0], inst["alpha"], h)
    return relative_error(fd, skew * g_alpha)


def run_gradcheck(which, trials=20, seed=0, h=1e-6, tol=None, epsilon=None, iters=None, dims=None,
                  corrupt=False) -> GradcheckReport:
    """Check ``which`` on ``trials`` seeded random instances.

    Parameters
    ----------
    which : str
        One of ``TARGETS``.
    dims : str or tuple, optional
        ``"MxNxS"``; sinkhorn uses M, N, barycenters use M (= N) and S,
        dictionary learning uses M documents, N bins and S topics.
        Random sizes are drawn when omitted.
    """
    if which not in TARGETS:
        raise ValueError(f"unknown gradcheck target {which!r}; choose from {TARGETS}")
    fam = _family(which)
    tol = DEFAULT_TOL[fam] if tol is None else float(tol)
    iters = DEFAULT_ITERS[fam] if iters is None else int(iters)
    if isinstance(dims, str):
        dims = parse_dims(dims)
    report = GradcheckReport(which, tol)
    worst = -1.0
    for trial in range(int(trials)):
        rng = np.random.default_rng([int(seed), trial])
        inst = make_instance(which, rng, dims, epsilon)
        err = check_instance(which, inst, iters, h, corrupt)
        report.errors.append(err)
        if err > worst:
            worst = err
            report.worst = {
                "which": which,
                "trial": trial,
                "seed": int(seed),
                "iters": iters,
                "h": h,
                "error": err,
                "inputs": {k: np.asarray(v).tolist() for k, v in inst.items()},
            }
    return report
