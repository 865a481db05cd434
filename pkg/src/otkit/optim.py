"""First-order optimizers and mini-batch gradient averaging.

Each ``*_step`` returns the new parameters and advances the optimizer
state in place.  Moment buffers are allocated on the first step, shaped
like the parameters.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, EmptyBatch, ShapeMismatch

KINDS = ("sgd", "adam", "adamw")


@dataclass
class OptimizerState:
    """Hyperparameters, moment buffers and step counter of one optimizer.

    Parameters
    ----------
    kind : {"sgd", "adam", "adamw"}
    lr : float
        Learning rate.
    beta1, beta2 : float
        Decay rates of the first and second moment estimates.
    eps_hat : float
        Fuzz added to ``sqrt(v_hat)`` in the denominator.
    weight_decay : float
        Decoupled decay rate (AdamW only).
    """

    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    weight_decay: float = 0.01
    m: Optional[np.ndarray] = field(default=None, repr=False)
    v: Optional[np.ndarray] = field(default=None, repr=False)
    t: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"optimizer must be one of {KINDS}, got {self.kind!r}")

    def clone_empty(self):
        """Same hyperparameters, fresh buffers."""
        return OptimizerState(
            self.kind, self.lr, self.beta1, self.beta2, self.eps_hat, self.weight_decay
        )

    def to_dict(self):
        return {
            "kind": self.kind,
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps_hat": self.eps_hat,
            "weight_decay": self.weight_decay,
            "t": self.t,
            "m": None if self.m is None else self.m.tolist(),
            "v": None if self.v is None else self.v.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        st = cls(d["kind"], d["lr"], d["beta1"], d["beta2"], d["eps_hat"], d["weight_decay"])
        st.t = int(d["t"])
        st.m = None if d["m"] is None else np.array(d["m"], dtype=np.float64)
        st.v = None if d["v"] is None else np.array(d["v"], dtype=np.float64)
        return st


def _check(theta, g):
    theta = np.asarray(theta, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if theta.shape != g.shape:
        raise ShapeMismatch(f"parameters {theta.shape} and gradient {g.shape} differ in shape")
    return theta, g


def _moments(state, theta, g):
    if state.m is None:
        state.m = np.zeros_like(theta)
        state.v = np.zeros_like(theta)
    elif state.m.shape != theta.shape:
        raise ShapeMismatch(f"optimizer buffers {state.m.shape} do not match parameters {theta.shape}")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * (g * g)
    mhat = state.m / (1.0 - state.beta1 ** state.t)
    vhat = state.v / (1.0 - state.beta2 ** state.t)
    return mhat / (np.sqrt(vhat) + state.eps_hat)


def sgd_step(state: OptimizerState, theta, g):
    """``theta - lr * g``."""
    theta, g = _check(theta, g)
    state.t += 1
    return theta - state.lr * g


def adam_step(state: OptimizerState, theta, g):
    """Adam with bias-corrected moments."""
    theta, g = _check(theta, g)
    return theta - state.lr * _moments(state, theta, g)


def adamw_step(state: OptimizerState, theta, g):
    """Adam with decoupled weight decay: ``(1 - lr*decay) theta - lr * m_hat / (sqrt(v_hat) + eps)``.

    The moment recurrences use the raw gradient ``g``.  With zero decay
    the factor is exactly 1.0, so the trajectory equals Adam's.
    """
    theta, g = _check(theta, g)
    step = _moments(state, theta, g)
    return (1.0 - state.lr * state.weight_decay) * theta - state.lr * step


_STEPS = {"sgd": sgd_step, "adam": adam_step, "adamw": adamw_step}


def step(state: OptimizerState, theta, g):
    """Apply the update selected by ``state.kind``."""
    return _STEPS[state.kind](state, theta, g)


def minibatch_average(per_sample_grads):
    """Mean of a list of equally shaped gradients, summed in list order."""
    grads = list(per_sample_grads)
    if not grads:
        raise EmptyBatch("cannot average an empty batch")
    first = np.asarray(grads[0], dtype=np.float64)
    acc = first.copy()
    for g in grads[1:]:
        g = np.asarray(g, dtype=np.float64)
        if g.shape != first.shape:
            raise ShapeMismatch(f"gradient shapes {first.shape} and {g.shape} differ")
        acc += g
    return acc / len(grads)
