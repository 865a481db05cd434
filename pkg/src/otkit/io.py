"""File formats: numeric CSV matrices, JSON results, run configs and checkpoints.

CSV files have no header, use ``,`` separators and ``.`` decimals, one
matrix row per line; vectors are single-column files.  Floats are
written with ``repr``, the shortest string that round-trips, so output
is byte-stable and lossless.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, ParseError, RaggedRows
from .optim import OptimizerState
from .wdl import BatchSampler, WdlConfig, WdlParams, WdlState


def read_matrix_csv(path):
    """Read a rectangular numeric CSV into an (rows, cols) float64 array.

    Raises
    ------
    ParseError
        Non-numeric field, with 1-based line and column.
    RaggedRows
        A row whose length differs from the first row.
    """
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            vals = []
            for col, cell in enumerate(rec, start=1):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ParseError(f"{path}: not a number: {cell!r}", lineno, col) from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise RaggedRows(f"{path}: expected {width} fields, found {len(vals)}", lineno)
            rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: file contains no data", 1)
    return np.array(rows, dtype=np.float64)


def read_vector_csv(path):
    """Read a single-column (or single-row) CSV as a 1-D array."""
    X = read_matrix_csv(path)
    if X.shape[1] == 1:
        return X[:, 0]
    if X.shape[0] == 1:
        return X[0]
    raise ParseError(f"{path}: expected a vector, found a {X.shape[0]}x{X.shape[1]} matrix")


def format_float(x):
    return repr(float(x))


def write_matrix_csv(path, X):
    """Write a matrix row by row (a 1-D array becomes one column)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    with open(path, "w", newline="") as fh:
        for row in X:
            fh.write(",".join(format_float(x) for x in row) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def dumps_json(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(dumps_json(obj))


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", exc.lineno, exc.colno) from None


# ---------------------------------------------------------------------------
# run configuration


@dataclass
class RunConfig:
    """A CLI invocation: the subcommand and its parameters, keyed by option name."""

    command: str
    params: dict = field(default_factory=dict)

    @property
    def seed(self):
        return self.params.get("seed")

    def to_json(self):
        return dumps_json(asdict(self))

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        if not isinstance(d, dict) or "command" not in d:
            raise ConfigError("run config must be an object with a 'command' field")
        return cls(d["command"], dict(d.get("params", {})))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            text = fh.read()
        try:
            return cls.from_json(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc.msg}", exc.lineno, exc.colno) from None

    def to_argv(self):
        """Command-line arguments that reproduce this configuration."""
        argv = [self.command]
        for key in sorted(self.params):
            val = self.params[key]
            flag = "--" + key.replace("_", "-")
            if val is None or val is False:
                continue
            if val is True:
                argv.append(flag)
            elif isinstance(val, float):
                argv += [flag, repr(val)]
            else:
                argv += [flag, str(val)]
        return argv


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, state: WdlState, cfg: WdlConfig):
    """Write the full training state (parameters, optimizers, sampler, history) as JSON."""
    write_json(
        path,
        {
            "config": asdict(cfg),
            "step": state.step,
            "alpha": state.params.alpha,
            "lam": state.params.lam,
            "alpha_opt": state.alpha_opt.to_dict(),
            "lambda_opt": [s.to_dict() for s in state.lambda_opt],
            "sampler": state.sampler.get_state(),
            "loss_history": state.loss_history,
            "full_loss_history": state.full_loss_history,
        },
    )


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(state, cfg)``."""
    d = read_json(path)
    try:
        cfg = WdlConfig(**d["config"])
        params = WdlParams(np.array(d["alpha"], dtype=np.float64), np.array(d["lam"], dtype=np.float64))
        sampler = BatchSampler(d["sampler"]["n"])
        sampler.set_state(d["sampler"])
        state = WdlState(
            params,
            OptimizerState.from_dict(d["alpha_opt"]),
            [OptimizerState.from_dict(s) for s in d["lambda_opt"]],
            sampler,
            int(d["step"]),
            [float(x) for x in d["loss_history"]],
            [float(x) for x in d["full_loss_history"]],
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: malformed checkpoint ({exc})") from None
    return state, cfg
