"""Command-line interface: ``otkit {sinkhorn,barycenter,wdl,gradcheck}``.

Exit codes: 0 success, 1 gradient check breach, 2 invalid input,
3 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .barycenter import BarycenterProblem, barycenter_log, barycenter_parallel
from .barycenter_grad import barycenter_grad
from .core import SolveOptions, build_kernel
from .errors import ConfigError, NumericFailure, OTError, ValidationError
from .gradcheck import TARGETS, run_gradcheck
from .io import (
    RunConfig,
    load_checkpoint,
    read_matrix_csv,
    read_vector_csv,
    save_checkpoint,
    write_json,
    write_matrix_csv,
)
from .sinkhorn import solve_log, solve_parallel, solve_vanilla
from .sinkhorn_grad import solve_log_with_grad, solve_vanilla_with_grad
from .wdl import WdlConfig, wdl_train

EXIT_OK, EXIT_GRADCHECK, EXIT_VALIDATION, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("otkit")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="otkit", description="Entropic optimal transport toolkit.")
    p.add_argument("--config", help="run the command stored in a RunConfig JSON file")
    p.add_argument("--dump-config", metavar="PATH", help="write this invocation as RunConfig JSON")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command")

    s = sub.add_parser("sinkhorn", help="entropic transport plan between histograms")
    s.add_argument("--a", required=True, help="source histogram CSV (M x S matrix in parallel mode)")
    s.add_argument("--b", required=True, help="target histogram CSV (N x S matrix in parallel mode)")
    s.add_argument("--cost", required=True)
    s.add_argument("--epsilon", type=float, required=True)
    s.add_argument("--mode", choices=("vanilla", "log", "parallel"), default="vanilla")
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--max-iters", type=_positive_int, default=1000)
    s.add_argument("--grad", action="store_true", help="also report d loss / d a")
    s.add_argument("--grad-iters", type=_positive_int, default=100,
                   help="fixed iteration count of the differentiated solve")
    s.add_argument("--clamp", action="store_true", help="floor zero entries at 1e-16 in log mode")
    s.add_argument("--out", required=True)

    b = sub.add_parser("barycenter", help="entropic Wasserstein barycenter")
    b.add_argument("--atoms", required=True, help="M x S matrix, one atom per column")
    b.add_argument("--weights", required=True)
    b.add_argument("--cost", required=True)
    b.add_argument("--epsilon", type=float, required=True)
    b.add_argument("--mode", choices=("parallel", "log"), default="parallel")
    b.add_argument("--tol", type=float, default=1e-9)
    b.add_argument("--max-iters", type=_positive_int, default=1000)
    b.add_argument("--clamp", action="store_true")
    b.add_argument("--out", required=True)
    b.add_argument("--grad", action="store_true")
    b.add_argument("--target")
    b.add_argument("--grad-out")
    b.add_argument("--grad-iters", type=_positive_int, default=60)

    w = sub.add_parser("wdl", help="Wasserstein dictionary learning")
    w.add_argument("--data", required=True, help="N x M matrix, one document per column")
    w.add_argument("--cost", required=True)
    w.add_argument("--topics", type=_positive_int, required=True)
    w.add_argument("--epsilon", type=float, required=True)
    w.add_argument("--inner-iters", type=_positive_int, default=50)
    w.add_argument("--mode", choices=("parallel", "log"), default="parallel")
    w.add_argument("--optimizer", choices=("sgd", "adam", "adamw"), default="adam")
    w.add_argument("--lr", type=float, default=0.05)
    w.add_argument("--beta1", type=float, default=0.9)
    w.add_argument("--beta2", type=float, default=0.999)
    w.add_argument("--eps-hat", type=float, default=1e-8)
    w.add_argument("--weight-decay", type=float, default=0.01)
    w.add_argument("--batch", type=_positive_int, default=8)
    w.add_argument("--steps", type=_nonneg_int, default=200)
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--init", choices=("zeros", "gaussian"), default="zeros")
    w.add_argument("--init-scale", type=float, default=0.1)
    w.add_argument("--lambda-broadcast", action="store_true")
    w.add_argument("--out-atoms", required=True)
    w.add_argument("--out-weights", required=True)
    w.add_argument("--loss-out", required=True)
    w.add_argument("--checkpoint", help="write training state here after the run")
    w.add_argument("--resume", help="continue from a checkpoint written by --checkpoint")

    g = sub.add_parser("gradcheck", help="compare analytic gradients with finite differences")
    g.add_argument("--which", choices=TARGETS, required=True)
    g.add_argument("--h", type=float, default=1e-6)
    g.add_argument("--tol", type=float, default=None)
    g.add_argument("--trials", type=_positive_int, default=20)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--epsilon", type=float, default=None)
    g.add_argument("--iters", type=_positive_int, default=None)
    g.add_argument("--dims", default=None, help="MxNxS")
    g.add_argument("--reproducer", default="gradcheck_reproducer.json")
    g.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    return p


# ---------------------------------------------------------------------------
# commands


def _state_dict(state):
    return {"u": state.u, "v": state.v, "f": state.f, "g": state.g}


def cmd_sinkhorn(args):
    ck = build_kernel(read_matrix_csv(args.cost), args.epsilon)
    opts = SolveOptions(max_iters=args.max_iters, tol=args.tol, mode=args.mode)
    out = {"mode": args.mode, "epsilon": ck.epsilon}
    if args.mode == "parallel":
        A, B = read_matrix_csv(args.a), read_matrix_csv(args.b)
        results = solve_parallel(A, B, ck, opts)
        out.update(
            P=[r.plan for r in results],
            u=[r.state.u for r in results],
            v=[r.state.v for r in results],
            f=[r.state.f for r in results],
            g=[r.state.g for r in results],
            loss=[r.loss for r in results],
            iterations=results[0].iterations_run,
            converged=results[0].converged,
            marginal_error=[list(r.marginal_error) for r in results],
        )
        if args.grad:
            grads = [
                solve_vanilla_with_grad(A[:, s], B[:, s], ck, args.grad_iters).grad_a
                for s in range(A.shape[1])
            ]
            out.update(grad_a=grads, grad_iters=args.grad_iters)
    else:
        a, b = read_vector_csv(args.a), read_vector_csv(args.b)
        if args.mode == "vanilla":
            res = solve_vanilla(a, b, ck, opts)
        else:
            res = solve_log(a, b, ck, opts, clamp=args.clamp)
        out.update(
            P=res.plan,
            loss=res.loss,
            iterations=res.iterations_run,
            converged=res.converged,
            marginal_error=list(res.marginal_error),
            **_state_dict(res.state),
        )
        if args.grad:
            if args.mode == "vanilla":
                gr = solve_vanilla_with_grad(a, b, ck, args.grad_iters)
            else:
                gr = solve_log_with_grad(a, b, ck, args.grad_iters, clamp=args.clamp)
            out.update(grad_a=gr.grad_a, grad_iters=args.grad_iters, grad_loss=gr.loss)
    write_json(args.out, out)
    return EXIT_OK


def cmd_barycenter(args):
    ck = build_kernel(read_matrix_csv(args.cost), args.epsilon)
    prob = BarycenterProblem.create(
        read_matrix_csv(args.atoms), read_vector_csv(args.weights), ck,
        strict_positive=args.mode == "log", clamp=args.clamp,
    )
    opts = SolveOptions(max_iters=args.max_iters, tol=args.tol, mode=args.mode)
    solver = barycenter_log if args.mode == "log" else barycenter_parallel
    res = solver(prob, opts)
    write_matrix_csv(args.out, res.barycenter)
    if args.grad:
        if not args.target or not args.grad_out:
            raise ConfigError("--grad needs --target and --grad-out")
        gr = barycenter_grad(prob, read_vector_csv(args.target), args.grad_iters, args.mode)
        write_json(
            args.grad_out,
            {
                "mode": args.mode,
                "grad_iters": args.grad_iters,
                "barycenter": gr.barycenter,
                "loss": gr.loss,
                "grad_atoms": gr.grad_atoms,
                "grad_weights": gr.grad_weights,
            },
        )
    return EXIT_OK


def cmd_wdl(args):
    ck = build_kernel(read_matrix_csv(args.cost), args.epsilon)
    Y = read_matrix_csv(args.data)
    cfg = WdlConfig(
        topics=args.topics, epsilon=args.epsilon, inner_iters=args.inner_iters, mode=args.mode,
        optimizer=args.optimizer, lr=args.lr, beta1=args.beta1, beta2=args.beta2,
        eps_hat=args.eps_hat, weight_decay=args.weight_decay, batch_size=args.batch,
        steps=args.steps, seed=args.seed, init=args.init, init_scale=args.init_scale,
        lambda_broadcast=args.lambda_broadcast,
    )
    state = None
    if args.resume:
        state, saved = load_checkpoint(args.resume)
        if saved.topics != cfg.topics or state.params.lam.shape[1] != Y.shape[1]:
            raise ConfigError("checkpoint does not match the data or topic count")
    out = wdl_train(Y, ck, cfg, state)
    write_matrix_csv(args.out_atoms, out["A"])
    write_matrix_csv(args.out_weights, out["W"])
    write_matrix_csv(args.loss_out, np.asarray(out["loss_history"], dtype=np.float64).reshape(-1, 1))
    if args.checkpoint:
        save_checkpoint(args.checkpoint, out["state"], cfg)
    return EXIT_OK


def cmd_gradcheck(args):
    rep = run_gradcheck(
        args.which, trials=args.trials, seed=args.seed, h=args.h, tol=args.tol,
        epsilon=args.epsilon, iters=args.iters, dims=args.dims, corrupt=args.corrupt_gradient,
    )
    status = "ok" if rep.passed else "FAIL"
    print(f"{rep.which}: max relative error {rep.max_error:.3e} over {len(rep.errors)} trials "
          f"(tol {rep.tol:g}) {status}")
    if rep.passed:
        return EXIT_OK
    write_json(args.reproducer, rep.worst)
    print(f"worst instance written to {args.reproducer}", file=sys.stderr)
    return EXIT_GRADCHECK


COMMANDS = {
    "sinkhorn": cmd_sinkhorn,
    "barycenter": cmd_barycenter,
    "wdl": cmd_wdl,
    "gradcheck": cmd_gradcheck,
}

_GLOBAL_KEYS = ("config", "dump_config", "verbose", "command")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            cfg = RunConfig.load(args.config)
            if cfg.command not in COMMANDS:
                raise ConfigError(f"unknown command {cfg.command!r} in {args.config}")
            args = parser.parse_args(cfg.to_argv())
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_VALIDATION
        if args.dump_config:
            params = {k: v for k, v in vars(args).items() if k not in _GLOBAL_KEYS}
            RunConfig(args.command, params).save(args.dump_config)
        return COMMANDS[args.command](args)
    except NumericFailure as exc:
        print(f"otkit: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValidationError, ValueError, OSError) as exc:
        print(f"otkit: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OTError as exc:  # pragma: no cover - every OTError is one of the above
        print(f"otkit: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
