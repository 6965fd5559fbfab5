"""Command line front end.

Subcommands:
  run     execute a TOML experiment config and write traces/aggregates
  calc    evaluate the closed-form correction and rate formulas
  gen     generate a problem instance and save it to disk
  verify  run the statistical verification suites

Exit codes: 0 success, 1 runtime failure (including failed verify checks),
2 invalid input or an infeasible correction. Scalar results print with 12
significant digits. SKETCHAVG_THREADS, when set, overrides --threads.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import moments
from .experiments import ConfigError, load_config, run_experiment
from .linalg import RngStream
from .problems import KINDS, generate_problem, save_problem
from .verify import SUITES, run_suite


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _gamma_from(args) -> float:
    if getattr(args, "gamma", None) is not None:
        return float(args.gamma)
    if args.d is None or args.m is None:
        raise ValueError("give --gamma or both --d and --m")
    return float(args.d) / float(args.m)


def _resolve_threads(args) -> int:
    env = os.environ.get("SKETCHAVG_THREADS")
    if env is not None:
        try:
            threads = int(env)
        except ValueError:
            raise ValueError(
                f"SKETCHAVG_THREADS must be an integer, got {env!r}")
    else:
        threads = args.threads
    if threads < 1:
        raise ValueError(f"thread count must be >= 1, got {threads}")
    return threads


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    threads = _resolve_threads(args)
    summary = run_experiment(cfg, args.out_dir, threads=threads,
                             trials=args.trials, seed=args.seed)
    for label in sorted(summary["variants"]):
        obs = summary["variants"][label]["observed"]
        print(f"{label}: final rel_x_err mean "
              f"{_fmt(obs['final_rel_x_err_mean'])}")
    print(f"wrote {os.path.join(args.out_dir, 'aggregate.csv')}")
    return 0


def cmd_gen(args) -> int:
    rng = RngStream(args.seed, 0).generator()
    p = generate_problem(kind=args.kind, n=args.n, d=args.d, rng=rng,
                         noise=args.noise, lambda1=args.lambda1,
                         identical_sv=args.identical_sv, sigma0=args.sigma0,
                         bound=args.bound)
    extra = {"seed": args.seed, "noise": args.noise,
             "identical_sv": args.identical_sv, "sigma0": args.sigma0}
    save_problem(p, args.out_dir, extra_manifest=extra)
    print(f"wrote {args.kind} problem (n={p.n}, d={p.d}) to {args.out_dir}")
    return 0


def cmd_verify(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    failed = 0
    total = 0
    for name in names:
        print(f"suite {name}")
        for result in run_suite(name, seed=args.seed):
            print("  " + result.line())
            total += 1
            if not result.passed:
                failed += 1
    if failed:
        print(f"{failed} of {total} checks failed")
        return 1
    print(f"all {total} checks passed")
    return 0


def cmd_calc_theta1(args) -> int:
    print(_fmt(moments.theta1(args.m, args.d)))
    return 0


def cmd_calc_theta2(args) -> int:
    print(_fmt(moments.theta2(args.m, args.d)))
    return 0


def cmd_calc_theta3(args) -> int:
    print(_fmt(moments.theta3(_gamma_from(args), args.lam)))
    return 0


def cmd_calc_lambda2_ridge(args) -> int:
    gamma = float(args.d) / float(args.m)
    value = moments.lambda2_star_ridge(args.lambda1, gamma, sigma=args.sigma)
    print(_fmt(value))
    additive = moments.lambda2_star_ridge_additive(args.lambda1, gamma,
                                                   sigma=args.sigma)
    print(f"note: additive-form value {_fmt(additive)}")
    return 0


def cmd_calc_lambda2_newton(args) -> int:
    gamma = float(args.d) / float(args.m)
    print(_fmt(moments.lambda2_star_newton(args.lambda1, gamma,
                                           sigma=args.sigma)))
    return 0


def cmd_calc_step_scalings(args) -> int:
    scalings = moments.step_scalings(args.m, args.d)
    print(f"unbiased {_fmt(scalings.unbiased)}")
    print(f"min-variance {_fmt(scalings.min_variance)}")
    return 0


def cmd_calc_ihs_rate(args) -> int:
    print(_fmt(moments.ihs_rate(args.q, args.m, args.d)))
    return 0


def cmd_calc_predict_iters(args) -> int:
    print(_fmt(moments.predict_iterations(args.eps, args.q, args.m, args.d)))
    return 0


def _add_md(sub, gamma_ok: bool = False):
    if gamma_ok:
        sub.add_argument("--gamma", type=float, default=None,
                         help="aspect ratio d/m (alternative to --d/--m)")
        sub.add_argument("--m", type=int, default=None)
        sub.add_argument("--d", type=int, default=None)
    else:
        sub.add_argument("--m", type=int, required=True)
        sub.add_argument("--d", type=int, required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sketchavg",
        description="distributed averaging of sketched second order solvers")
    commands = parser.add_subparsers(dest="command", required=True)

    p_run = commands.add_parser("run", help="run an experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out-dir", required=True)
    p_run.add_argument("--trials", type=int, default=None,
                       help="override the config's trial count")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the config's master seed")
    p_run.add_argument("--threads", type=int, default=1)
    p_run.set_defaults(func=cmd_run)

    p_gen = commands.add_parser("gen", help="generate a problem instance")
    p_gen.add_argument("--kind", required=True, choices=KINDS)
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--d", type=int, required=True)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out-dir", required=True)
    p_gen.add_argument("--noise", type=float, default=0.0)
    p_gen.add_argument("--lambda1", type=float, default=0.0)
    p_gen.add_argument("--identical-sv", action="store_true")
    p_gen.add_argument("--sigma0", type=float, default=1.0)
    p_gen.add_argument("--bound", type=float, default=1.0)
    p_gen.set_defaults(func=cmd_gen)

    p_verify = commands.add_parser("verify", help="run verification suites")
    p_verify.add_argument("suite", nargs="?", default="all",
                          choices=["all"] + list(SUITES))
    p_verify.add_argument("--seed", type=int, default=None,
                          help="override the suite's default seed")
    p_verify.set_defaults(func=cmd_verify)

    p_calc = commands.add_parser("calc", help="closed-form calculators")
    calcs = p_calc.add_subparsers(dest="calc_command", required=True)

    c = calcs.add_parser("theta1", help="first inverse moment")
    _add_md(c)
    c.set_defaults(func=cmd_calc_theta1)

    c = calcs.add_parser("theta2", help="second inverse moment")
    _add_md(c)
    c.set_defaults(func=cmd_calc_theta2)

    c = calcs.add_parser("theta3", help="regularized inverse moment")
    _add_md(c, gamma_ok=True)
    c.add_argument("--lam", type=float, required=True,
                   help="regularizer already divided by sigma^2")
    c.set_defaults(func=cmd_calc_theta3)

    c = calcs.add_parser("lambda2-ridge",
                         help="zero-bias ridge regularizer")
    c.add_argument("--lambda1", type=float, required=True)
    _add_md(c)
    c.add_argument("--sigma", type=float, default=1.0)
    c.set_defaults(func=cmd_calc_lambda2_ridge)

    c = calcs.add_parser("lambda2-newton",
                         help="zero-bias Newton regularizer")
    c.add_argument("--lambda1", type=float, required=True)
    _add_md(c)
    c.add_argument("--sigma", type=float, default=1.0)
    c.set_defaults(func=cmd_calc_lambda2_newton)

    c = calcs.add_parser("step-scalings",
                         help="unbiased and min-variance step scales")
    _add_md(c)
    c.set_defaults(func=cmd_calc_step_scalings)

    c = calcs.add_parser("ihs-rate", help="averaged one-step contraction")
    c.add_argument("--q", type=int, required=True)
    _add_md(c)
    c.set_defaults(func=cmd_calc_ihs_rate)

    c = calcs.add_parser("predict-iters",
                         help="iterations to reach a target accuracy")
    c.add_argument("--eps", type=float, required=True)
    c.add_argument("--q", type=int, required=True)
    _add_md(c)
    c.set_defaults(func=cmd_calc_predict_iters)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (np.linalg.LinAlgError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
