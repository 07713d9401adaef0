"""Command-line front end: ``python -m mixkpls <command> ...``.

Exit codes: 0 on success, 2 for bad input, 3 for numerical failures.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import shlex
import subprocess
import sys
from pathlib import Path

import numpy as np

from .bayesopt import AcquisitionSettings, EgoConfig, ego_run
from .benchmarks import PROBLEMS, get_problem, pva_excluding_zero_variance, rmse, run_model_benchmark
from .design_space import (
    DesignSpace,
    DesignSpaceError,
    MixedPoint,
    lhs_sample,
    point_to_dict,
    read_doe_csv,
    write_doe_csv,
)
from .gp import KERNEL_NAMES, FitError, NotSPDError, TrainedGp, fit, kernel_config

EXIT_INPUT = 2
EXIT_NUMERIC = 3

log = logging.getLogger("mixkpls")


class InputError(Exception):
    pass


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def _space(args) -> DesignSpace:
    if getattr(args, "problem", None):
        return get_problem(args.problem).space
    if not getattr(args, "space", None):
        raise InputError("give --space or --problem")
    return DesignSpace.load(args.space)


def _print_summary(d: dict) -> None:
    def conv(v):
        if isinstance(v, float):
            return float(_fmt(v))
        return v

    print(json.dumps({k: conv(v) for k, v in d.items()}, indent=2))


# -- commands -------------------------------------------------------------

def cmd_sample(args) -> None:
    if args.n < 1:
        raise InputError("--n must be at least 1")
    space = _space(args)
    doe = lhs_sample(space, args.n, seed=args.seed)
    if args.problem:
        doe = get_problem(args.problem).evaluate(doe)
    write_doe_csv(space, doe, args.out)


def cmd_fit(args) -> None:
    space = _space(args)
    doe = read_doe_csv(space, args.doe, require_y=True)
    config = kernel_config(args.kernel, pls_levels=args.pls_levels, pls_components=args.pls_components)
    gp, report = fit(space, doe, config, starts=args.starts, seed=args.seed,
                     max_evals_per_dim=args.max_evals_per_dim)
    gp.save(args.out)
    _print_summary({
        "kernel": args.kernel,
        "n_hyperparameters": gp.n_hyper,
        "log_likelihood": float(gp.log_likelihood),
        "nugget": float(gp.nugget),
        "n_evaluations": report.n_eval,
        "wall_time_s": float(report.wall_time),
    })


def cmd_predict(args) -> None:
    gp = TrainedGp.load(args.model)
    doe = read_doe_csv(gp.space, args.points)
    mean, var = gp.predict(doe)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["mean", "variance"])
        for m, v in zip(mean, var):
            writer.writerow([_fmt(m), _fmt(v)])
    finally:
        if args.out:
            out.close()


def cmd_evaluate(args) -> None:
    gp = TrainedGp.load(args.model)
    problem = get_problem(args.problem)
    if problem.space.to_dict() != gp.space.to_dict():
        raise InputError(f"model design space does not match problem {args.problem!r}")
    val = problem.validation_set()
    mean, var = gp.predict(val)
    score, n_out = pva_excluding_zero_variance(val.y, mean, var)
    summary = {"problem": args.problem, "n_points": len(val), "rmse": rmse(val.y, mean)}
    summary["pva"] = None if np.isnan(score) else score
    summary["pva_excluded_zero_variance"] = n_out
    _print_summary(summary)


class SubprocessEvaluator:
    """Black box run as a child process: point JSON on stdin, {"y": v} on stdout."""

    def __init__(self, command: str, space: DesignSpace, timeout: float | None = None):
        self.argv = shlex.split(command)
        self.space = space
        self.timeout = timeout

    def __call__(self, w: MixedPoint) -> float:
        proc = subprocess.run(
            self.argv,
            input=json.dumps(point_to_dict(self.space, w)),
            capture_output=True,
            text=True,
            timeout=self.timeout,
        )
        if proc.returncode != 0:
            raise RuntimeError(f"evaluator exited with {proc.returncode}: {proc.stderr.strip()}")
        return float(json.loads(proc.stdout)["y"])


def cmd_optimize(args) -> None:
    if bool(args.problem) == bool(args.space):
        raise InputError("give exactly one of --problem or --space")
    if args.problem:
        problem = get_problem(args.problem)
        space, f = problem.space, problem
    else:
        if not args.evaluator:
            raise InputError("--space needs --evaluator")
        space = DesignSpace.load(args.space)
        f = SubprocessEvaluator(args.evaluator, space, args.evaluator_timeout)
    config = EgoConfig(
        kernel=kernel_config(args.kernel, pls_levels=args.pls_levels,
                             pls_components=args.pls_components),
        doe_size=args.doe_size,
        budget=args.budget,
        fit_starts=args.starts,
        acquisition=AcquisitionSettings(enum_cap=args.enum_cap),
        seed=args.seed,
    )
    trace = ego_run(f, space, config)
    trace.to_csv(args.out)
    if args.summary:
        trace.to_json(args.summary)
    _print_summary({"n_evaluations": trace.n_evaluations, "best_y": float(trace.best_y),
                    "n_failed": trace.summary()["n_failed"]})


def cmd_benchmark(args) -> None:
    problem = get_problem(args.problem)
    names = [k.strip() for k in args.kernels.split(",") if k.strip()]
    kernels = {k: kernel_config(k, pls_levels=args.pls_levels, pls_components=args.pls_components)
               for k in names}
    report = run_model_benchmark(problem, kernels, args.doe_size, list(range(args.seeds)),
                                 starts=args.starts, max_evals_per_dim=args.max_evals_per_dim)
    if args.out_csv:
        report.to_csv(args.out_csv)
    text = report.to_json(args.out_json)
    print(text)


def cmd_export_corr(args) -> None:
    gp = TrainedGp.load(args.model)
    if gp.space.l == 0:
        raise InputError("no categorical variable in this model")
    name = args.variable or gp.space.categoricals[0].name
    try:
        M = gp.level_matrix(name)
    except KeyError as err:
        raise InputError(str(err)) from None
    except ValueError as err:
        raise InputError(str(err)) from None
    np.savetxt(args.out, M, delimiter=",", fmt="%.17g")


# -- parser ---------------------------------------------------------------

def _add_kernel_args(p) -> None:
    p.add_argument("--kernel", default="hh", choices=KERNEL_NAMES)
    p.add_argument("--pls-levels", type=int, default=2,
                   help="reduced level count for hh-pls / ehh-pls")
    p.add_argument("--pls-components", type=int, default=2, help="components for cr-pls")
    p.add_argument("--starts", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixkpls", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="Latin hypercube DoE as CSV")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--space")
    src.add_argument("--problem", choices=sorted(PROBLEMS), help="also evaluates y")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("fit", help="fit a GP to a DoE CSV")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--space")
    src.add_argument("--problem", choices=sorted(PROBLEMS))
    p.add_argument("--doe", required=True)
    _add_kernel_args(p)
    p.add_argument("--max-evals-per-dim", type=int, default=150)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="posterior mean and variance at points")
    p.add_argument("--model", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="RMSE and PVA on a problem's validation grid")
    p.add_argument("--model", required=True)
    p.add_argument("--problem", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("optimize", help="EGO with expected improvement")
    p.add_argument("--problem")
    p.add_argument("--space")
    p.add_argument("--evaluator", help="command reading a point as JSON on stdin")
    p.add_argument("--evaluator-timeout", type=float)
    _add_kernel_args(p)
    p.add_argument("--doe-size", type=int, default=5)
    p.add_argument("--budget", type=int, default=55)
    p.add_argument("--enum-cap", type=int, default=10_000)
    p.add_argument("--out", required=True)
    p.add_argument("--summary")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("benchmark", help="model-accuracy benchmark over seeds")
    p.add_argument("--problem", required=True)
    p.add_argument("--kernels", default="gd,cr,hh-pls")
    p.add_argument("--pls-levels", type=int, default=2)
    p.add_argument("--pls-components", type=int, default=2)
    p.add_argument("--doe-size", type=int, default=98)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--starts", type=int, default=10)
    p.add_argument("--max-evals-per-dim", type=int, default=150)
    p.add_argument("--out-csv")
    p.add_argument("--out-json")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("export-corr", help="fitted level correlation matrix as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--variable")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_corr)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (NotSPDError, FitError, np.linalg.LinAlgError, FloatingPointError) as err:
        print(f"mixkpls: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, DesignSpaceError, ValueError, KeyError, OSError,
            json.JSONDecodeError) as err:
        print(f"mixkpls: {err}", file=sys.stderr)
        return EXIT_INPUT
    return 0


if __name__ == "__main__":
    sys.exit(main())
