"""Command-line front end.

    chaos-approx <subcommand> plan.json [--seed N] [--count N] [--out PATH]

Exit codes: 0 all verdicts pass, 1 a verdict failed, 2 invalid input,
3 missing capability, 4 resource budget exceeded.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .errors import ChaosApproxError
from .plan import parse_plan
from .serialize import dumps, write_csv
from .stats import run_experiment, simulate

SINGLE_TESTS = ("bounds", "fdd", "vector", "tightness", "covariance")
SUBCOMMANDS = ("simulate", *SINGLE_TESTS, "report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chaos-approx", description="Approximate multiple Wiener-Ito integrals and check convergence.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    helps = {
        "simulate": "dump Y samples for every epsilon and time as CSV",
        "bounds": "second-moment bound check",
        "fdd": "finite-dimensional convergence against the reference law",
        "vector": "joint convergence of several integrands on shared paths",
        "tightness": "fourth-moment increment ratios (n = 2)",
        "covariance": "Kac-Stroock theta covariance check",
        "report": "run every test listed in the plan",
    }
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("plan", help="experiment plan (JSON)")
        p.add_argument("--seed", type=int, default=None, help="override the plan seed")
        p.add_argument("--count", type=int, default=None, help="override the sample count")
        p.add_argument("--out", default=None, help="override the output path")
    return parser


def _load(args):
    plan = parse_plan(args.plan)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.count is not None:
        overrides["count"] = args.count
    if overrides:
        from .plan import plan_from_dict

        data = plan.to_dict()
        data.update(overrides)
        plan = plan_from_dict(data, base_dir=plan.base_dir)
    return plan


def _simulate(plan, out) -> int:
    f = plan.function()
    cfg = plan.quadrature()
    header, cols = [], []
    for eps in plan.epsilons:
        Y = simulate([f], plan.kernel_kind, eps, plan.times, plan.count, cfg, plan.seed, plan.xi_law)
        header.extend(f"eps={eps!r};t={t!r}" for t in plan.times)
        cols.append(Y)
    write_csv(out, header, np.concatenate(cols, axis=1))
    print(f"wrote {plan.count} x {len(header)} samples to {out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # usage errors exit with 2, the validation code
        return int(exc.code or 0)
    try:
        plan = _load(args)
        if args.command == "simulate":
            return _simulate(plan, args.out or plan.samples_out)
        if args.command != "report":
            plan.tests = [args.command]
        report = run_experiment(plan)
        out = args.out or plan.out
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(dumps(report.payload()))
        for v in report.verdicts:
            print(v.line())
        print(f"report written to {out}")
        return 0 if report.all_passed else 1
    except ChaosApproxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
