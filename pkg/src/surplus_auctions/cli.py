"""Command line entry point.

Exit codes: 0 success, 1 invalid input, 2 a check or audit failed.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import analysis, experiments, formats, mechanisms
from .valuations import ValuationError, single_item_instance
from .vcg import run_vcg
from .welfare import SolverError

EXIT_OK, EXIT_INVALID, EXIT_CHECK = 0, 1, 2

CHECKS = ("surplus-lower-bound", "copies-payment", "divisible-payment", "binomial")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--out", default="-", help="output file ('-' for stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="surplus-auctions", description="Surplus-maximising auction toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()

    p = sub.add_parser("solve", parents=[common], help="welfare optimum and VCG outcome of an instance file")
    p.add_argument("instance")
    p.add_argument("--copies", type=int, default=1)
    p.add_argument("--q", type=float, default=1.0)
    p.add_argument("--allow-nonstandard", action="store_true")

    p = sub.add_parser("mechanism", parents=[common], help="exact outcome distribution and surplus report")
    p.add_argument("--config", required=True, help="mechanism config JSON file")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--instance")
    src.add_argument("--values", help="comma-separated single-item values, e.g. 4,1")
    p.add_argument("--allow-nonstandard", action="store_true")

    p = sub.add_parser("audit", parents=[common], help="truthfulness-in-expectation and ex-post IR audit")
    p.add_argument("--config", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--instance")
    src.add_argument("--values")
    p.add_argument("--deviations", type=int, default=20)
    p.add_argument("--allow-nonstandard", action="store_true")

    p = sub.add_parser("verify", parents=[common], help="check inequalities on random instances")
    p.add_argument("--check", choices=CHECKS, required=True)
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--class", dest="class_name", choices=("unit_demand", "multi_unit"), default=None,
                   help="valuation class for the indivisible checks (default: alternate)")
    p.add_argument("--samples", type=int, default=10**6, help="Monte-Carlo samples for the binomial check")

    p = sub.add_parser("experiment", parents=[common], help="Monte-Carlo estimate over a generator family")
    p.add_argument("--config", required=True)
    p.add_argument("--family", choices=experiments.FAMILIES, required=True)
    p.add_argument("--n", default="2", help="agent count, or a comma list for a ratio sweep")
    p.add_argument("--m", type=int, default=1)
    return parser


def _load_json(path: str) -> dict:
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValuationError(f"{path}: malformed JSON: {exc}") from None


def _instance(args):
    if getattr(args, "values", None):
        try:
            values = [float(x) for x in args.values.split(",")]
        except ValueError:
            raise ValuationError(f"bad --values {args.values!r}") from None
        if any(v < 0 for v in values):
            raise ValuationError("values must be nonnegative")
        return single_item_instance(values)
    return formats.load_instance(args.instance, args.allow_nonstandard)


def _emit(args, text: str) -> None:
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True) + "\n"


def cmd_solve(args) -> int:
    instance = _instance(args)
    outcome = run_vcg(instance, copies=args.copies, q=args.q)
    _emit(args, _dumps(outcome.to_dict()))
    return EXIT_OK


def cmd_mechanism(args) -> int:
    instance = _instance(args)
    dist = mechanisms.mechanism_from_config(_load_json(args.config))(instance)
    report = analysis.expected_surplus(dist, instance)
    _emit(args, _dumps({"distribution": formats.distribution_to_dict(dist), "report": report.to_dict()}))
    return EXIT_OK


def cmd_audit(args) -> int:
    instance = _instance(args)
    config = _load_json(args.config)
    mech = mechanisms.mechanism_from_config(config)
    report = analysis.audit_tie(mech, instance, args.deviations, args.seed, name=config.get("mechanism", ""))
    _emit(args, _dumps(report.to_dict()))
    return EXIT_OK if report.passed and report.epir else EXIT_CHECK


def _verify_lines(args):
    rng = np.random.default_rng(args.seed)
    if args.check == "binomial":
        for n in range(1, 9):
            for m in range(1, 9):
                mean, se = analysis.binomial_inverse_mc(n, m, args.samples, rng)
                exact = analysis.binomial_inverse_expectation(n, m)
                yield {"check": args.check, "instance": f"n={n},m={m}", "lhs": mean, "rhs": exact,
                       "pass": abs(mean - exact) <= max(3 * se, 1e-12)}
        return
    for k in range(args.instances):
        if args.check == "divisible-payment":
            instance = experiments.random_instance("divisible_separable", rng, n=3, max_m=3)
            q = float(rng.choice([0.25, 0.5]))
            check = analysis.divisible_payment_sides(instance, q)
        else:
            cls = args.class_name or ("unit_demand", "multi_unit")[k % 2]
            instance = experiments.random_instance(cls, rng)
            if args.check == "copies-payment":
                check = analysis.copies_payment_sides(instance, int(rng.integers(0, 3)))
            else:
                r = int(rng.integers(0, 4))
                check = analysis.surplus_lower_bound_sides(instance, r)
        yield {"check": args.check, "instance": formats.instance_digest(instance), "lhs": check.lhs,
               "rhs": check.rhs, "pass": check.holds()}


def cmd_verify(args) -> int:
    lines, ok = [], True
    for line in _verify_lines(args):
        ok &= line["pass"]
        lines.append(_dumps(line))
    _emit(args, "".join(lines))
    return EXIT_OK if ok else EXIT_CHECK


def cmd_experiment(args) -> int:
    config = _load_json(args.config)
    mechanisms.mechanism_from_config(config)  # validate early
    try:
        n_list = [int(x) for x in args.n.split(",")]
    except ValueError:
        raise ValuationError(f"bad --n {args.n!r}") from None
    reports = experiments.ratio_sweep(config, args.family, n_list, args.trials, args.m, args.seed)
    if args.format == "csv":
        _emit(args, experiments.reports_to_csv(reports))
    else:
        _emit(args, "".join(_dumps(r.to_dict()) for r in reports))
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "mechanism": cmd_mechanism,
    "audit": cmd_audit,
    "verify": cmd_verify,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ValuationError, SolverError, mechanisms.MechanismError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
