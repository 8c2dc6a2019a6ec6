"""Command-line interface.

Subcommands: ``fit``, ``robustness``, ``evidence``, ``simulate``,
``report``. Exit codes: 0 success, 1 data error, 2 numerical error,
3 usage error.
"""

from __future__ import annotations

import argparse
import csv
import sys

from .calibration import (
    ConditionKind,
    DegeneracyCondition,
    fit_cwc,
    fit_iba,
    fit_sa,
)
from .errors import DataError, NumericalError
from .evidence import PriorConfig, compare_models
from .io import _fmt, build_report, file_digest, load_scores, write_report
from .robustness import perturbation_bound
from .simulation import SimulationConfig, run_sweep

EXIT_OK = 0
EXIT_DATA = 1
EXIT_NUMERICAL = 2
EXIT_USAGE = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse parser that reports usage problems via exceptions."""

    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="panelcal",
        description="Calibrate panel assessment scores with declared confidences.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add_condition_flags(p):
        p.add_argument(
            "--condition",
            choices=[k.value for k in ConditionKind],
            default=ConditionKind.CONFIDENCE_WEIGHTED_ZERO_BIAS.value,
            help="degeneracy-breaking condition (default: cw-zero, which keeps "
            "the confidence-weighted average value equal to the weighted "
            "average score; zero-mean and reference values differ from it "
            "only by a uniform shift)",
        )
        p.add_argument(
            "--v-ref",
            type=float,
            default=None,
            help="reference value (required with --condition reference)",
        )

    def add_lambda_flag(p):
        p.add_argument(
            "--lambda",
            dest="lam",
            type=float,
            default=None,
            help="scale ratio for qualitative confidence levels (default 1.75)",
        )

    p_fit = sub.add_parser("fit", help="fit values and biases")
    p_fit.add_argument("scores", help="scores file")
    p_fit.add_argument(
        "--method",
        choices=["sa", "iba", "cwc", "all"],
        default="all",
        help="fitting method (default: all)",
    )
    add_condition_flags(p_fit)
    add_lambda_flag(p_fit)

    p_rob = sub.add_parser("robustness", help="spectral robustness report")
    p_rob.add_argument("scores", help="scores file")
    add_condition_flags(p_rob)
    add_lambda_flag(p_rob)

    p_ev = sub.add_parser("evidence", help="Bayesian model comparison")
    p_ev.add_argument("scores", help="scores file")
    p_ev.add_argument("--sigma-o", type=float, default=22.5, help="value ball radius scale")
    p_ev.add_argument("--sigma-a", type=float, default=15.0, help="bias ball radius scale")
    p_ev.add_argument("--w-min", type=float, default=1.0, help="variance prior lower cut")
    p_ev.add_argument("--w-max", type=float, default=900.0, help="variance prior upper cut")
    p_ev.add_argument(
        "--v-ref",
        type=float,
        default=None,
        help="value ball centre (recorded for provenance; the extended-range "
        "closed forms do not depend on it)",
    )
    add_lambda_flag(p_ev)

    p_sim = sub.add_parser("simulate", help="synthetic panel experiment")
    p_sim.add_argument("--r", default="2", help="assessors per object; comma list sweeps")
    p_sim.add_argument("--objects", type=int, default=3000)
    p_sim.add_argument("--assessors", type=int, default=15)
    p_sim.add_argument("--profile", default="1:1:1", help="high:medium:low ratio, e.g. 1:2:1")
    p_sim.add_argument("--sigma-levels", default="5,10,15", help="uncertainties per level")
    p_sim.add_argument("--value-mean", type=float, default=50.0)
    p_sim.add_argument("--value-sd", type=float, default=15.0)
    p_sim.add_argument("--bias-sd", type=float, default=15.0)
    p_sim.add_argument("--truncation", default="0,100", help="score interval lo,hi")
    p_sim.add_argument("--runs", type=int, default=100)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", default=None, help="write CSV here instead of stdout")

    p_rep = sub.add_parser("report", help="full analysis report")
    p_rep.add_argument("scores", help="scores file")
    p_rep.add_argument(
        "--format", choices=["json", "csv-tables", "text"], default="json"
    )
    p_rep.add_argument("--out", default=".", help="output directory")
    add_condition_flags(p_rep)
    add_lambda_flag(p_rep)
    p_rep.add_argument("--sigma-o", type=float, default=22.5)
    p_rep.add_argument("--sigma-a", type=float, default=15.0)
    p_rep.add_argument("--w-min", type=float, default=1.0)
    p_rep.add_argument("--w-max", type=float, default=900.0)

    return parser


def _condition_from_args(args) -> DegeneracyCondition:
    kind = ConditionKind(args.condition)
    if kind is ConditionKind.REFERENCE_VALUE:
        if args.v_ref is None:
            raise UsageError("--condition reference requires --v-ref")
        return DegeneracyCondition.reference(args.v_ref)
    if args.v_ref is not None:
        raise UsageError("--v-ref only applies with --condition reference")
    return DegeneracyCondition(kind)


def _cmd_fit(args) -> int:
    graph = load_scores(args.scores, lam=args.lam)
    condition = _condition_from_args(args)
    wanted = ["sa", "iba", "cwc"] if args.method == "all" else [args.method]
    results = {}
    for name in wanted:
        if name == "sa":
            results[name] = fit_sa(graph)
        elif name == "iba":
            results[name] = fit_iba(graph, condition)
        else:
            results[name] = fit_cwc(graph, condition)

    header = ["object"] + [m.upper() for m in wanted]
    print("\t".join(header))
    for i, obj in enumerate(graph.objects):
        row = [obj] + [_fmt(float(results[m].values[i])) for m in wanted]
        print("\t".join(row))
    bias_methods = [m for m in wanted if m != "sa"]
    if bias_methods:
        print()
        print("\t".join(["assessor"] + [f"bias {m.upper()}" for m in bias_methods]))
        for i, assessor in enumerate(graph.assessors):
            row = [assessor] + [
                _fmt(float(results[m].biases[i])) for m in bias_methods
            ]
            print("\t".join(row))
    print()
    for m in wanted:
        print(f"residual {m.upper()}\t{_fmt(results[m].residual)}")
    return EXIT_OK


def _cmd_robustness(args) -> int:
    graph = load_scores(args.scores, lam=args.lam)
    condition = _condition_from_args(args)
    report = perturbation_bound(graph, condition)
    lam2 = "n/a" if report.lambda2 is None else _fmt(report.lambda2)
    print(f"lambda2\t{lam2}")
    print(f"mu2\t{_fmt(report.mu2)}")
    print(f"bound_factor\t{_fmt(report.bound_factor)}")
    print("object\tper_object_bound")
    for obj, bound in zip(graph.objects, report.per_object_bound):
        print(f"{obj}\t{_fmt(float(bound))}")
    return EXIT_OK


def _cmd_evidence(args) -> int:
    graph = load_scores(args.scores, lam=args.lam)
    prior = PriorConfig(
        sigma_o=args.sigma_o,
        sigma_a=args.sigma_a,
        v_ref=args.v_ref,
        w_min=args.w_min,
        w_max=args.w_max,
    )
    report = compare_models(graph, prior)
    print("method\tlog_evidence")
    for m, value in (
        ("sa", report.log_evidence_sa),
        ("iba", report.log_evidence_iba),
        ("cwc", report.log_evidence_cwc),
    ):
        print(f"{m}\t{_fmt(value)}")
    print(f"ranking\t{' > '.join(report.ranking)}")
    return EXIT_OK


def _parse_triple(text: str, sep: str, name: str) -> tuple[float, float, float]:
    parts = text.split(sep)
    if len(parts) != 3:
        raise UsageError(f"{name} needs three {sep!r}-separated numbers, got {text!r}")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError:
        raise UsageError(f"{name}: bad number in {text!r}") from None


def _cmd_simulate(args) -> int:
    try:
        r_values = [int(p) for p in args.r.split(",")]
    except ValueError:
        raise UsageError(f"--r: bad integer list {args.r!r}") from None
    profile = _parse_triple(args.profile, ":", "--profile")
    sigma_levels = _parse_triple(args.sigma_levels, ",", "--sigma-levels")
    trunc_parts = args.truncation.split(",")
    if len(trunc_parts) != 2:
        raise UsageError(f"--truncation needs lo,hi, got {args.truncation!r}")
    truncation = (float(trunc_parts[0]), float(trunc_parts[1]))

    config = SimulationConfig(
        r=r_values[0],
        n_objects=args.objects,
        n_assessors=args.assessors,
        profile=profile,
        sigma_levels=sigma_levels,
        value_mean=args.value_mean,
        value_sd=args.value_sd,
        bias_sd=args.bias_sd,
        truncation=truncation,
        runs=args.runs,
        seed=args.seed,
    )
    rows = run_sweep(config, r_values)
    fieldnames = [
        "method",
        "r",
        "profile",
        "mean_err",
        "max_err",
        "mean_bias_err",
        "max_bias_err",
        "ratio_vs_sa",
    ]

    def render(fh):
        writer = csv.writer(fh)
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow(
                [
                    row["method"],
                    row["r"],
                    row["profile"],
                    _fmt(row["mean_err"]),
                    _fmt(row["max_err"]),
                    _fmt(row["mean_bias_err"]),
                    _fmt(row["max_bias_err"]),
                    _fmt(row["ratio_vs_sa"]),
                ]
            )

    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            render(fh)
    else:
        render(sys.stdout)
    return EXIT_OK


def _cmd_report(args) -> int:
    graph = load_scores(args.scores, lam=args.lam)
    condition = _condition_from_args(args)
    prior = PriorConfig(
        sigma_o=args.sigma_o,
        sigma_a=args.sigma_a,
        w_min=args.w_min,
        w_max=args.w_max,
    )
    flags = {
        "condition": args.condition,
        "v_ref": args.v_ref,
        "lambda": args.lam,
        "format": args.format,
    }
    report = build_report(
        graph,
        condition,
        prior,
        input_digest=file_digest(args.scores),
        flags=flags,
    )
    paths = write_report(report, args.format, args.out, graph=graph)
    for path in paths:
        print(path)
    return EXIT_OK


_COMMANDS = {
    "fit": _cmd_fit,
    "robustness": _cmd_robustness,
    "evidence": _cmd_evidence,
    "simulate": _cmd_simulate,
    "report": _cmd_report,
}


def cli_main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required (see --help)")
        return _COMMANDS[args.command](args)
    except SystemExit as exc:  # argparse --help
        code = exc.code
        return code if isinstance(code, int) else EXIT_USAGE
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
