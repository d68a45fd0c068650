"""
charge-eq: solve, query, verify and fit from the command line.

Exit codes: 0 ok, 1 usage or parameter error, 2 verification failure,
3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import data_io
from .curves import decide, sample_curve
from .equilibrium import MODELS, indifferent_exists, solve
from .model import (
    FAMILIES,
    ChargingTimeFn,
    ClosedFormChargingTime,
    DomainError,
    DriverState,
    ModelParams,
    total_costs,
)
from .oracle import best_response_grid, verify_equilibrium, write_grid_csv

EXIT_OK, EXIT_PARAM, EXIT_VERIFY, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("charge_eq")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARAM, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str
    params: ModelParams
    model: str = "exogenous"
    classes: List[Tuple[ChargingTimeFn, float]] = field(default_factory=list)
    labels: List[str] = field(default_factory=list)
    args: Optional[argparse.Namespace] = None


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--model", choices=MODELS, default="exogenous")
    g.add_argument("--c", type=float, default=0.2, help="SoC used per unit distance")
    g.add_argument("--tau", type=float, default=1.0, help="travel time across the segment")
    g.add_argument("--rt", type=float, default=1.0, help="target state-of-charge")
    g.add_argument("--wa", type=float, default=0.0, help="exogenous wait at Station A")
    g.add_argument("--wb", type=float, default=0.0, help="exogenous wait at Station B")
    g.add_argument("--eps", type=float, default=0.0, help="full-congestion wait")
    g.add_argument("--capacity", type=float, default=1.0, help="battery capacity E")
    f = p.add_argument_group("charging form")
    f.add_argument("--family", choices=FAMILIES, help="closed-form charging time family")
    f.add_argument("--coef", type=float, action="append", default=None,
                   help="family coefficient (repeat for several)")
    f.add_argument("--curve", help="JSON charging form or fitted rate curve")
    f.add_argument("--class", dest="classes", action="append", default=[], metavar="FORM[:W]",
                   help="class for the heterogeneous model: family name or JSON path, "
                        "optional weight (repeatable)")


def _parse_class(spec: str, params: ModelParams):
    form, _, weight = spec.rpartition(":")
    if not form or not _is_number(weight):
        form, weight = spec, ""
    if form in FAMILIES:
        f = ClosedFormChargingTime(form, (), params.r_t)
        label = form
    else:
        f = data_io.load_charging_form(form, params)
        label = Path(form).stem
    return f, (float(weight) if weight else None), label


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def build_config(args: argparse.Namespace) -> RunConfig:
    params = ModelParams(c=args.c, tau=args.tau, r_t=args.rt, w_a_x=args.wa, w_b_x=args.wb,
                         epsilon=args.eps, capacity_e=args.capacity)
    specs = []
    if args.classes:
        if args.family or args.curve:
            raise UsageError("use either --class or --family/--curve, not both")
        specs = [_parse_class(s, params) for s in args.classes]
    elif args.curve:
        if args.family:
            raise UsageError("use either --family or --curve, not both")
        f = data_io.load_charging_form(args.curve, params)
        specs = [(f, None, Path(args.curve).stem)]
    else:
        family = args.family or "affine"
        specs = [(ClosedFormChargingTime(family, args.coef or (), params.r_t), None, family)]

    if args.model != "heterogeneous" and len(specs) > 1:
        raise UsageError(f"the {args.model} model takes a single charging form")
    weights = [w for _, w, _ in specs]
    if all(w is None for w in weights):
        weights = [1.0] * len(specs)
    elif any(w is None for w in weights):
        raise UsageError("give a weight for every class or for none")
    total = sum(weights)
    if any(w <= 0 for w in weights):
        raise UsageError("class weights must be positive")
    classes = [(f, w / total) for (f, _, _), w in zip(specs, weights)]
    labels = [label for _, _, label in specs]
    if len(set(labels)) != len(labels):
        labels = [f"{label}_{i + 1}" for i, label in enumerate(labels)]
    return RunConfig(args.command, params, args.model, classes, labels, args)


def _print_solution(sol, classes, params, out) -> None:
    print(f"model: {sol.model}", file=out)
    for label, curve, beta, flag, (f, w) in zip(sol.labels, sol.curves, sol.betas,
                                                 sol.indifferent_in_r, classes):
        exists = indifferent_exists(f, params, "exogenous" if sol.model == "exogenous"
                                    else "endogenous")
        print(f"class {label}: weight={data_io.fmt(w)} z={data_io.fmt(curve.z)} "
              f"beta={data_io.fmt(beta)} indifferent_in_r={str(flag).lower()} "
              f"existence_test={str(exists).lower()}", file=out)
    print(f"alpha: {data_io.fmt(sol.alpha)}", file=out)


def _curve_paths(base: str, labels: Sequence[str]) -> List[Path]:
    base = Path(base)
    if len(labels) == 1:
        return [base]
    return [base.with_name(f"{base.stem}_{label}{base.suffix}") for label in labels]


def cmd_solve(config: RunConfig, out=None) -> int:
    out = out or sys.stdout
    args = config.args
    sol = solve(config.model, config.classes, config.params, config.labels)
    _print_solution(sol, config.classes, config.params, out)
    if args.out_json:
        data_io.export_solution(sol, config.params, args.out_json, "json")
    if args.out_csv:
        lo, hi = args.r_range or (config.params.c, config.params.r_t)
        for curve, path in zip(sol.curves, _curve_paths(args.out_csv, sol.labels)):
            data_io.export_curve(sample_curve(curve, lo, hi, args.n_points), path, "csv")
    return EXIT_OK


def cmd_decide(config: RunConfig, out=None) -> int:
    out = out or sys.stdout
    args = config.args
    sol = solve(config.model, config.classes, config.params, config.labels)
    i = args.class_index
    if not 0 <= i < len(sol.curves):
        raise UsageError(f"--class-index must be in [0, {len(sol.curves) - 1}]")
    f = config.classes[i][0]
    driver = DriverState(args.r, args.y)
    decision = decide(f, config.params, driver, sol.curves[i])
    costs = total_costs(f, config.params, driver,
                        None if sol.model == "exogenous" else sol.alpha,
                        "exogenous" if sol.model == "exogenous" else "endogenous")
    print(f"decision: {decision}", file=out)
    print(f"curve: z={data_io.fmt(sol.curves[i].z)} g(r)={data_io.fmt(sol.curves[i](args.r))}",
          file=out)
    for key, value in costs.as_dict().items():
        print(f"{key}: {data_io.fmt(value)}", file=out)
    return EXIT_OK


def cmd_verify(config: RunConfig, out=None) -> int:
    out = out or sys.stdout
    args = config.args
    sol = solve(config.model, config.classes, config.params, config.labels)
    if args.perturb_z:
        sol = sol.with_z(sol.z + args.perturb_z)
    fs = [f for f, _ in config.classes]
    report = verify_equilibrium(fs, config.params, sol, args.grid, args.grid)
    for name, ok in (("boundary", report.boundary_ok), ("alpha", report.alpha_ok),
                     ("fixed_point", report.fixed_point_ok)):
        print(f"{name}: {'pass' if ok else 'FAIL'}", file=out)
    print(f"max_boundary_error: {data_io.fmt(report.max_boundary_error)} "
          f"(tol {data_io.fmt(report.boundary_tolerance)})", file=out)
    print(f"alpha_empirical: {data_io.fmt(report.alpha_empirical)} "
          f"alpha: {data_io.fmt(report.alpha_solution)} "
          f"(tol {data_io.fmt(report.alpha_tolerance)})", file=out)
    print(f"off_band_violations: {report.off_band_violations}", file=out)
    if args.report_json:
        data_io.export_report(report.to_dict(), args.report_json)
    if args.grid_csv:
        share = None if sol.model == "exogenous" else sol.alpha
        model = "exogenous" if sol.model == "exogenous" else "endogenous"
        for f, path in zip(fs, _curve_paths(args.grid_csv, sol.labels)):
            write_grid_csv(best_response_grid(f, config.params, share, model,
                                              args.grid, args.grid), path)
    if not report.passed:
        print(f"verification failed: {', '.join(report.failed_checks())}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_fit(args: argparse.Namespace, out=None) -> int:
    out = out or sys.stdout
    samples = data_io.load_samples(args.samples, args.label)
    curve = data_io.fit_rate_curve(samples, args.n_knots, not args.no_monotone)
    print(f"fitted {samples.vehicle_label}: {len(samples.samples)} samples, "
          f"{len(curve.knots)} knots, monotone={str(curve.monotone).lower()}", file=out)
    for s, p in curve.knots:
        print(f"  {data_io.fmt(s)} {data_io.fmt(p)}", file=out)
    if args.out_json:
        data_io.export_curve(curve, args.out_json, "json")
    if args.out_csv:
        soc = np.linspace(0.0, 1.0, args.dense)
        power = np.interp(soc, curve.soc, curve.power)
        data_io._write_text(args.out_csv, data_io.curve_csv(zip(soc, power), ("soc", "power")))
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="charge-eq", description=__doc__.strip().splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="compute the equilibrium indifference curve(s)")
    _add_model_flags(p)
    p.add_argument("--out-json", help="solution JSON path")
    p.add_argument("--out-csv", help="curve CSV path (suffixed per class)")
    p.add_argument("--n-points", type=int, default=201)
    p.add_argument("--r-range", type=float, nargs=2, metavar=("LO", "HI"))

    p = sub.add_parser("decide", help="best station for one driver at equilibrium")
    _add_model_flags(p)
    p.add_argument("--r", type=float, required=True, help="remaining state-of-charge")
    p.add_argument("--y", type=float, required=True, help="position on the segment")
    p.add_argument("--class-index", type=int, default=0)

    p = sub.add_parser("verify", help="certify the solution on a brute-force grid")
    _add_model_flags(p)
    p.add_argument("--grid", type=int, default=500, help="grid cells per axis")
    p.add_argument("--perturb-z", type=float, default=0.0,
                   help="shift the solved z before verifying (negative control)")
    p.add_argument("--grid-csv", help="write grid choices (r, y, choice)")
    p.add_argument("--report-json", help="write the verification report")

    p = sub.add_parser("fit", help="fit a monotone rate curve to samples")
    p.add_argument("--samples", required=True, help="CSV of soc,power_kw")
    p.add_argument("--label")
    p.add_argument("--n-knots", type=int, default=data_io.DEFAULT_KNOTS)
    p.add_argument("--no-monotone", action="store_true")
    p.add_argument("--out-json")
    p.add_argument("--out-csv")
    p.add_argument("--dense", type=int, default=101, help="points in the dense CSV")
    return parser


def main(argv: Sequence[str] = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        if args.command == "fit":
            return cmd_fit(args)
        config = build_config(args)
        handler = {"solve": cmd_solve, "decide": cmd_decide, "verify": cmd_verify}[args.command]
        return handler(config)
    except data_io.ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DomainError, UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAM


if __name__ == "__main__":
    sys.exit(main())
