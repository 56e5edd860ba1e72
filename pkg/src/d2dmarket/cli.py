"""Command-line entry point: ``d2dmarket solve`` and ``d2dmarket sweep``."""
from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from .equilibrium import EquilibriumReport, NonConvergenceError, solve_stackelberg
from .experiments import format_csv, load_sweep_spec, run_sweep, with_overrides
from .scenario import ScenarioError, load_scenario
from .winwin import winwin_connected, winwin_disconnected

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NONCONVERGED = 3


def _at_least_one(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def _positive_samples(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 2:
        raise argparse.ArgumentTypeError("need at least 2 samples")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mode", choices=("disconnected", "connected"))
    common.add_argument("--seed", type=int)
    common.add_argument("--mc-samples", type=_positive_samples, dest="mc_samples")
    common.add_argument(
        "--gamma-grid", type=_at_least_one, dest="gamma_grid",
        help="number of uniform commission values in [0, 1] (default 101)",
    )
    common.add_argument(
        "--method", choices=("exact", "mc"),
        help="cost expectation method (default: exact when small enough, else mc)",
    )
    common.add_argument(
        "--max-iter", type=_at_least_one, dest="max_iter", default=100,
        help="best-response sweeps allowed per policy (default 100)",
    )
    common.add_argument("--out", type=Path, help="output file (default: stdout for csv)")
    common.add_argument("--format", choices=("csv", "plot"), default="csv")

    parser = argparse.ArgumentParser(
        prog="d2dmarket", description="Carrier pricing and peer content trading game solver."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    solve = sub.add_parser("solve", parents=[common], help="solve one scenario")
    solve.add_argument("scenario", type=Path)
    sweep = sub.add_parser("sweep", parents=[common], help="run a parameter sweep")
    sweep.add_argument("spec", type=Path)
    return parser


def _grid(size: int | None) -> np.ndarray | None:
    if size is None:
        return None
    return np.linspace(0.0, 1.0, size) if size > 1 else np.array([0.0])


def _solve_csv(report: EquilibriumReport, verdict) -> str:
    opt, base = report.optimized, report.baseline
    records = [
        ("mode", report.mode),
        ("y_o", report.policy.y_o),
        ("y_p", report.policy.y_p),
        ("gamma", report.policy.gamma),
        ("profit", opt.profit.profit),
        ("baseline_profit", base.profit.profit),
        ("profit_gain", report.profit_gain),
        ("profit_gain_pct", report.profit_gain_pct),
        ("cost_method", opt.cost.method),
        ("cost_stderr", opt.cost.stderr),
        ("offpeak_load", opt.offpeak_load),
        ("peak_load", opt.peak_load),
        ("baseline_offpeak_load", base.offpeak_load),
        ("baseline_peak_load", base.peak_load),
        ("winwin", int(report.is_winwin)),
        ("closed_form_winwin", int(verdict.condition_holds)),
        ("closed_form_margin", verdict.margin),
        ("iterations", opt.iterations),
    ]
    for j, (mu, mu0, pct) in enumerate(zip(opt.payments, base.payments, report.savings_gain_pct)):
        records += [
            (f"payment_{j}", mu),
            (f"baseline_payment_{j}", mu0),
            (f"saving_gain_pct_{j}", pct),
        ]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("metric", "value"))
    for key, value in records:
        writer.writerow((key, f"{value:.10g}" if isinstance(value, float) else value))
    return buf.getvalue()


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _cmd_solve(args) -> int:
    if args.format == "plot":
        raise ScenarioError("--format plot applies to sweeps; solve writes csv")
    s = load_scenario(args.scenario)
    mode = args.mode or ("disconnected" if s.connectivity.is_disconnected else "connected")
    try:
        report = solve_stackelberg(
            s, mode, gamma_grid=_grid(args.gamma_grid), method=args.method or "auto",
            samples=args.mc_samples or 100_000, seed=0 if args.seed is None else args.seed,
            max_iter=args.max_iter,
        )
    except NonConvergenceError as exc:
        print(f"error: {exc} ({len(exc.trace)} profiles visited)", file=sys.stderr)
        return EXIT_NONCONVERGED
    scen = s.disconnected() if mode == "disconnected" else s
    verdict = winwin_disconnected(scen) if mode == "disconnected" else winwin_connected(scen)
    _emit(_solve_csv(report, verdict), args.out)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    spec = with_overrides(
        load_sweep_spec(args.spec),
        mode=args.mode,
        seed=args.seed,
        mc_samples=args.mc_samples,
        gamma_grid_size=args.gamma_grid,
        method=args.method,
    )
    rows = run_sweep(spec, max_iter=args.max_iter)
    text = format_csv(rows)
    if args.format == "plot":
        from .plotting import render_panels

        out = args.out or Path(args.spec.stem + ".csv")
        out.write_text(text)
        for path in render_panels(rows, out, spec.axis):
            print(path)
        print(out)
    else:
        _emit(text, args.out)
    failed = sum(not r.converged for r in rows)
    if failed:
        print(f"warning: {failed} sweep point(s) did not converge", file=sys.stderr)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "solve":
            return _cmd_solve(args)
        return _cmd_sweep(args)
    except (ValueError, OSError, yaml.YAMLError) as exc:
        # ScenarioError and JSON decoding errors are ValueErrors.
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
