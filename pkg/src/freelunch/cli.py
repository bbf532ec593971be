"""Command-line entry point: ``freelunch {analytic,montecarlo,sweep,validate,plot}``.

Exit codes: 0 success, 1 validation failure, 2 configuration error,
3 numerical integrity error (quadrature, PSD or second-law guard).
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, RunConfig, load_config, parse_config
from .model import ParameterError
from .validate import CHECKS, NUMERICAL_ERRORS, run_validate

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _u64(text):
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="freelunch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("analytic", "analytic work statistics at one duration"),
                       ("montecarlo", "Monte Carlo ensemble compared against the analytic result"),
                       ("sweep", "sweep one variable and write results.csv")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", metavar="PATH", help="key = value configuration file")
        p.add_argument("--seed", type=_u64, help="master seed (overrides the config)")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
        p.add_argument("--svg", action="store_true", help="also write SVG figures")
    p = sub.add_parser("validate", help="run the built-in validation suite")
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--list", action="store_true", help="print check names and exit")
    p.add_argument("--inject-fault", action="store_true", help="double every analytic variance")
    p.add_argument("--check", action="append", metavar="NAME", help="run only the named check(s)")
    p = sub.add_parser("plot", help="regenerate SVG figures from the CSVs in a run directory")
    p.add_argument("--out", metavar="DIR", default="out")
    return parser


def _config(args) -> RunConfig:
    config = load_config(args.config) if args.config else parse_config("")
    changes = {"mode": args.command}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out"] = args.out
    if args.svg:
        changes["svg"] = True
    return config.replace(**changes)


def _print_row(row):
    for key, value in row.items():
        print(f"{key:16s} {value:.10e}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            if args.list:
                for name, c in CHECKS.items():
                    print(f"{name:40s} {c.kind:10s} {c.doc}")
                return EXIT_OK
            names = args.check
            unknown = [n for n in names or () if n not in CHECKS]
            if unknown:
                print(f"error: unknown check(s) {', '.join(unknown)}", file=sys.stderr)
                return EXIT_CONFIG
            code, _ = run_validate(args.seed, args.inject_fault, names)
            return code
        if args.command == "plot":
            from .plotting import plot_results
            for path in plot_results(args.out):
                print(path)
            return EXIT_OK

        config = _config(args)
        from . import sweep
        if args.command == "analytic":
            row, written = sweep.run_analytic(config)
            _print_row(row)
        elif args.command == "montecarlo":
            row, report, written = sweep.run_montecarlo(config)
            _print_row(row)
            print("\n".join(report.lines()))
        else:
            _, written = sweep.run_sweep(config)
        for path in written:
            print(f"wrote {path}")
        if args.command == "montecarlo" and not report.passed:
            return EXIT_FAIL
        return EXIT_OK
    except (ConfigError, ParameterError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
