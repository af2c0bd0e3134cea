"""Command-line entry point: ``retro-opt {run,check,aggregate,sweep}``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .experiment import run_experiment, self_check, sweep
from .traces import aggregate_dir


def _parse_param(text: str) -> tuple[str, list[str]]:
    key, sep, values = text.partition("=")
    if not sep or not key or not values:
        raise argparse.ArgumentTypeError(f"expected key=v1,v2,... got {text!r}")
    return key, values.split(",")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="retro-opt", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run all replications of an experiment")
    run.add_argument("config")
    run.add_argument("--output-dir", default=None)

    check = sub.add_parser("check", help="gradient, schedule and tolerance self-checks")
    check.add_argument("config")

    agg = sub.add_parser("aggregate", help="(re)build aggregate.json from trace files")
    agg.add_argument("directory")

    sw = sub.add_parser("sweep", help="run one experiment per parameter value")
    sw.add_argument("config")
    sw.add_argument("--param", required=True, type=_parse_param, help="dotted.key=v1,v2,...")
    sw.add_argument("--output-dir", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "run":
            res = run_experiment(load_config(args.config), args.output_dir)
            print(f"wrote {len(res.traces)} trace(s) to {res.output_dir}")
            return 1 if res.failures else 0
        if args.command == "check":
            report = self_check(load_config(args.config))
            print(report.format())
            return 0 if report.passed else 1
        if args.command == "aggregate":
            aggregate_dir(args.directory)
            print(f"wrote {args.directory}/aggregate.json")
            return 0
        key, values = args.param
        results = sweep(load_config(args.config), key, values, args.output_dir)
        for label, res in results.items():
            print(f"{label}: {len(res.traces)} trace(s) in {res.output_dir}")
        return 1 if any(r.failures for r in results.values()) else 0
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
