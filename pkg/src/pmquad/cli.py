"""Command line entry point: ``python -m pmquad --experiment theorem1 ...``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiments import EXPERIMENTS, ConfigError, ExperimentConfig, run

EXIT_OK, EXIT_CONFIG, EXIT_CHECK = 0, 2, 3


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pmquad", description=__doc__)
    p.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    p.add_argument("--seed", type=_seed, default=2026)
    p.add_argument("--replicas", type=int, default=1000)
    p.add_argument("--sizes", type=_float_list, default=(), help="n or t values, comma separated")
    p.add_argument("--x", type=_float_list, default=(), dest="x_values", help="query abscissas")
    p.add_argument("--out", type=Path, default=None, help="directory for CSV and summary.json")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--check", action="store_true", help="exit 3 when the acceptance threshold fails")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    sizes = tuple(int(s) if float(s).is_integer() else s for s in args.sizes)
    try:
        cfg = ExperimentConfig(args.experiment, args.seed, args.replicas, sizes, args.x_values,
                               args.out, args.workers)
        report = run(cfg, with_check=args.check)
    except ConfigError as exc:
        print(f"pmquad: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(report.table())
    if args.check:
        print("check:", "pass" if report.passed else "FAIL")
        if not report.passed:
            return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
