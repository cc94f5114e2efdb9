"""Command-line entry point.

Usage: dinidrift <experiment-kind> --config PATH [--set section.key=value]...
       [--threads N] [--output-dir DIR]

The subcommand must match the kind inside the config (the flag form keeps
shell history self-describing).  Exit codes: 0 success, 2 configuration
error, 3 numeric failure (divergent integral, no contraction, calibration
target unreached), 4 I/O error.  DINIDRIFT_OUTDIR sets the default base
output directory.
"""

from __future__ import annotations

import argparse
import sys

from ..errors import (ConfigError, DomainError, GridTooCoarse, NoContraction,
                      NoConvergence, NonFinite, NotReached, ParseError,
                      SmoothnessRequired, ValidationError)
from .config import KINDS, apply_overrides, parse_config
from .runner import run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

_NUMERIC_ERRORS = (NonFinite, NoContraction, NoConvergence, NotReached,
                   GridTooCoarse, SmoothnessRequired)
_CONFIG_ERRORS = (ParseError, ValidationError, ConfigError, DomainError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dinidrift",
        description="Stochastic flows and transport with rough bounded drift: "
                    "experiment runner")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind, help=f"run a {kind} experiment")
        sp.add_argument("--config", required=True, help="path to the INI config")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (section.key=value); repeatable")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker cap; never affects results")
        sp.add_argument("--output-dir", default=None,
                        help="base output directory (default: $DINIDRIFT_OUTDIR or .)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = open(args.config).read()
    except OSError as e:
        print(f"error: cannot read config: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        if args.set:
            text = apply_overrides(text, args.set)
        cfg = parse_config(text)
        if cfg.kind != args.kind:
            print(f"error: config kind {cfg.kind!r} does not match "
                  f"subcommand {args.kind!r}", file=sys.stderr)
            return EXIT_CONFIG
    except _CONFIG_ERRORS as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run_experiment(cfg, threads=max(1, args.threads),
                                base_dir=args.output_dir)
    except _CONFIG_ERRORS as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERIC_ERRORS as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    for name in result.files:
        print(f"{result.out_dir}/{name}")
    if result.status != 0:
        print("numeric failure: see summary artifacts", file=sys.stderr)
    return result.status


if __name__ == "__main__":
    sys.exit(main())
