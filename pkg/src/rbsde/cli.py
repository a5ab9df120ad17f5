"""Command-line front end: parse flags, load the config, run the experiment.

Exit codes: 0 all checks pass, 1 validation failure (unparseable config or a
violated standing assumption), 2 at least one qualitative check failed.
"""
from __future__ import annotations

import argparse
import sys

from .config import ConfigError, apply_overrides, load_config
from .presets import list_presets
from .runner import EXIT_VALIDATION, run_experiment


def _parse_levels(text):
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must be a comma-separated "
                                         f"number list, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("levels list is empty")
    return values


def _parse_seed(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}")
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rbsde",
        description="Constrained backward solver: run a configured experiment, "
                    "then write summary tables and check the solution properties.",
        epilog=f"shipped presets: {', '.join(list_presets())}")
    parser.add_argument("--config", required=True, metavar="PATH",
                        help="experiment description (TOML)")
    parser.add_argument("--out", metavar="DIR",
                        help="output directory (overrides the config)")
    parser.add_argument("--seed", type=_parse_seed, metavar="U64",
                        help="sampling seed (overrides the config)")
    parser.add_argument("--levels", type=_parse_levels, metavar="N1,N2,...",
                        help="penalty ladder (overrides the config)")
    parser.add_argument("--mode", choices=("tree", "mc"),
                        help="scenario mode (overrides the config)")
    parser.add_argument("--workers", type=int, metavar="N",
                        help="sampling threads in mc mode (overrides the config)")
    parser.add_argument("--quiet", action="store_true",
                        help="suppress console output; artifacts are still written")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg = apply_overrides(cfg, seed=args.seed, levels=args.levels,
                              mode=args.mode, out=args.out, workers=args.workers)
    except OSError as exc:
        if not args.quiet:
            print(f"validation error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConfigError as exc:
        if not args.quiet:
            print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return run_experiment(cfg, quiet=args.quiet)


if __name__ == "__main__":
    sys.exit(main())
