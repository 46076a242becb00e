"""Command line entry point: ``evidence-lab {run,validate,oracle}``."""

from __future__ import annotations

import argparse
import sys

from .consistency import pvalue_limit
from .exceptions import ConfigError, DomainError
from .experiment import EXIT_OK, EXIT_VALIDATION, load_config, resolve_seed, run_experiment


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="evidence-lab",
        description="Monte Carlo consistency experiments for measures of statistical evidence.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write CSV/manifest/verdict")
    run.add_argument("--config", required=True, help="configuration document or run manifest (.json)")
    run.add_argument("--seed", type=int, default=None, help="master seed (overrides config and env)")
    run.add_argument("--out-dir", default=None, help="output directory (overrides output.dir)")
    run.add_argument("--strict", action="store_true", help="exit 4 when any verdict is inconclusive")
    run.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")

    val = sub.add_parser("validate", help="validate a configuration document")
    val.add_argument("--config", required=True)

    orc = sub.add_parser("oracle", help="print the large-n p-value limit alpha_S*w/(1-w(1-alpha_S))")
    orc.add_argument("--alpha-s", type=float, required=True)
    orc.add_argument("--w", type=float, required=True)
    return parser


def _load(path):
    try:
        return load_config(path)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
    return None


def main(argv=None):
    args = _build_parser().parse_args(argv)

    if args.command == "oracle":
        try:
            print(f"{pvalue_limit(args.alpha_s, args.w):.10g}")
        except DomainError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        return EXIT_OK

    config = _load(args.config)
    if config is None:
        return EXIT_VALIDATION
    if args.command == "validate":
        print("valid")
        return EXIT_OK

    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        config = resolve_seed(config, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if not 0 <= config.master_seed < 2**64:
        print("config error: seed must be a 64-bit unsigned integer", file=sys.stderr)
        return EXIT_VALIDATION
    config = config.with_overrides(out_dir=args.out_dir)
    status = run_experiment(config, workers=args.workers, strict=args.strict)
    print(f"wrote {config.output_path('manifest').parent} (exit {status})")
    return status


if __name__ == "__main__":
    sys.exit(main())
