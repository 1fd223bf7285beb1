#!/usr/bin/env python3
"""stowave v0.1 - CLI Entry Point

Usage:
    python -m stowave simulate --config run.json             # Raw ensemble of F_R(t)
    python -m stowave clt-scan --config run.json             # W1 / Kolmogorov per radius
    python -m stowave variance-scan --config run.json        # Var F_R(T) scaling fit
    python -m stowave covariance-limit --config run.json     # Normalized covariance vs limit
    python -m stowave picard-check --config run.json         # Picard iterates vs trig scheme
    python -m stowave tightness-scan --config run.json       # Increment moments
    python -m stowave oracle --config run.json               # Quadrature targets only
    python -m stowave report --config run.json               # Verify and print a finished run

Flags override config fields: --seed, --paths, --out, --threads.
Exit code: 0 all checks pass, 2 a check failed, 1 execution error.
"""

import argparse
import logging
import sys

from .config import ConfigError, ExperimentConfig
from .kernels import KernelDomainError
from .oracle import OracleInputError, QuadratureDivergence
from .persistence import ChecksumMismatch
from .runner import ExperimentError, RunOutcome, execute, report
from .stats import DegenerateEnsemble, FitError, LagError

logger = logging.getLogger("stowave.cli")

# Subcommand → experiment kind
COMMANDS = {
    "simulate": "simulate",
    "clt-scan": "clt-scan",
    "variance-scan": "variance-scan",
    "covariance-limit": "covariance-limit",
    "picard-check": "picard-check",
    "tightness-scan": "tightness-scan",
    "oracle": "oracle-only",
}

EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2

_RUN_ERRORS = (ConfigError, ExperimentError, KernelDomainError, QuadratureDivergence, OracleInputError,
               DegenerateEnsemble, FitError, LagError, ChecksumMismatch, OSError)


def load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.from_file(args.config)
    return config.with_overrides(
        seed=args.seed,
        paths=args.paths,
        output_dir=args.out,
        threads=args.threads,
        dump_multipliers=True if getattr(args, "dump_multipliers", False) else None,
    )


def print_summary(summary: dict, title: str):
    print(f"\n{'─' * 50}")
    print(f"  stowave {title}")
    print(f"  Kind:   {summary.get('kind')}")
    print(f"  Config: {summary.get('config_hash', '')[:12]}  seed={summary.get('seed')}")
    print(f"{'─' * 50}\n")
    checks = summary.get("checks", [])
    if not checks:
        print("  (no checks for this kind)")
    for c in checks:
        mark = "✓" if c["passed"] else "✗"
        line = f"  {mark} {c['name']}: {c['value']:.6g} (threshold {c['threshold']:.6g})"
        if c.get("detail"):
            line += f"  {c['detail']}"
        print(line)
    verdict = "PASS" if summary.get("passed") else "FAIL"
    print(f"\n{'─' * 50}")
    print(f"  Verdict: {verdict}")


def cmd_experiment(args):
    kind = COMMANDS[args.command]
    try:
        config = load_config(args)
        if config.kind != kind:
            logger.info(f"Config kind {config.kind!r} replaced by subcommand {args.command!r}")
            config = config.with_overrides(kind=kind)
        outcome: RunOutcome = execute(config)
    except _RUN_ERRORS as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(EXIT_ERROR)
    print_summary(outcome.summary, "Experiment Results")
    print(f"  Output: {config.output_dir}\n")
    if not outcome.passed:
        sys.exit(EXIT_FAILED)


def cmd_report(args):
    try:
        config = load_config(args)
        summary = report(config.output_dir)
    except _RUN_ERRORS as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(EXIT_ERROR)
    print_summary(summary, "Run Report")
    print(f"  Checksums verified in {config.output_dir}\n")
    if not summary.get("passed"):
        sys.exit(EXIT_FAILED)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", required=True, help="Path to the experiment JSON file")
    p.add_argument("--seed", type=int, default=None, help="Master seed (unsigned 64-bit)")
    p.add_argument("--paths", type=int, default=None, help="Number of Monte Carlo paths")
    p.add_argument("--out", default=None, help="Output directory")
    p.add_argument("--threads", type=int, default=None, help="Worker threads (0 = all cores)")
    level = p.add_mutually_exclusive_group()
    level.add_argument("--verbose", action="store_true", help="Log at DEBUG level")
    level.add_argument("--quiet", action="store_true", help="Log warnings only")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stowave",
        description="stowave v0.1 - 3D stochastic wave equation and Gaussian fluctuations",
    )
    sub = parser.add_subparsers(dest="command")

    _add_common(sub.add_parser("simulate", help="Simulate an ensemble of spatial averages"))
    _add_common(sub.add_parser("clt-scan", help="Distance to N(0,1) along the radius ladder"))
    _add_common(sub.add_parser("variance-scan", help="Variance growth exponent of F_R(T)"))
    _add_common(sub.add_parser("covariance-limit", help="Normalized covariance against the limit"))
    _add_common(sub.add_parser("picard-check", help="Picard iterate convergence on fixed noise"))
    _add_common(sub.add_parser("tightness-scan", help="Increment moments of t ↦ F_R(t)"))

    oracle_p = sub.add_parser("oracle", help="Deterministic quadrature targets (no Monte Carlo)")
    _add_common(oracle_p)
    oracle_p.add_argument("--dump-multipliers", action="store_true",
                          help="Write FG, Fρ_n and FG_n tables to multipliers.csv")

    _add_common(sub.add_parser("report", help="Verify a run directory and print its summary"))
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        sys.exit(EXIT_ERROR)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s [%(name)s] %(message)s")

    if args.command == "report":
        cmd_report(args)
    else:
        cmd_experiment(args)


if __name__ == "__main__":
    main()
