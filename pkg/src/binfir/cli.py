"""Command line entry point.

    binfir simulate --config PATH [--algorithm A] [--seed S] [--horizon T] [--out DIR]
    binfir variance --config PATH --replicas R [--jobs W] --out DIR

Exit codes: 0 success, 2 invalid config or unsupported combination,
3 protocol violation, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import harness
from .exceptions import BinFIRError

log = logging.getLogger("binfir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="binfir", description="FIR identification from binary observations")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one experiment and write its trace")
    sim.add_argument("--config", required=True)
    sim.add_argument("--algorithm", choices=harness.ALGORITHMS)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--horizon", type=int)
    sim.add_argument("--out", help=f"output directory (default ${harness.OUT_ENV} or ./out)")
    sim.add_argument("--dump-channel", action="store_true", help="also write channel.csv")
    sim.add_argument("--dump-signals", action="store_true", help="also write signals.csv")

    var = sub.add_parser("variance", help="Monte Carlo normalized-variance study")
    var.add_argument("--config", required=True)
    var.add_argument("--algorithm", choices=harness.ALGORITHMS)
    var.add_argument("--seed", type=int)
    var.add_argument("--horizon", type=int)
    var.add_argument("--replicas", type=int)
    var.add_argument("--paper-scale", action="store_true",
                     help=f"use {harness.PAPER_REPLICAS} replicas unless --replicas is given")
    var.add_argument("--jobs", type=int, default=1)
    var.add_argument("--out", help=f"output directory (default ${harness.OUT_ENV} or ./out)")
    return parser


def _config(args) -> harness.ExperimentConfig:
    config = harness.load_config(args.config)
    replicas = getattr(args, "replicas", None)
    if replicas is None and getattr(args, "paper_scale", False):
        replicas = harness.PAPER_REPLICAS
    return config.with_overrides(algorithm=args.algorithm, seed=args.seed, horizon=args.horizon,
                                 replicas=replicas)


def _simulate(args) -> int:
    config = _config(args)
    out = args.out or harness.default_out_dir()
    trace = harness.run_experiment(config)
    paths = harness.emit_outputs(trace, out, config)
    if args.dump_channel:
        harness.dump_channel(trace, out)
    if args.dump_signals:
        harness.dump_signals(config, trace, out)
    log.info("wrote %s and %s", paths["csv"], paths["summary"])
    return 0


def _variance(args) -> int:
    config = _config(args)
    out = args.out or harness.default_out_dir()
    curve = harness.monte_carlo_variance(config, jobs=args.jobs)
    paths = harness.emit_outputs(curve, out, config)
    log.info("wrote %s and %s", paths["csv"], paths["summary"])
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "simulate":
            return _simulate(args)
        return _variance(args)
    except BinFIRError as exc:
        print(f"binfir: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
