"""Command-line entry point: one subcommand per experiment."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

from .config import EXPERIMENTS, ExperimentConfig
from .errors import CriticalClustersError, ValidationError


logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def _common() -> argparse.ArgumentParser:
	common = argparse.ArgumentParser(add_help=False)
	common.add_argument("-c", "--config", type=str, default=None, help="TOML experiment file.")
	common.add_argument("--seed", type=int, default=None, help="Override the master seed.")
	common.add_argument("-j", "--workers", type=int, default=None, help="Worker processes.")
	common.add_argument("-o", "--out", type=str, default=None, help="Directory that receives the run directory.")
	common.add_argument("-n", "--samples", dest="n_samples", type=int, default=None, help="Override the sample count.")
	common.add_argument("--log-level", type=str.upper, choices=LOG_LEVELS, default="INFO")
	return common


def build_parser() -> argparse.ArgumentParser:
	common = _common()
	parser = argparse.ArgumentParser(
		prog="critical-clusters",
		description="Monte Carlo experiments on critical percolation and FK-Ising clusters.",
	)
	sub = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
	for name in EXPERIMENTS:
		sub.add_parser(name, parents=[common], help=f"run the {name} experiment")
	return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
	if args.config:
		cfg = ExperimentConfig.load(args.config)
		if cfg.experiment != args.experiment:
			logger.warning("config names experiment %r; running %r", cfg.experiment, args.experiment)
	else:
		cfg = ExperimentConfig(args.experiment)
	return cfg.with_overrides(
		experiment=args.experiment,
		seed=args.seed,
		workers=args.workers,
		out=args.out,
		n_samples=args.n_samples,
	)


def main(argv: Optional[List[str]] = None) -> int:
	args = build_parser().parse_args(argv)
	logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT)
	from .harness import run

	try:
		report = run(resolve_config(args))
	except ValidationError as exc:
		for problem in exc.problems:
			logger.error("invalid configuration: %s", problem)
		return exc.exit_code
	except CriticalClustersError as exc:
		logger.error("%s: %s", type(exc).__name__, exc)
		return exc.exit_code
	failed = [name for name, result in report.acceptance.items() if isinstance(result, dict) and result.get("passed") is False]
	for name in failed:
		logger.warning("acceptance check %s did not pass", name)
	print(f"saved: {report.out_dir.resolve()}")
	print(f"files: {len(report.files)}")
	return 0


if __name__ == "__main__":
	sys.exit(main())
