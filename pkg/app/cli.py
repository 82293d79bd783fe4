# Copyright (c) 2024. All rights reserved.
"""Command Line Interface for synchronization-rate experiments.

Each verb runs one experiment document of the matching kind:

    syncrate solve-obj1   --config config/experiments/obj1_budget_sweep.yaml
    syncrate train        --config config/experiments/routing_train.yaml --seeds 0-9
    syncrate rate-curve   --config config/experiments/routing_rate_curve.yaml
    syncrate bound-check  --config config/experiments/bound_check.yaml
    syncrate tradeoff     --config config/experiments/routing_tradeoff.yaml --workers 4

Exit codes: 0 on success, 1 if any cell failed, 2 on configuration errors.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from app.config import AppConfig, get_config, reload_config
from app.errors import InvalidArgumentError
from app.harness.experiments import ExperimentOutcome, ExperimentSpec, load_experiment, run_experiment
from app.logging_config import setup_logging
from app.metrics import configure_metrics, get_metrics_collector

# CLI logger
logger = logging.getLogger("syncrate.cli")

EXIT_OK = 0
EXIT_CELL_FAILED = 1
EXIT_CONFIG_ERROR = 2

VERB_KINDS = {
    "solve-obj1": "obj1-sweep",
    "train": "obj2-train",
    "rate-curve": "rate-curve",
    "bound-check": "bound-check",
    "tradeoff": "tradeoff-sweep",
}


def parse_seeds(text: str) -> list[int]:
    """Parse "1,2,5" or "0-9" (inclusive ranges may be mixed with single seeds)."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = (int(x) for x in part.split("-", 1))
            if hi < lo:
                raise argparse.ArgumentTypeError(f"empty seed range: {part}")
            seeds.extend(range(lo, hi + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise argparse.ArgumentTypeError("no seeds given")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="syncrate",
        description="Synchronization-rate policies for distributed SDN controllers",
    )
    subparsers = parser.add_subparsers(dest="verb", required=True)
    for verb, kind in VERB_KINDS.items():
        sub = subparsers.add_parser(verb, help=f"run a {kind} experiment")
        sub.add_argument("--config", required=True, help="experiment document (YAML)")
        sub.add_argument("--output", help="result table path (CSV)")
        sub.add_argument("--seeds", type=parse_seeds, help='seed list, e.g. "0-9" or "1,4,7"')
        sub.add_argument("--workers", type=int, help="parallel cells (processes)")
        sub.add_argument("--log-level", help="override the configured log level")
        sub.add_argument("--app-config", help="application config (defaults to config/config.yaml)")
    return parser


def resolve_output(spec: ExperimentSpec, settings: AppConfig, override: str | None) -> Path:
    if override:
        return Path(override)
    if spec.output:
        return Path(spec.output)
    return Path(settings.harness.output_dir) / f"{spec.name}.csv"


def write_outputs(outcome: ExperimentOutcome, output: Path) -> list[Path]:
    """Write the result table and, when present, the learner traces next to it."""
    written = [outcome.table.write_csv(output)]
    if outcome.traces:
        traces_path = output.with_suffix(".traces.json")
        traces_path.write_text(json.dumps(outcome.traces, indent=2, sort_keys=True), encoding="utf-8")
        logger.info(f"Wrote {len(outcome.traces)} learner traces to {traces_path}")
        written.append(traces_path)
    return written


def print_summary(outcome: ExperimentOutcome, written: list[Path]) -> None:
    """Print a short run summary."""
    table = outcome.table
    print("\n--- Experiment Summary ---")
    print(f"Rows: {len(table)}")
    print(f"Failed cells: {len(table.errors)}")
    for row in (r for r in table if r.cell == "summary"):
        dispersion = f" (+/- {row.dispersion:.6f})" if row.dispersion is not None else ""
        value = "n/a" if row.value is None else f"{row.value:.6f}"
        print(f"{row.metric}: {value}{dispersion}")
    for path in written:
        print(f"Wrote: {path}")
    print("-" * 26 + "\n")


def run(args: argparse.Namespace) -> int:
    """Run the experiment named by parsed CLI arguments."""
    settings = reload_config(args.app_config) if args.app_config else get_config()
    setup_logging(level=args.log_level or settings.logging.level, log_file=settings.logging.file)
    configure_metrics(metrics_dir=settings.metrics.directory, enabled=settings.metrics.enabled)
    logger.info(f"syncrate {args.verb} starting: {args.config}")

    try:
        spec = load_experiment(args.config)
        if args.seeds:
            spec = ExperimentSpec(**{**spec.model_dump(), "seeds": args.seeds})
        expected = VERB_KINDS[args.verb]
        if spec.kind != expected:
            raise InvalidArgumentError(f"'{args.verb}' runs {expected} experiments, document is {spec.kind}")
        workers = args.workers or settings.harness.workers
        outcome = run_experiment(spec, workers=workers, settings=settings)
    except (OSError, ValueError, yaml.YAMLError) as e:
        logger.error(f"Configuration error: {e}")
        print(f"\nConfiguration error: {e}\n", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    try:
        written = write_outputs(outcome, resolve_output(spec, settings, args.output))
    except OSError as e:
        logger.error(f"Cannot write results: {e}")
        print(f"\nConfiguration error: {e}\n", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    print_summary(outcome, written)

    # Save session metrics on shutdown
    metrics_file = get_metrics_collector().save_session()
    if metrics_file:
        print(f"Session metrics saved to: {metrics_file}")

    logger.info("CLI shutdown complete")
    return EXIT_CELL_FAILED if outcome.table.has_errors else EXIT_OK


def main(argv: list[str] | None = None) -> int:
    """Main entry point for CLI."""
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except KeyboardInterrupt:
        print("\nInterrupted.")
        return 130


if __name__ == "__main__":
    sys.exit(main())
