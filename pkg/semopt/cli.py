"""Command-line interface for semopt."""

from __future__ import annotations

import argparse
import asyncio
import json
import os
import sys
from pathlib import Path
from typing import Sequence

from loguru import logger
from pydantic import ValidationError

from semopt.config.loader import get_config_path, load_config
from semopt.config.schema import Config
from semopt.core.datasources import DataSourceDescriptor, DataSourceRegistry
from semopt.core.schemas import SchemaRegistry
from semopt.cost.policy import parse_policy
from semopt.errors import SemoptError
from semopt.executor.optimizer import Optimizer
from semopt.planner.pipeline import load_pipeline

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONSTRAINT_UNMET = 2


def _positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return n


def _fraction(value: str) -> float:
    x = float(value)
    if not 0 < x <= 1:
        raise argparse.ArgumentTypeError(f"expected a fraction in (0, 1], got {value}")
    return x


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="Config file path")
    common.add_argument("--registry", type=Path, default=None, help="Datasource registry path")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")

    optimize = argparse.ArgumentParser(add_help=False)
    optimize.add_argument("--pipeline", type=Path, required=True, help="Pipeline JSON file")
    optimize.add_argument(
        "--policy",
        default="min-cost-at-quality=0.8",
        help="max-quality-at-cost=<usd> | max-quality-at-runtime=<s> | min-cost-at-quality=<q>",
    )
    optimize.add_argument("--sample-fraction", type=_fraction, default=None)
    optimize.add_argument("--workers", type=_positive_int, default=None)
    optimize.add_argument("--mode", choices=["serial", "parallel"], default=None)
    optimize.add_argument("--backend", choices=["mock", "http"], default=None)
    optimize.add_argument("--mock-table", type=Path, default=None, help="Mock answer table JSON")
    optimize.add_argument("--cache-dir", type=Path, default=None)
    optimize.add_argument("--no-cache", action="store_true", help="Disable the result cache")
    optimize.add_argument("--output", type=Path, default=None, help="Output file (default stdout)")
    optimize.add_argument("--report", type=Path, default=None, help="Write the JSON report here")

    parser = argparse.ArgumentParser(
        prog="semopt",
        description="Cost-based optimizer for semantic LLM pipelines",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Commands:
  register   Register a datasource
  run        Optimize a pipeline and execute the chosen plan
  explain    Optimize a pipeline and show the decision without executing it
  plans      Dump every candidate plan with its estimate
        """,
    )
    subparsers = parser.add_subparsers(dest="command", help="Command")

    register = subparsers.add_parser("register", parents=[common], help="Register a datasource")
    register.add_argument("--id", dest="dataset_id", required=True)
    register.add_argument(
        "--kind",
        choices=["directory-of-text-files", "directory-of-file-groups", "single-file"],
        default="directory-of-text-files",
    )
    register.add_argument("--location", required=True)
    register.add_argument("--schema", default="TextFile", help="Base schema")

    subparsers.add_parser("run", parents=[common, optimize], help="Optimize and run")
    subparsers.add_parser("explain", parents=[common, optimize], help="Explain plan choice")
    subparsers.add_parser("plans", parents=[common, optimize], help="Dump candidates")
    return parser


def _configure_logging(verbose: bool) -> None:
    logger.remove()
    level = "DEBUG" if verbose else os.environ.get("SEMOPT_LOG_LEVEL", "INFO")
    logger.add(sys.stderr, level=level)


def apply_overrides(config: Config, args: argparse.Namespace) -> Config:
    """Fold command-line flags into the loaded config."""
    if getattr(args, "registry", None):
        config.storage.registry_path = str(args.registry)
    if getattr(args, "sample_fraction", None) is not None:
        config.sampling.fraction = args.sample_fraction
    if getattr(args, "workers", None) is not None:
        config.execution.workers = args.workers
    if getattr(args, "mode", None):
        config.execution.mode = args.mode
    if getattr(args, "mock_table", None):
        config.backends.mock.table_path = str(args.mock_table)
    if getattr(args, "cache_dir", None):
        config.storage.cache_dir = str(args.cache_dir)
    if getattr(args, "no_cache", False):
        config.storage.cache_enabled = False
    backend = getattr(args, "backend", None)
    if backend:
        config.backends.mock.enabled = backend == "mock"
        config.backends.http.enabled = backend == "http"
        config.models = [m.model_copy(update={"backend": backend}) for m in config.models]
    return config


def _write_lines(lines: Sequence[str], path: Path | None) -> None:
    if path is None:
        for line in lines:
            print(line)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for line in lines:
            f.write(line + "\n")
    logger.info("Wrote {} lines to {}", len(lines), path)


def cmd_register(config: Config, args: argparse.Namespace) -> int:
    registry = DataSourceRegistry(config.registry_path, SchemaRegistry.with_builtins())
    registry.register(
        DataSourceDescriptor(
            dataset_id=args.dataset_id,
            kind=args.kind,
            location=str(Path(args.location).expanduser().resolve()),
            base_schema=args.schema,
        )
    )
    print(f"Registered {args.dataset_id}")
    return EXIT_OK


async def _optimize_command(config: Config, args: argparse.Namespace) -> int:
    description = load_pipeline(args.pipeline)
    policy = parse_policy(args.policy)
    optimizer = Optimizer(config)
    try:
        if args.command == "run":
            records, report = await optimizer.run(description, policy)
            _write_lines([r.to_json_line() for r in records], args.output)
            print(report.render_text(), file=sys.stderr)
        else:
            opt = await optimizer.optimize(description, policy)
            report = optimizer.report(opt)
            if args.command == "plans":
                _write_lines(
                    [c.model_dump_json(by_alias=True) for c in report.candidates], args.output
                )
            else:
                _write_lines([report.render_text()], args.output)
        if args.report:
            report.write(args.report)
    finally:
        await optimizer.stop()

    if args.command == "run" and not report.constraint_met:
        return EXIT_CONSTRAINT_UNMET
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return EXIT_ERROR
    _configure_logging(args.verbose)

    try:
        config = apply_overrides(load_config(args.config or get_config_path()), args)
        if args.command == "register":
            return cmd_register(config, args)
        return asyncio.run(_optimize_command(config, args))
    except (SemoptError, ValidationError, json.JSONDecodeError, OSError) as e:
        logger.error("{}", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as e:
        logger.exception("Unexpected failure: {}", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
