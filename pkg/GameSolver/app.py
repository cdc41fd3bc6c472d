"""
Main command-line entry point
Sets up logging and tracing, loads the run config and dispatches to the command handlers

Usage:
    python -m GameSolver.app solve --config GameSolver/benchmarks/zero_model.json
"""
import argparse
import sys
import time
import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional

from GameSolver.utils.logger import LogContext, get_logger, setup_logging
from GameSolver.utils.tracing import create_span, get_trace_context, set_span_error, setup_tracing

from GameSolver.commands import HANDLERS
from GameSolver.config import COMMANDS, TOOL_VERSION, config_checksum, load_config_document, load_run_config
from GameSolver.models.run import RunManifest
from GameSolver.services.export_service import ExportService
from GameSolver.utils.errors import ConfigurationError, OutOfDomainError

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="GameSolver",
        description="Grid solver for zero-sum differential games with impulse controls",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON run config")
    parser.add_argument("--h", type=float, help="time step")
    parser.add_argument("--tol", type=float, help="fixed-point and policy tolerance")
    parser.add_argument("--max-iter", type=int, dest="max_iter", help="iteration cap per loop")
    parser.add_argument("--output-dir", dest="output_dir", help="output directory")
    parser.add_argument("--emit-plots", dest="emit_plots", action="store_true", default=None,
                        help="write plot-ready long-format CSVs")
    parser.add_argument("--strict", action="store_true", help="exit 2 when the run produced warnings")
    parser.add_argument("--boundary", choices=["error", "clamp"], help="boundary policy of the space grid")
    parser.add_argument("--seed", type=int, help="seed of the deviation generator")
    return parser


def overrides_from_args(args: argparse.Namespace, document: Dict[str, Any]) -> Dict[str, Any]:
    """Map command-line flags onto dotted config keys; unset flags map to None."""
    overrides = {
        "solver.h": args.h,
        "solver.tolerance": args.tol,
        "solver.max_iterations": args.max_iter,
        "output.directory": args.output_dir,
        "output.emit_plots": args.emit_plots,
        "seed": args.seed,
        "verification.seed": args.seed,
    }
    if args.boundary is not None:
        if "grid" in document:
            overrides["grid.boundary_policy"] = args.boundary
        if "portfolio" in document:
            overrides["portfolio.boundary_policy"] = args.boundary
    return overrides


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat()


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one command.

    Returns:
        0 on success, 1 on configuration errors, 2 on out-of-domain aborts or, with --strict,
        when the run produced warnings
    """
    args = build_parser().parse_args(argv)

    # Initialize logging BEFORE anything else
    setup_logging()
    setup_tracing(service_name="GameSolver")

    run_id = uuid.uuid4().hex[:12]
    with LogContext(run_id=run_id, command=args.command):
        started_at, started = _timestamp(), time.perf_counter()
        logger.info(f"Starting {args.command} with config {args.config}")
        try:
            document = load_config_document(args.config)
            config = load_run_config(args.config, overrides_from_args(args, document))
            directory = Path(config.output.directory)
            directory.mkdir(parents=True, exist_ok=True)
            with create_span(f"command.{args.command}", {"config": str(args.config), "run_id": run_id}):
                try:
                    result = HANDLERS[args.command](config, directory)
                except Exception as e:
                    set_span_error(e)
                    raise
                trace_context = get_trace_context()
        except ConfigurationError as e:
            logger.error(f"Configuration error: {e}", extra={'custom_dimensions': {'keys': e.keys}})
            return EXIT_CONFIG
        except OutOfDomainError as e:
            logger.error(f"Aborted: {e}")
            return EXIT_SOLVER

        for warning in result.warnings:
            logger.warning(warning)

        manifest = RunManifest(
            tool_version=TOOL_VERSION,
            command=args.command,
            config_path=str(args.config),
            config_checksum=config_checksum(args.config),
            problem=result.problem,
            grid=result.grid,
            solver=config.solver.model_dump(),
            seed=config.seed,
            outputs=ExportService.relative(result.outputs, directory),
            warnings=result.warnings,
            started_at=started_at,
            finished_at=_timestamp(),
            wall_time_seconds=time.perf_counter() - started,
            trace=trace_context,
        )
        ExportService.write_manifest(manifest, directory)
        logger.info(
            f"{args.command} finished: {len(manifest.outputs)} output(s), {len(result.warnings)} warning(s)",
            extra={'custom_dimensions': {'output_dir': str(directory)}},
        )

        if args.strict and result.warnings:
            return EXIT_SOLVER
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
