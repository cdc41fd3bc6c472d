"""
refine: h-refinement study over the configured step list.
"""

from pathlib import Path

from GameSolver.commands.common import CommandResult
from GameSolver.models.run import RunConfig
from GameSolver.services.catalog_service import CatalogService
from GameSolver.services.export_service import ExportService
from GameSolver.services.solver_service import SolverService
from GameSolver.utils.errors import ConfigurationError
from GameSolver.utils.logger import get_logger

logger = get_logger(__name__)


def run(config: RunConfig, directory: Path) -> CommandResult:
    if config.refinement is None or config.problem is None:
        raise ConfigurationError("refine needs the problem, grid and refinement sections", keys=["refinement"])
    problem = CatalogService.build_problem(config.problem)
    refinement = config.refinement
    report = SolverService.refinement_study(
        problem, config.grid, refinement.h_list, config.solver,
        reference_state=refinement.reference_state, reference_value=refinement.reference_value,
    )
    outputs = ExportService.write_refinement(report, directory)

    warnings = []
    if not report.trend_decreasing:
        warnings.append("Refinement errors do not decrease with h")
    warnings += [f"Bound audit failed at h = {row.h}" for row in report.rows if not row.bound_ok]
    logger.info(f"refine finished over {len(report.rows)} step(s)")
    return CommandResult(
        outputs=outputs,
        warnings=warnings,
        problem=problem.summary(),
        grid=config.grid.model_dump(mode="json"),
    )
