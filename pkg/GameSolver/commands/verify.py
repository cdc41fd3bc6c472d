"""
verify: solve, extract and audit the equilibrium with seeded unilateral deviations.
"""

from pathlib import Path

from GameSolver.commands.common import CommandResult, solve_game, start_state, write_solve_outputs
from GameSolver.models.run import RunConfig
from GameSolver.services.export_service import ExportService
from GameSolver.services.nash_service import NashService
from GameSolver.utils.logger import get_logger

logger = get_logger(__name__)


def run(config: RunConfig, directory: Path) -> CommandResult:
    problem, grid, report = solve_game(config)
    verification = config.verification
    if verification.seed is None:
        verification = verification.model_copy(update={"seed": config.seed})
    ne_report = NashService.verify_equilibrium(
        problem, grid, report, start_state(config, grid), config.solver, verification, config.extraction
    )
    outputs = write_solve_outputs(config, problem, report, directory)
    outputs.append(ExportService.write_ne_report(ne_report, directory))

    warnings = list(report.warnings)
    if not ne_report.passed:
        warnings.append(
            f"Equilibrium audit failed: gap {ne_report.equilibrium_gap}, {ne_report.violations} violation(s)"
        )
    logger.info(f"verify finished: {'passed' if ne_report.passed else 'failed'}")
    return CommandResult(outputs=outputs, warnings=warnings, problem=problem.summary(), grid=grid.describe())
