"""
solve: backward sweep and the value-field outputs.
"""

from pathlib import Path

from GameSolver.commands.common import CommandResult, solve_game, write_assumptions, write_solve_outputs
from GameSolver.models.run import RunConfig
from GameSolver.utils.logger import get_logger

logger = get_logger(__name__)


def run(config: RunConfig, directory: Path) -> CommandResult:
    problem, grid, report = solve_game(config)
    assumptions, warnings = write_assumptions(problem, grid, directory)
    outputs = write_solve_outputs(config, problem, report, directory) + [assumptions]
    logger.info(f"solve finished with residual {report.residual_norm:.3e}")
    return CommandResult(
        outputs=outputs,
        warnings=report.warnings + warnings,
        problem=problem.summary(),
        grid=grid.describe(),
    )
