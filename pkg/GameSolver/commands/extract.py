"""
extract: solve, then read the equilibrium strategy and path off the value field.
"""

from pathlib import Path

from GameSolver.commands.common import CommandResult, solve_game, start_state, write_solve_outputs
from GameSolver.models.run import RunConfig
from GameSolver.services.export_service import ExportService
from GameSolver.services.game_service import GameService
from GameSolver.services.nash_service import NashService
from GameSolver.utils.logger import get_logger

logger = get_logger(__name__)


def run(config: RunConfig, directory: Path) -> CommandResult:
    problem, grid, report = solve_game(config)
    strategy, record = NashService.extract_equilibrium(
        problem, grid, report, start_state(config, grid), config.solver, config.extraction
    )
    outputs = write_solve_outputs(config, problem, report, directory, record)
    outputs += ExportService.write_strategy(strategy, record, directory)

    warnings = list(report.warnings)
    if record.truncated:
        warnings.append(f"Equilibrium path truncated: {record.diagnostic}")
    else:
        bound = GameService.sampled_bounds(problem, grid)["dynamics"]
        check = GameService.trajectory_bound(problem, record, bound)
        outputs.append(ExportService.write_json(Path(directory) / "trajectory_bound.json", check.model_dump()))
        if not check.ok:
            warnings.append(f"Path exceeds the Euler trajectory bound by {check.max_excess:.3e}")
    logger.info(f"extract finished with payoff {record.payoff}")
    return CommandResult(outputs=outputs, warnings=warnings, problem=problem.summary(), grid=grid.describe())
