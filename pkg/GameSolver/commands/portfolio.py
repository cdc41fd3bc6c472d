"""
portfolio: solve the portfolio game and report the worst-case strategy.
"""

from pathlib import Path

from GameSolver.commands.common import CommandResult, write_solve_outputs
from GameSolver.models.run import RunConfig
from GameSolver.services.export_service import ExportService
from GameSolver.services.portfolio_service import PortfolioService
from GameSolver.utils.errors import ConfigurationError
from GameSolver.utils.logger import get_logger

logger = get_logger(__name__)


def run(config: RunConfig, directory: Path) -> CommandResult:
    if config.portfolio is None:
        raise ConfigurationError("portfolio needs the portfolio section", keys=["portfolio"])
    section = config.portfolio
    problem = PortfolioService.build_portfolio_game(section.problem, config.solver.h, section.wealth.lo)
    report, strategy = PortfolioService.solve_portfolio(
        section.problem, section.grid_spec(), config.solver, config.extraction
    )
    outputs = write_solve_outputs(config, problem, report, directory)
    outputs += ExportService.write_portfolio(strategy, directory)

    warnings = list(report.warnings)
    if strategy.truncated:
        warnings.append(f"Portfolio path truncated: {strategy.diagnostic}")
    logger.info(f"portfolio finished: worst-case value {strategy.worst_case_value:.10g}")
    return CommandResult(
        outputs=outputs,
        warnings=warnings,
        problem=problem.summary(),
        grid=report.value_field.grid.describe(),
    )
