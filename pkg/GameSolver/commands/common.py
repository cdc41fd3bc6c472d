"""
Shared plumbing of the batch commands: building the game, solving, writing the standard outputs.
"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from GameSolver.models.game import GameProblem
from GameSolver.models.grid import TimeSpaceGrid
from GameSolver.models.run import RunConfig
from GameSolver.models.solver import SolveReport
from GameSolver.models.strategy import TrajectoryRecord
from GameSolver.services.catalog_service import CatalogService
from GameSolver.services.export_service import ExportService
from GameSolver.services.game_service import GameService
from GameSolver.services.grid_service import GridService
from GameSolver.services.solver_service import SolverService
from GameSolver.utils.errors import ConfigurationError
from GameSolver.utils.logger import get_logger

logger = get_logger(__name__)


class CommandResult(BaseModel):
    """What a command hands back to the entry point for the manifest."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    outputs: List[Path] = Field(default_factory=list)
    warnings: List[str] = Field(default_factory=list)
    problem: Dict[str, Any] = Field(default_factory=dict)
    grid: Optional[Dict[str, Any]] = None


def build_game(config: RunConfig) -> Tuple[GameProblem, TimeSpaceGrid]:
    """
    Build the catalog problem and its grid from the [problem] and [grid] sections.

    Raises:
        ConfigurationError: If the config has no [problem] section
    """
    if config.problem is None or config.grid is None:
        raise ConfigurationError("This command needs the problem and grid sections", keys=["problem", "grid"])
    problem = CatalogService.build_problem(config.problem)
    grid = GridService.build_from_spec(problem.horizon, config.solver.h, config.grid)
    return problem, grid


def solve_game(config: RunConfig) -> Tuple[GameProblem, TimeSpaceGrid, SolveReport]:
    problem, grid = build_game(config)
    return problem, grid, SolverService.backward_sweep(problem, grid, config.solver)


def start_state(config: RunConfig, grid: TimeSpaceGrid) -> List[float]:
    """Configured start state, or the centre of the space box."""
    if config.extraction.start_state is not None:
        return list(config.extraction.start_state)
    return ((grid.lower + grid.upper) / 2.0).tolist()


def write_assumptions(problem: GameProblem, grid: TimeSpaceGrid, directory: Path) -> Tuple[Path, List[str]]:
    """Assumption audit on the solve grid; violations become warnings."""
    report = GameService.validate_assumptions(problem, grid)
    path = ExportService.write_json(Path(directory) / "assumptions.json", report.model_dump())
    warnings = [f"Assumption {v.assumption} violated: {v.message}" for v in report.violations]
    return path, warnings


def write_solve_outputs(
    config: RunConfig,
    problem: GameProblem,
    report: SolveReport,
    directory: Path,
    record: Optional[TrajectoryRecord] = None,
) -> List[Path]:
    """Value field, candidates, solve report, residuals and the optional plot outputs."""
    metadata = ExportService.value_field_metadata(report, problem)
    metadata["seed"] = config.seed
    paths = ExportService.write_value_field(report.value_field, directory, metadata)
    paths.append(ExportService.write_candidates(report, directory))
    paths.append(ExportService.write_solve_report(report, directory))
    paths.append(ExportService.write_residuals(problem, report, directory))
    if config.solver.record_convergence:
        paths.append(ExportService.write_convergence(report, directory))
    if config.output.emit_plots:
        paths.extend(ExportService.write_plot_data(problem, report, directory, record))
    if config.output.render_images:
        paths.extend(ExportService.render_images(problem, report, directory, record))
    logger.info(f"Wrote {len(paths)} solve output(s) to {directory}")
    return paths

