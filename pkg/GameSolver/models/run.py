"""
Run config file schema and the run manifest.
"""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from GameSolver.config import DEFAULT_OUTPUT_DIR
from GameSolver.models.catalog import ProblemConfig
from GameSolver.models.grid import AxisSpec, BoundaryPolicy, GridSpec
from GameSolver.models.portfolio import PortfolioProblem
from GameSolver.models.solver import RefinementConfig, SolverConfig
from GameSolver.models.strategy import ExtractionConfig, VerificationConfig


class PortfolioSection(BaseModel):
    """[portfolio] section: the portfolio problem and its wealth grid."""
    model_config = ConfigDict(extra="forbid")

    problem: PortfolioProblem
    wealth: AxisSpec
    boundary_policy: BoundaryPolicy = BoundaryPolicy.ERROR

    def grid_spec(self) -> GridSpec:
        return GridSpec(space=[self.wealth], boundary_policy=self.boundary_policy)


class OutputConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    directory: str = DEFAULT_OUTPUT_DIR
    emit_plots: bool = False
    render_images: bool = False


class RunConfig(BaseModel):
    """A whole run config file."""
    model_config = ConfigDict(extra="forbid")

    problem: Optional[ProblemConfig] = None
    grid: Optional[GridSpec] = None
    solver: SolverConfig
    extraction: ExtractionConfig = Field(default_factory=ExtractionConfig)
    verification: VerificationConfig = Field(default_factory=VerificationConfig)
    refinement: Optional[RefinementConfig] = None
    portfolio: Optional[PortfolioSection] = None
    output: OutputConfig = Field(default_factory=OutputConfig)
    seed: int = 0

    @model_validator(mode="after")
    def _check_sections(self):
        if self.problem is None and self.portfolio is None:
            raise ValueError("a config needs a problem or a portfolio section")
        if (self.problem is None) != (self.grid is None):
            raise ValueError("problem and grid sections go together")
        if self.grid is not None and self.problem is not None and len(self.grid.space) != self.problem.state_dim:
            raise ValueError("grid.space needs one axis per state dimension")
        return self


class RunManifest(BaseModel):
    """Provenance of one CLI run; the only artifact holding timestamps."""
    tool_version: str
    command: str
    config_path: str
    config_checksum: str
    problem: Dict[str, Any]
    grid: Optional[Dict[str, Any]] = None
    solver: Dict[str, Any]
    seed: int
    outputs: List[str] = Field(default_factory=list)
    warnings: List[str] = Field(default_factory=list)
    started_at: str
    finished_at: str
    wall_time_seconds: float
    trace: Dict[str, str] = Field(default_factory=dict)
