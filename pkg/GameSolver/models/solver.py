"""
Solver configuration, operator results and solve reports.
"""

from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.sparse import csr_matrix

from GameSolver.config import DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE
from GameSolver.models.grid import ValueField


class SolverConfig(BaseModel):
    """[solver] section: step, tolerances and iteration caps."""
    model_config = ConfigDict(extra="forbid")

    h: float = Field(gt=0)
    tolerance: float = Field(default=DEFAULT_TOLERANCE, gt=0)
    max_iterations: int = Field(default=DEFAULT_MAX_ITERATIONS, ge=1)
    switch_tolerance: Optional[float] = Field(default=None, ge=0)
    record_convergence: bool = False
    allow_large_step: bool = False

    @property
    def switch_band(self) -> float:
        """Deadband of the forward-pass intervention tests (defaults to the tolerance)."""
        return self.tolerance if self.switch_tolerance is None else self.switch_tolerance


class IterationMode(str, Enum):
    """Right-hand sides value iteration can solve on one time slice."""
    POLICY_MIN = "policy-min"
    POLICY_MAX = "policy-max"
    FULL_MIN = "full-min"
    FULL_MAX = "full-max"
    GAME = "game"


class OperatorResult(BaseModel):
    """
    Value, control-grid index and regime of a pointwise operator.

    Fields hold scalars for a single point and arrays for a batch of points.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    value: Any
    index: Any
    branch: Any


class ObstacleResiduals(BaseModel):
    """H_h residual, lower gap v - Phi*Hsup v, upper gap v - Phi*Hinf v, and the composite."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    hjb: Any
    lower_gap: Any
    upper_gap: Any
    composite: Any


class SliceOperators(BaseModel):
    """
    Everything one time slice needs for repeated operator evaluation.

    ``*_weights`` stacks the sparse interpolation matrices at the jump targets of every impulse, so
    that I[V](y_j + g(s, y_j; k)) = (weights @ V)[k * J + j]. ``continuous`` and ``theta`` are the
    continuous value B and its maximizing control, present when the next slice was supplied.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    index: int
    time: float
    phi: float
    max_weights: csr_matrix
    max_costs: np.ndarray
    min_weights: csr_matrix
    min_costs: np.ndarray
    continuous: Optional[np.ndarray] = None
    theta: Optional[np.ndarray] = None
    clamped_points: int = 0


class ValueIterationResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    values: np.ndarray
    iterations: int
    converged: bool
    history: List[float] = Field(default_factory=list)


class PolicyIterationResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    values: np.ndarray
    policy: np.ndarray
    outer_iterations: int
    evaluation_iterations: int
    converged: bool
    value_history: List[np.ndarray] = Field(default_factory=list)


class SliceStats(BaseModel):
    """Per-slice iteration counts and residual of a backward sweep."""
    index: int
    time: float
    value_iterations: int
    min_policy_iterations: int
    min_evaluation_iterations: int
    max_policy_iterations: int
    max_evaluation_iterations: int
    residual: float
    converged: bool
    clamped_points: int = 0
    residual_history: List[float] = Field(default_factory=list)


class CandidateFields(BaseModel):
    """The three per-node candidates stored by the sweep (NaN / -1 on the terminal slice)."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    continuous: np.ndarray
    continuous_policy: np.ndarray
    min_value: np.ndarray
    min_policy: np.ndarray
    max_value: np.ndarray
    max_policy: np.ndarray


class BoundAudit(BaseModel):
    """||v_h||_inf against the budget ||f||_inf / lambda + ||G||_inf."""
    budget: float
    max_abs: float
    ok: bool


class SolveReport(BaseModel):
    """Result of a backward sweep."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    value_field: ValueField
    candidates: CandidateFields
    slices: List[SliceStats]
    residual_norm: float
    upper_gap_max: float
    bound_audit: BoundAudit
    damping: float
    tolerance: float
    wall_time_seconds: float
    warnings: List[str] = Field(default_factory=list)

    def summary(self) -> Dict[str, Any]:
        """JSON-ready view without arrays or timings."""
        return {
            "residual_norm": self.residual_norm,
            "upper_gap_max": self.upper_gap_max,
            "bound_audit": self.bound_audit.model_dump(),
            "damping": self.damping,
            "tolerance": self.tolerance,
            "clamped": self.value_field.clamped,
            "slices": [s.model_dump() for s in self.slices],
            "warnings": list(self.warnings),
        }


class RefinementConfig(BaseModel):
    """[refinement] section: decreasing steps and an optional reference state and value."""
    model_config = ConfigDict(extra="forbid")

    h_list: List[float] = Field(min_length=1)
    reference_state: Optional[List[float]] = None
    reference_value: Optional[float] = None


class RefinementRow(BaseModel):
    h: float
    error_to_finest: float
    iterations: int
    reference_state_value: Optional[float] = None
    reference_error: Optional[float] = None
    bound_ok: bool = True


class RefinementReport(BaseModel):
    rows: List[RefinementRow]
    trend_decreasing: bool
    finest_h: float
