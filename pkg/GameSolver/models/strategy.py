"""
Strategy, trajectory and equilibrium-audit models.
"""

import math
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field

# Slack when mapping an impulse time onto its time step
STEP_TOLERANCE = 1e-9


class ImpulseEvent(BaseModel):
    """
    One impulse (time, index into the player's impulse grid).

    Placeholders mark the required initial impulses of the forward pass; they never move the
    state nor cost anything. A placeholder index of None is the no-op marker.
    """
    time: float
    index: Optional[int] = None
    placeholder: bool = False

    def step(self, t0: float, h: float) -> int:
        """Index d of the interval [t0 + d*h, t0 + (d+1)*h) containing this impulse."""
        return int(math.floor((self.time - t0) / h + STEP_TOLERANCE))


class ControlSchedule(BaseModel):
    """Open-loop controls of both players on a uniform time grid."""
    theta: List[int]
    max_impulses: List[ImpulseEvent] = Field(default_factory=list)
    min_impulses: List[ImpulseEvent] = Field(default_factory=list)


class NashStrategy(BaseModel):
    """
    Extracted equilibrium controls.

    ``continuous_timeline[i]`` is the maximizer's continuous control index at time node i, or
    None where an impulse replaced the continuous step. ``standby_timeline[i]`` is the best
    continuous control at the path point whatever happened at that node.
    """
    continuous_timeline: List[Optional[int]]
    standby_timeline: List[int]
    max_impulses: List[ImpulseEvent] = Field(default_factory=list)
    min_impulses: List[ImpulseEvent] = Field(default_factory=list)

    def schedule(self) -> ControlSchedule:
        theta = [
            standby if chosen is None else chosen
            for chosen, standby in zip(self.continuous_timeline, self.standby_timeline)
        ]
        return ControlSchedule(
            theta=theta,
            max_impulses=[e.model_copy() for e in self.max_impulses],
            min_impulses=[e.model_copy() for e in self.min_impulses],
        )


class TrajectoryRecord(BaseModel):
    """State path on the time grid, regime per step, realized values and the payoff J_h."""
    times: List[float]
    states: List[List[float]]
    regimes: List[str] = Field(default_factory=list)
    values: List[Optional[float]] = Field(default_factory=list)
    payoff: Optional[float] = None
    truncated: bool = False
    diagnostic: Optional[str] = None
    clamped_steps: List[int] = Field(default_factory=list)


class ExtractionConfig(BaseModel):
    """[extraction] section: forward pass options."""
    model_config = ConfigDict(extra="forbid")

    start_state: Optional[List[float]] = None
    nearest_node: bool = False
    initial_max_impulse: Optional[int] = None
    initial_min_impulse: Optional[int] = None


class VerificationConfig(BaseModel):
    """[verification] section: empirical equilibrium audit options."""
    model_config = ConfigDict(extra="forbid")

    deviation_budget: int = Field(default=100, ge=0)
    tolerance: float = Field(default=1e-6, gt=0)
    seed: Optional[int] = None
    worst_count: int = Field(default=5, ge=1)


class NEDeviation(BaseModel):
    """One unilateral deviation and its effect on the deviator."""
    player: str
    kind: str
    description: str
    payoff: Optional[float] = None
    improvement: Optional[float] = None
    feasible: bool = True


class NEReport(BaseModel):
    """Outcome of an empirical equilibrium audit."""
    passed: bool
    value_at_start: float
    equilibrium_payoff: Optional[float]
    equilibrium_gap: Optional[float]
    value_check_passed: bool
    tolerance: float
    seed: int
    deviations_tested: Dict[str, int] = Field(default_factory=dict)
    violations: int = 0
    skipped: int = 0
    worst_max: List[NEDeviation] = Field(default_factory=list)
    worst_min: List[NEDeviation] = Field(default_factory=list)
    diagnostic: Optional[str] = None
