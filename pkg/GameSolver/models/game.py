"""
Game instance data models.

A GameProblem bundles the six model functions, the terminal gain, the discount, the damping
function and the finite control grids of one zero-sum impulse game. Model functions are plain
callables with the signature ``fn(s, y, control)`` where ``y`` has shape (J, n) and ``control``
is one row of the matching control grid; the terminal gain is ``G(y)``.
"""

import math
from enum import Enum
from typing import Any, Callable, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Player(str, Enum):
    """The two players of the game."""
    MAXIMIZER = "max"
    MINIMIZER = "min"


class DampingSpec(BaseModel):
    """
    Damping function Phi(h) applied to the impulse operators.

    ``exponential`` is exp(-rate*h) and ``rational`` is 1/(1+rate*h); the rate defaults to the
    problem's discount. Both give Phi(0) = 1 and 0 < Phi(h) < 1 for h > 0.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["exponential", "rational"] = "exponential"
    rate: Optional[float] = Field(default=None, gt=0)

    def evaluate(self, h: float, discount: float) -> float:
        rate = self.rate if self.rate is not None else discount
        if self.kind == "exponential":
            return math.exp(-rate * h)
        return 1.0 / (1.0 + rate * h)


def _as_grid(value: Any, name: str) -> np.ndarray:
    grid = np.asarray(value, dtype=float)
    if grid.ndim == 1:
        grid = grid.reshape(-1, 1)
    if grid.ndim != 2 or grid.shape[0] == 0 or grid.shape[1] == 0:
        raise ValueError(f"{name} must be a non-empty list of vectors")
    if not np.all(np.isfinite(grid)):
        raise ValueError(f"{name} contains non-finite entries")
    grid = grid.copy()
    grid.setflags(write=False)
    return grid


class GameProblem(BaseModel):
    """
    Full specification of one game instance.

    The maximizer plays the continuous control and the xi impulses, the minimizer plays the eta
    impulses. When both players intervene at the same instant only the minimizer acts.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    name: str = "game"
    state_dim: int = Field(gt=0)

    # Control grids, one row per candidate
    continuous_control_grid: np.ndarray
    max_impulse_grid: np.ndarray
    min_impulse_grid: np.ndarray

    # Model functions
    dynamics: Callable[..., Any]
    jump_max: Callable[..., Any]
    jump_min: Callable[..., Any]
    running_gain: Callable[..., Any]
    cost_max: Callable[..., Any]
    cost_min: Callable[..., Any]
    terminal_gain: Callable[..., Any]

    discount: float = Field(gt=0)
    horizon: Tuple[float, float]
    damping: DampingSpec = Field(default_factory=DampingSpec)

    @field_validator("continuous_control_grid", "max_impulse_grid", "min_impulse_grid", mode="before")
    @classmethod
    def _coerce_grid(cls, value, info):
        return _as_grid(value, info.field_name)

    @field_validator("max_impulse_grid", "min_impulse_grid")
    @classmethod
    def _no_zero_impulse(cls, grid: np.ndarray, info):
        zero_rows = np.flatnonzero(np.all(grid == 0.0, axis=1))
        if zero_rows.size:
            raise ValueError(f"{info.field_name} contains the zero vector at row {int(zero_rows[0])}")
        return grid

    @model_validator(mode="after")
    def _check_horizon(self):
        t, T = self.horizon
        if not (0.0 <= t < T):
            raise ValueError(f"horizon must satisfy T > t >= 0, got ({t}, {T})")
        return self

    # ------------------------------------------------------------------
    # Convenience accessors
    # ------------------------------------------------------------------

    @property
    def start_time(self) -> float:
        return float(self.horizon[0])

    @property
    def end_time(self) -> float:
        return float(self.horizon[1])

    def damping_factor(self, h: float) -> float:
        """Phi(h) for this problem."""
        return self.damping.evaluate(h, self.discount)

    def control_grid(self, role: str) -> np.ndarray:
        """Grid for ``"continuous"``, ``Player.MAXIMIZER`` or ``Player.MINIMIZER``."""
        if role == "continuous":
            return self.continuous_control_grid
        if Player(role) is Player.MAXIMIZER:
            return self.max_impulse_grid
        return self.min_impulse_grid

    # ------------------------------------------------------------------
    # Vectorised evaluation; y has shape (J, n)
    # ------------------------------------------------------------------

    def _vector(self, out: Any, count: int) -> np.ndarray:
        arr = np.asarray(out, dtype=float)
        if arr.ndim == 1 and arr.shape[0] == count and self.state_dim == 1 and count != 1:
            arr = arr.reshape(count, 1)
        return np.array(np.broadcast_to(arr, (count, self.state_dim)), dtype=float)

    @staticmethod
    def _scalar(out: Any, count: int) -> np.ndarray:
        arr = np.asarray(out, dtype=float)
        if arr.ndim == 2 and arr.shape[1] == 1:
            arr = arr[:, 0]
        return np.array(np.broadcast_to(arr, (count,)), dtype=float)

    def drift(self, s: float, y: np.ndarray, k: int) -> np.ndarray:
        """b(s, y; theta_k) with shape (J, n)."""
        return self._vector(self.dynamics(s, y, self.continuous_control_grid[k]), y.shape[0])

    def gain(self, s: float, y: np.ndarray, k: int) -> np.ndarray:
        """f(s, y; theta_k) with shape (J,)."""
        return self._scalar(self.running_gain(s, y, self.continuous_control_grid[k]), y.shape[0])

    def jump(self, player: Player, s: float, y: np.ndarray, k: int) -> np.ndarray:
        """g_xi or g_eta at impulse index k, shape (J, n)."""
        if Player(player) is Player.MAXIMIZER:
            out = self.jump_max(s, y, self.max_impulse_grid[k])
        else:
            out = self.jump_min(s, y, self.min_impulse_grid[k])
        return self._vector(out, y.shape[0])

    def cost(self, player: Player, s: float, y: np.ndarray, k: int) -> np.ndarray:
        """c or chi at impulse index k, shape (J,)."""
        if Player(player) is Player.MAXIMIZER:
            out = self.cost_max(s, y, self.max_impulse_grid[k])
        else:
            out = self.cost_min(s, y, self.min_impulse_grid[k])
        return self._scalar(out, y.shape[0])

    def terminal(self, y: np.ndarray) -> np.ndarray:
        """G(y) with shape (J,)."""
        return self._scalar(self.terminal_gain(y), y.shape[0])

    def summary(self) -> Dict[str, Any]:
        """Serializable description used in manifests and metadata."""
        return {
            "name": self.name,
            "state_dim": self.state_dim,
            "continuous_controls": self.continuous_control_grid.tolist(),
            "max_impulses": self.max_impulse_grid.tolist(),
            "min_impulses": self.min_impulse_grid.tolist(),
            "discount": self.discount,
            "horizon": [self.start_time, self.end_time],
            "damping": self.damping.model_dump(),
        }


class AssumptionViolation(BaseModel):
    """One violated standing assumption with a witness sample."""
    assumption: str
    message: str
    witness: Dict[str, Any] = Field(default_factory=dict)


class AssumptionReport(BaseModel):
    """Sampled audit of the standing assumptions of a GameProblem."""
    bound_estimate: float
    dynamics_bound: float
    running_gain_bound: float
    terminal_bound: float
    lipschitz_estimates: Dict[str, float] = Field(default_factory=dict)
    cost_infimum: float
    terminal_no_impulse_ok: bool
    violations: List[AssumptionViolation] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


class TrajectoryBoundCheck(BaseModel):
    """Euler path estimate max ||y(s) - x|| <= M*(s - t) + sum of jump magnitudes."""
    bounds: List[float]
    distances: List[float]
    max_excess: float
    ok: bool
