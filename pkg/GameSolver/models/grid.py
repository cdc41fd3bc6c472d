"""
Time-space grid and value field models.
"""

from enum import Enum
from typing import Any, Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator


class BoundaryPolicy(str, Enum):
    """What happens when a point leaves the space box."""
    ERROR = "error"
    CLAMP = "clamp"


class Regime(str, Enum):
    """Regime label attached to each node of a value field."""
    CONTINUOUS = "continuous"
    MAX_IMPULSE = "max-impulse"
    MIN_IMPULSE = "min-impulse"
    TERMINAL = "terminal"


class AxisSpec(BaseModel):
    """One space axis: ``count`` equally spaced nodes on [lo, hi]."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    lo: float
    hi: float
    count: int = Field(ge=2)

    @model_validator(mode="after")
    def _check_order(self):
        if not self.lo < self.hi:
            raise ValueError(f"axis requires lo < hi, got [{self.lo}, {self.hi}]")
        return self


class GridSpec(BaseModel):
    """Space part of a grid, as read from a config file."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    space: List[AxisSpec] = Field(min_length=1)
    boundary_policy: BoundaryPolicy = BoundaryPolicy.ERROR


class TimeSpaceGrid(BaseModel):
    """
    Uniform time nodes s_1 = t < ... < s_I = T with step h, and a rectangular tensor space grid.

    Space nodes are enumerated in C order over the axes, so node j of a 2D grid with axis sizes
    (n0, n1) sits at (axis0[j // n1], axis1[j % n1]).
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    time_nodes: np.ndarray
    h: float = Field(gt=0)
    space_axes: Tuple[np.ndarray, ...]
    boundary_policy: BoundaryPolicy = BoundaryPolicy.ERROR

    _nodes: np.ndarray = PrivateAttr()

    @field_validator("time_nodes", mode="before")
    @classmethod
    def _coerce_times(cls, value):
        times = np.array(value, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("time grid needs at least two nodes")
        times.setflags(write=False)
        return times

    @field_validator("space_axes", mode="before")
    @classmethod
    def _coerce_axes(cls, value):
        axes = []
        for position, axis in enumerate(value):
            arr = np.array(axis, dtype=float)
            if arr.ndim != 1 or arr.size < 2:
                raise ValueError(f"space axis {position} needs at least two nodes")
            if not np.all(np.diff(arr) > 0):
                raise ValueError(f"space axis {position} must be strictly increasing")
            arr.setflags(write=False)
            axes.append(arr)
        if not axes:
            raise ValueError("grid needs at least one space axis")
        return tuple(axes)

    def model_post_init(self, __context: Any) -> None:
        mesh = np.meshgrid(*self.space_axes, indexing="ij")
        nodes = np.stack([m.reshape(-1) for m in mesh], axis=1)
        nodes.setflags(write=False)
        self._nodes = nodes

    @property
    def nodes(self) -> np.ndarray:
        """Space nodes, shape (J, n)."""
        return self._nodes

    @property
    def num_times(self) -> int:
        return int(self.time_nodes.size)

    @property
    def state_dim(self) -> int:
        return len(self.space_axes)

    @property
    def space_shape(self) -> Tuple[int, ...]:
        return tuple(axis.size for axis in self.space_axes)

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.space_shape))

    @property
    def lower(self) -> np.ndarray:
        return np.array([axis[0] for axis in self.space_axes])

    @property
    def upper(self) -> np.ndarray:
        return np.array([axis[-1] for axis in self.space_axes])

    @property
    def horizon(self) -> Tuple[float, float]:
        return float(self.time_nodes[0]), float(self.time_nodes[-1])

    def describe(self) -> Dict[str, Any]:
        """Serializable grid description (metadata headers, manifests)."""
        return {
            "horizon": list(self.horizon),
            "h": self.h,
            "time_nodes": self.num_times,
            "space": [
                {"lo": float(axis[0]), "hi": float(axis[-1]), "count": int(axis.size)}
                for axis in self.space_axes
            ],
            "boundary_policy": self.boundary_policy.value,
        }


class ValueField(BaseModel):
    """
    Solved values V[i, j] ~ v_h(s_i, y_j) with per-node policy annotations.

    Policy indices are -1 where they do not apply (the terminal slice).
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    grid: TimeSpaceGrid
    values: np.ndarray
    theta_index: np.ndarray
    xi_index: np.ndarray
    eta_index: np.ndarray
    regime: np.ndarray
    clamped: bool = False

    @model_validator(mode="after")
    def _check_shapes(self):
        expected = (self.grid.num_times, self.grid.num_nodes)
        for name in ("values", "theta_index", "xi_index", "eta_index", "regime"):
            if getattr(self, name).shape != expected:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {expected}")
        return self

    def slice(self, i: int) -> np.ndarray:
        return self.values[i]
