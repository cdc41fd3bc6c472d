"""
Declarative catalog of model-function families, as they appear in run config files.

Every spec carries a ``family`` discriminator. Whether a function is vector-valued (dynamics,
jumps) or scalar-valued (gains, costs, terminal gain) is decided by the role it is built for.
"""

from typing import Annotated, List, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from GameSolver.models.game import DampingSpec

Coefficients = Union[float, List[float], List[List[float]]]


class _FunctionSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ConstantFunction(_FunctionSpec):
    family: Literal["constant"] = "constant"
    value: Union[float, List[float]] = 0.0


class AffineFunction(_FunctionSpec):
    """offset + A y + C u + time_coeff * s"""
    family: Literal["affine"] = "affine"
    offset: Union[float, List[float]] = 0.0
    state_coeffs: Coefficients = 0.0
    control_coeffs: Coefficients = 0.0
    time_coeff: Union[float, List[float]] = 0.0


class SaturatingFunction(_FunctionSpec):
    """scale * tanh(affine(s, y, u)), bounded by |scale|"""
    family: Literal["saturating"] = "saturating"
    scale: Union[float, List[float]] = 1.0
    offset: Union[float, List[float]] = 0.0
    state_coeffs: Coefficients = 0.0
    control_coeffs: Coefficients = 0.0
    time_coeff: Union[float, List[float]] = 0.0


class QuadraticFunction(_FunctionSpec):
    """offset + sum w_y (y - y0)^2 + sum w_u (u - u0)^2 + linear terms; scalar roles only"""
    family: Literal["quadratic"] = "quadratic"
    offset: float = 0.0
    state_weights: Union[float, List[float]] = 0.0
    state_center: Union[float, List[float]] = 0.0
    control_weights: Union[float, List[float]] = 0.0
    control_center: Union[float, List[float]] = 0.0
    state_linear: Union[float, List[float]] = 0.0
    control_linear: Union[float, List[float]] = 0.0


class FixedPlusProportionalFunction(_FunctionSpec):
    """fixed + state_proportional * |y| + control_proportional * |u|; scalar roles only"""
    family: Literal["fixed_plus_proportional"] = "fixed_plus_proportional"
    fixed: float = 0.0
    state_proportional: float = Field(default=0.0, ge=0)
    control_proportional: float = Field(default=0.0, ge=0)


class AdditiveFunction(_FunctionSpec):
    """scale * u (+ state_scale * y); jumps only"""
    family: Literal["additive"] = "additive"
    scale: float = 1.0
    state_scale: float = 0.0


class TabulatedTimeFunction(_FunctionSpec):
    """Piecewise-linear curve in time, constant in state and control."""
    family: Literal["tabulated_time"] = "tabulated_time"
    times: List[float] = Field(min_length=1)
    values: List[Union[float, List[float]]] = Field(min_length=1)

    @model_validator(mode="after")
    def _check_table(self):
        if len(self.times) != len(self.values):
            raise ValueError("times and values must have the same length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("times must be strictly increasing")
        return self


FunctionSpec = Annotated[
    Union[
        ConstantFunction,
        AffineFunction,
        SaturatingFunction,
        QuadraticFunction,
        FixedPlusProportionalFunction,
        AdditiveFunction,
        TabulatedTimeFunction,
    ],
    Field(discriminator="family"),
]


class ProblemConfig(BaseModel):
    """[problem] section of a run config."""
    model_config = ConfigDict(extra="forbid")

    name: str = "game"
    state_dim: int = Field(gt=0)
    continuous_controls: List[List[float]] = Field(min_length=1)
    max_impulses: List[List[float]] = Field(min_length=1)
    min_impulses: List[List[float]] = Field(min_length=1)
    dynamics: FunctionSpec
    jump_max: FunctionSpec
    jump_min: FunctionSpec
    running_gain: FunctionSpec
    cost_max: FunctionSpec
    cost_min: FunctionSpec
    terminal_gain: FunctionSpec
    discount: float = Field(gt=0)
    horizon: List[float] = Field(min_length=2, max_length=2)
    damping: DampingSpec = Field(default_factory=DampingSpec)
