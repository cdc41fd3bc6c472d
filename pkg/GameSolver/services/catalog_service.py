"""
Builds vectorised model callables from catalog specs.
"""

from typing import Any, Callable, Dict

import numpy as np
from pydantic import ValidationError

from GameSolver.models.catalog import (
    AdditiveFunction,
    AffineFunction,
    ConstantFunction,
    FixedPlusProportionalFunction,
    ProblemConfig,
    QuadraticFunction,
    SaturatingFunction,
    TabulatedTimeFunction,
)
from GameSolver.models.game import GameProblem
from GameSolver.utils.errors import ConfigurationError
from GameSolver.utils.logger import get_logger

logger = get_logger(__name__)

SCALAR = "scalar"
VECTOR = "vector"

# role -> (output kind, control grid feeding it)
ROLES: Dict[str, tuple] = {
    "dynamics": (VECTOR, "continuous_controls"),
    "jump_max": (VECTOR, "max_impulses"),
    "jump_min": (VECTOR, "min_impulses"),
    "running_gain": (SCALAR, "continuous_controls"),
    "cost_max": (SCALAR, "max_impulses"),
    "cost_min": (SCALAR, "min_impulses"),
    "terminal_gain": (SCALAR, None),
}

ModelFunction = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


def _vector(value: Any, size: int, role: str, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(size, float(arr))
    if arr.shape != (size,):
        raise ConfigurationError(
            f"{role}.{name} has shape {arr.shape}, expected a scalar or {size} entries",
            keys=[f"problem.{role}.{name}"],
        )
    return arr


def _matrix(value: Any, rows: int, cols: int, role: str, name: str) -> np.ndarray:
    """Coefficient matrix of shape (rows, cols); scalars and lists become diagonals where square."""
    arr = np.asarray(value, dtype=float)
    if rows == 1:
        return _vector(value, cols, role, name).reshape(1, cols)
    if arr.ndim == 0:
        if float(arr) == 0.0:
            return np.zeros((rows, cols))
        if rows == cols:
            return float(arr) * np.eye(rows)
    elif arr.ndim == 1 and rows == cols and arr.size == rows:
        return np.diag(arr)
    elif arr.shape == (rows, cols):
        return arr
    raise ConfigurationError(
        f"{role}.{name} cannot be read as a {rows}x{cols} coefficient matrix",
        keys=[f"problem.{role}.{name}"],
    )


class CatalogService:
    """Service class turning catalog specs into model functions."""

    @staticmethod
    def build_function(spec, kind: str, state_dim: int, control_dim: int, role: str) -> ModelFunction:
        """
        Build one model function.

        Args:
            spec: Catalog spec (one of the models in GameSolver.models.catalog)
            kind: "scalar" or "vector"
            state_dim: n
            control_dim: Length of one control-grid row (0 for the terminal gain)
            role: Role name, used in error messages

        Returns:
            Callable fn(s, y, u) returning (J,) for scalar roles and (J, n) for vector roles

        Raises:
            ConfigurationError: If the family does not fit the role or coefficients have wrong shapes
        """
        out_dim = state_dim if kind == VECTOR else 1

        def shaped(values: np.ndarray) -> np.ndarray:
            return values if kind == VECTOR else values[:, 0]

        if isinstance(spec, ConstantFunction):
            value = _vector(spec.value, out_dim, role, "value")
            return lambda s, y, u: shaped(np.tile(value, (y.shape[0], 1)))

        if isinstance(spec, (AffineFunction, SaturatingFunction)):
            offset = _vector(spec.offset, out_dim, role, "offset")
            A = _matrix(spec.state_coeffs, out_dim, state_dim, role, "state_coeffs")
            C = _matrix(spec.control_coeffs, out_dim, control_dim, role, "control_coeffs")
            tc = _vector(spec.time_coeff, out_dim, role, "time_coeff")

            def affine(s, y, u):
                return offset + y @ A.T + C @ np.asarray(u, dtype=float) + tc * s

            if isinstance(spec, AffineFunction):
                return lambda s, y, u: shaped(affine(s, y, u))
            scale = _vector(spec.scale, out_dim, role, "scale")
            return lambda s, y, u: shaped(scale * np.tanh(affine(s, y, u)))

        if isinstance(spec, QuadraticFunction):
            if kind != SCALAR:
                raise ConfigurationError(f"quadratic family only fits scalar roles, not {role}",
                                         keys=[f"problem.{role}.family"])
            wy = _vector(spec.state_weights, state_dim, role, "state_weights")
            cy = _vector(spec.state_center, state_dim, role, "state_center")
            ly = _vector(spec.state_linear, state_dim, role, "state_linear")
            wu = _vector(spec.control_weights, control_dim, role, "control_weights")
            cu = _vector(spec.control_center, control_dim, role, "control_center")
            lu = _vector(spec.control_linear, control_dim, role, "control_linear")

            def quadratic(s, y, u):
                u = np.asarray(u, dtype=float)
                control_part = float(np.sum(wu * (u - cu) ** 2) + u @ lu)
                return spec.offset + ((y - cy) ** 2) @ wy + y @ ly + control_part

            return quadratic

        if isinstance(spec, FixedPlusProportionalFunction):
            if kind != SCALAR:
                raise ConfigurationError(f"fixed_plus_proportional family only fits scalar roles, not {role}",
                                         keys=[f"problem.{role}.family"])

            def fixed_plus_proportional(s, y, u):
                return (spec.fixed
                        + spec.state_proportional * np.linalg.norm(y, axis=1)
                        + spec.control_proportional * float(np.linalg.norm(u)))

            return fixed_plus_proportional

        if isinstance(spec, AdditiveFunction):
            if kind != VECTOR or control_dim != state_dim:
                raise ConfigurationError(
                    f"additive family needs a vector role with controls of dimension {state_dim} ({role})",
                    keys=[f"problem.{role}.family"],
                )
            return lambda s, y, u: spec.scale * np.asarray(u, dtype=float) + spec.state_scale * y

        if isinstance(spec, TabulatedTimeFunction):
            times = np.asarray(spec.times, dtype=float)
            table = np.stack([_vector(v, out_dim, role, "values") for v in spec.values])

            def tabulated(s, y, u):
                row = np.array([np.interp(s, times, table[:, d]) for d in range(out_dim)])
                return shaped(np.tile(row, (y.shape[0], 1)))

            return tabulated

        raise ConfigurationError(f"Unknown function family for {role}", keys=[f"problem.{role}"])

    @staticmethod
    def build_problem(config: ProblemConfig) -> GameProblem:
        """
        Build a GameProblem from the [problem] section of a run config.

        Raises:
            ConfigurationError: If a function spec or the resulting problem is invalid
        """
        n = config.state_dim
        grids = {
            "continuous_controls": np.asarray(config.continuous_controls, dtype=float),
            "max_impulses": np.asarray(config.max_impulses, dtype=float),
            "min_impulses": np.asarray(config.min_impulses, dtype=float),
        }
        for key, grid in grids.items():
            if grid.ndim != 2:
                raise ConfigurationError(f"{key} rows must all have the same length", keys=[f"problem.{key}"])

        functions = {}
        for role, (kind, grid_key) in ROLES.items():
            control_dim = grids[grid_key].shape[1] if grid_key else 0
            functions[role] = CatalogService.build_function(getattr(config, role), kind, n, control_dim, role)

        terminal = functions.pop("terminal_gain")
        T = float(config.horizon[1])
        empty = np.zeros(0)

        try:
            problem = GameProblem(
                name=config.name,
                state_dim=n,
                continuous_control_grid=grids["continuous_controls"],
                max_impulse_grid=grids["max_impulses"],
                min_impulse_grid=grids["min_impulses"],
                terminal_gain=lambda y: terminal(T, y, empty),
                discount=config.discount,
                horizon=(config.horizon[0], config.horizon[1]),
                damping=config.damping,
                **functions,
            )
        except ValidationError as e:
            raise ConfigurationError(
                f"Invalid problem definition: {e.errors()[0]['msg']}",
                keys=[".".join(["problem"] + [str(p) for p in err["loc"]]) for err in e.errors()],
            )
        logger.info(f"Built problem '{problem.name}' from catalog",
                    extra={'custom_dimensions': {'families': {r: getattr(config, r).family for r in ROLES}}})
        return problem
