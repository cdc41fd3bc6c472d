"""
Exception types raised by the solver.
"""
from typing import Iterable, List, Optional, Sequence


class GameSolverError(Exception):
    """Base exception for solver errors"""
    pass


class ConfigurationError(GameSolverError):
    """Exception raised when a problem, grid, step or config file is invalid"""

    def __init__(self, message: str, keys: Optional[Iterable[str]] = None):
        super().__init__(message)
        self.keys: List[str] = list(keys or [])


class OutOfDomainError(GameSolverError):
    """
    Exception raised when a point leaves the space box under the "error" boundary policy.

    Attributes:
        coordinate: Index of the offending state coordinate
        value: Offending coordinate value
        bounds: (lo, hi) of that axis
        step: Trajectory step at which the exit happened, when known
    """

    def __init__(
        self,
        coordinate: int,
        value: float,
        bounds: Sequence[float],
        step: Optional[int] = None,
    ):
        self.coordinate = coordinate
        self.value = float(value)
        self.bounds = (float(bounds[0]), float(bounds[1]))
        self.step = step
        where = f" at step {step}" if step is not None else ""
        super().__init__(
            f"Coordinate {coordinate} = {self.value:.17g} lies outside "
            f"[{self.bounds[0]:.17g}, {self.bounds[1]:.17g}]{where}"
        )

    def at_step(self, step: int) -> "OutOfDomainError":
        """Return a copy of this error tagged with the trajectory step."""
        return OutOfDomainError(self.coordinate, self.value, self.bounds, step=step)
