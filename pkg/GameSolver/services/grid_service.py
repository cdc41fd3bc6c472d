"""
Grid construction and the multilinear interpolation operator I[V].
"""

import itertools
from typing import Iterable, Sequence, Tuple, Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse import csr_matrix

from GameSolver.models.grid import AxisSpec, BoundaryPolicy, GridSpec, TimeSpaceGrid
from GameSolver.utils.errors import ConfigurationError, OutOfDomainError
from GameSolver.utils.logger import get_logger

logger = get_logger(__name__)

# Relative slack for points that sit on the box up to rounding
BOX_TOLERANCE = 1e-12
DIVISIBILITY_TOLERANCE = 1e-12

AxisLike = Union[AxisSpec, Sequence[float]]


class GridService:
    """Service class for time-space grids and interpolation."""

    @staticmethod
    def step_count(horizon: Tuple[float, float], h: float) -> int:
        """
        Number of time steps N = (T - t) / h.

        Raises:
            ConfigurationError: If h is not positive or does not divide the horizon
        """
        t, T = float(horizon[0]), float(horizon[1])
        if h <= 0:
            raise ConfigurationError(f"Time step must be positive, got h={h}", keys=["solver.h"])
        length = T - t
        steps = max(1, int(round(length / h)))
        if abs(steps * h - length) > DIVISIBILITY_TOLERANCE * length:
            suggestion = length / steps
            raise ConfigurationError(
                f"h={h!r} does not divide the horizon [{t}, {T}]; nearest admissible step is "
                f"h={suggestion!r} ({steps} steps)",
                keys=["solver.h"],
            )
        return steps

    @staticmethod
    def time_nodes(horizon: Tuple[float, float], h: float) -> np.ndarray:
        """Uniform time nodes t, t+h, ..., T with the last node pinned to T."""
        steps = GridService.step_count(horizon, h)
        nodes = float(horizon[0]) + h * np.arange(steps + 1, dtype=float)
        nodes[-1] = float(horizon[1])
        return nodes

    @staticmethod
    def build_grid(
        horizon: Tuple[float, float],
        h: float,
        space_box: Iterable[AxisLike],
        boundary_policy: Union[BoundaryPolicy, str] = BoundaryPolicy.ERROR,
    ) -> TimeSpaceGrid:
        """
        Build a uniform time grid and a rectangular space grid.

        Args:
            horizon: (t, T)
            h: Time step, must divide T - t
            space_box: Per-dimension AxisSpec or (lo, hi, count) triples
            boundary_policy: "error" or "clamp"

        Returns:
            TimeSpaceGrid with (T - t)/h + 1 time nodes

        Raises:
            ConfigurationError: If h does not divide the horizon or an axis is malformed
        """
        axes = []
        for position, axis in enumerate(space_box):
            try:
                spec = axis if isinstance(axis, AxisSpec) else AxisSpec(lo=axis[0], hi=axis[1], count=axis[2])
            except (ValueError, IndexError, TypeError) as e:
                raise ConfigurationError(f"Invalid space axis {position}: {e}", keys=[f"grid.space.{position}"])
            axes.append(np.linspace(spec.lo, spec.hi, spec.count))
        if not axes:
            raise ConfigurationError("Grid needs at least one space axis", keys=["grid.space"])

        grid = TimeSpaceGrid(
            time_nodes=GridService.time_nodes(horizon, h),
            h=h,
            space_axes=tuple(axes),
            boundary_policy=BoundaryPolicy(boundary_policy),
        )
        logger.debug(
            f"Built grid with {grid.num_times} time nodes and {grid.num_nodes} space nodes",
            extra={'custom_dimensions': grid.describe()},
        )
        return grid

    @staticmethod
    def build_from_spec(horizon: Tuple[float, float], h: float, spec: GridSpec) -> TimeSpaceGrid:
        return GridService.build_grid(horizon, h, spec.space, spec.boundary_policy)

    @staticmethod
    def resolve_points(grid: TimeSpaceGrid, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Apply the grid's boundary policy to a batch of points.

        Args:
            grid: Grid whose bounding box applies
            points: Array of shape (P, n)

        Returns:
            (points inside the box, boolean mask of points that were projected)

        Raises:
            OutOfDomainError: Under the "error" policy, naming the first offending coordinate
        """
        lower, upper = grid.lower, grid.upper
        slack = BOX_TOLERANCE * (upper - lower)
        outside = (points < lower - slack) | (points > upper + slack)
        if np.any(outside) and grid.boundary_policy is BoundaryPolicy.ERROR:
            row, coord = np.argwhere(outside)[0]
            raise OutOfDomainError(int(coord), points[row, coord], (lower[coord], upper[coord]))
        clipped = np.clip(points, lower, upper)
        return clipped, np.any(outside, axis=1)

    @staticmethod
    def _as_points(grid: TimeSpaceGrid, point) -> Tuple[np.ndarray, bool]:
        arr = np.asarray(point, dtype=float)
        single = arr.ndim <= 1
        pts = arr.reshape(1, -1) if single else arr
        if pts.shape[1] != grid.state_dim:
            raise ConfigurationError(
                f"Point dimension {pts.shape[1]} does not match grid dimension {grid.state_dim}"
            )
        return pts, single

    @staticmethod
    def interpolate(field_slice: np.ndarray, grid: TimeSpaceGrid, point) -> Union[float, np.ndarray]:
        """
        Multilinear interpolation of one time slice.

        Args:
            field_slice: Values at the J space nodes of one time node
            grid: Grid the slice lives on
            point: A single point (n,) or a batch (P, n)

        Returns:
            Scalar for a single point, array of shape (P,) for a batch

        Raises:
            OutOfDomainError: If a point leaves the box under the "error" policy
        """
        pts, single = GridService._as_points(grid, point)
        pts, _ = GridService.resolve_points(grid, pts)
        interpolator = RegularGridInterpolator(
            grid.space_axes,
            np.asarray(field_slice, dtype=float).reshape(grid.space_shape),
            method="linear",
            bounds_error=False,
            fill_value=None,
        )
        out = interpolator(pts)
        return float(out[0]) if single else out

    @staticmethod
    def interpolation_matrix(grid: TimeSpaceGrid, points: np.ndarray) -> Tuple[csr_matrix, int]:
        """
        Sparse weight matrix W with I[V](points) = W @ V for every slice V on this grid.

        Each row holds the multilinear weights of the 2^n corners of the cell containing the point.

        Args:
            grid: Grid the slices live on
            points: Array of shape (P, n)

        Returns:
            (W as a (P, J) CSR matrix, number of points projected onto the box)
        """
        pts, clamped = GridService.resolve_points(grid, np.asarray(points, dtype=float))
        count = pts.shape[0]
        cells, fractions = [], []
        for d, axis in enumerate(grid.space_axes):
            cell = np.clip(np.searchsorted(axis, pts[:, d], side="right") - 1, 0, axis.size - 2)
            cells.append(cell)
            fractions.append((pts[:, d] - axis[cell]) / (axis[cell + 1] - axis[cell]))

        rows, cols, data = [], [], []
        for corner in itertools.product((0, 1), repeat=len(cells)):
            weight = np.ones(count)
            for d, upper in enumerate(corner):
                weight = weight * (fractions[d] if upper else 1.0 - fractions[d])
            rows.append(np.arange(count))
            cols.append(np.ravel_multi_index(tuple(c + u for c, u in zip(cells, corner)), grid.space_shape))
            data.append(weight)
        W = csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(count, grid.num_nodes),
        )
        W.eliminate_zeros()
        return W, int(np.count_nonzero(clamped))

    @staticmethod
    def nearest_node(grid: TimeSpaceGrid, point) -> int:
        """Flat index of the space node closest to ``point`` along every axis."""
        pts, _ = GridService._as_points(grid, point)
        pts, _ = GridService.resolve_points(grid, pts)
        position = [int(np.argmin(np.abs(axis - pts[0, d]))) for d, axis in enumerate(grid.space_axes)]
        return int(np.ravel_multi_index(position, grid.space_shape))

    @staticmethod
    def locate_time(grid: TimeSpaceGrid, s: float) -> int:
        """
        Index of the time node equal to ``s``.

        Raises:
            ConfigurationError: If ``s`` is not a time node
        """
        index = int(round((s - grid.time_nodes[0]) / grid.h))
        if 0 <= index < grid.num_times and abs(grid.time_nodes[index] - s) <= 1e-9 * max(1.0, abs(s)):
            return index
        raise ConfigurationError(f"Time {s} is not a node of the grid")
