"""
Pointwise operators of the scheme and their per-slice matrix form.

The approximate Hamiltonian is exposed through its sup form: ``approximate_hamiltonian`` returns
B(s, y) = max_theta {(1 - lambda*h) I[V_next](y + h*b) + h*f}, so that H_h(s, y, v) = v - B.
"""

from typing import Optional, Tuple, Union

import numpy as np
from scipy.sparse import csr_matrix, vstack

from GameSolver.models.game import GameProblem, Player
from GameSolver.models.grid import Regime, TimeSpaceGrid, ValueField
from GameSolver.models.solver import ObstacleResiduals, OperatorResult, SliceOperators
from GameSolver.services.grid_service import GridService
from GameSolver.utils.errors import ConfigurationError
from GameSolver.utils.logger import get_logger

logger = get_logger(__name__)

# Branch codes used in vectorised regime selection
CONTINUOUS, MAX_IMPULSE, MIN_IMPULSE = 0, 1, 2
BRANCH_LABELS = np.array([Regime.CONTINUOUS.value, Regime.MAX_IMPULSE.value, Regime.MIN_IMPULSE.value])


def _pack(value: np.ndarray, index: np.ndarray, branch: np.ndarray, single: bool) -> OperatorResult:
    if single:
        return OperatorResult(value=float(value[0]), index=int(index[0]), branch=str(branch[0]))
    return OperatorResult(value=value, index=index, branch=branch)


class OperatorService:
    """Service class for the scheme's operators."""

    @staticmethod
    def approximate_hamiltonian(problem: GameProblem, grid: TimeSpaceGrid, field_next: np.ndarray,
                                s: float, y) -> OperatorResult:
        """
        Continuous-control value B(s, y) and its maximizing control (first index on ties).

        Args:
            problem: Game instance
            grid: Grid of the field
            field_next: Values at time s + h
            s: Time node
            y: Point (n,) or points (P, n)

        Returns:
            OperatorResult(value=B, index=theta index, branch="continuous")

        Raises:
            OutOfDomainError: If some y + h*b leaves the box under the "error" policy
        """
        pts, single = GridService._as_points(grid, y)
        h = grid.h
        decay = 1.0 - problem.discount * h
        candidates = np.empty((problem.continuous_control_grid.shape[0], pts.shape[0]))
        for k in range(candidates.shape[0]):
            target = pts + h * problem.drift(s, pts, k)
            candidates[k] = decay * GridService.interpolate(field_next, grid, target) + h * problem.gain(s, pts, k)
        index = np.argmax(candidates, axis=0)
        value = candidates[index, np.arange(pts.shape[0])]
        return _pack(value, index, np.full(pts.shape[0], Regime.CONTINUOUS.value), single)

    @staticmethod
    def _impulse_candidates(problem: GameProblem, grid: TimeSpaceGrid, field_same: np.ndarray,
                            s: float, pts: np.ndarray, player: Player) -> np.ndarray:
        size = problem.control_grid(player).shape[0]
        sign = -1.0 if player is Player.MAXIMIZER else 1.0
        candidates = np.empty((size, pts.shape[0]))
        for k in range(size):
            target = pts + problem.jump(player, s, pts, k)
            candidates[k] = GridService.interpolate(field_same, grid, target) + sign * problem.cost(player, s, pts, k)
        return candidates

    @staticmethod
    def max_cost_operator(problem: GameProblem, grid: TimeSpaceGrid, field_same: np.ndarray,
                          s: float, y) -> OperatorResult:
        """
        H_sup^c on the grid: max over xi of I[V](y + g_xi) - c, with the maximizing index.

        Raises:
            OutOfDomainError: If a jump target leaves the box under the "error" policy
        """
        pts, single = GridService._as_points(grid, y)
        candidates = OperatorService._impulse_candidates(problem, grid, field_same, s, pts, Player.MAXIMIZER)
        index = np.argmax(candidates, axis=0)
        value = candidates[index, np.arange(pts.shape[0])]
        return _pack(value, index, np.full(pts.shape[0], Regime.MAX_IMPULSE.value), single)

    @staticmethod
    def min_cost_operator(problem: GameProblem, grid: TimeSpaceGrid, field_same: np.ndarray,
                          s: float, y) -> OperatorResult:
        """
        H_inf^chi on the grid: min over eta of I[V](y + g_eta) + chi, with the minimizing index.

        Raises:
            OutOfDomainError: If a jump target leaves the box under the "error" policy
        """
        pts, single = GridService._as_points(grid, y)
        candidates = OperatorService._impulse_candidates(problem, grid, field_same, s, pts, Player.MINIMIZER)
        index = np.argmin(candidates, axis=0)
        value = candidates[index, np.arange(pts.shape[0])]
        return _pack(value, index, np.full(pts.shape[0], Regime.MIN_IMPULSE.value), single)

    @staticmethod
    def select_branch(continuous: np.ndarray, phi_sup: np.ndarray, phi_inf: np.ndarray
                      ) -> Tuple[np.ndarray, np.ndarray]:
        """
        min{max[B, Phi*Hsup], Phi*Hinf} with the branch that attains it.

        The outer min is the minimizer's choice, so the min-impulse branch wins whenever it is
        strictly below the maximizer's value; otherwise max-impulse wins when strictly above B.
        """
        upper = np.maximum(continuous, phi_sup)
        value = np.minimum(upper, phi_inf)
        branch = np.where(phi_inf < upper, MIN_IMPULSE, np.where(phi_sup > continuous, MAX_IMPULSE, CONTINUOUS))
        return value, branch

    @staticmethod
    def is_terminal(grid: TimeSpaceGrid, s: float) -> bool:
        T = grid.time_nodes[-1]
        return abs(s - T) <= 1e-12 * max(1.0, abs(T))

    @staticmethod
    def bellman_map(problem: GameProblem, grid: TimeSpaceGrid, field_next: Optional[np.ndarray],
                    field_same: np.ndarray, s: float, y) -> OperatorResult:
        """
        Fixed-point map F(v) = min{max[B, Phi(h)*Hsup v], Phi(h)*Hinf v}; G(y) at s = T.

        Args:
            problem: Game instance
            grid: Grid of the fields
            field_next: Values at s + h (ignored at s = T)
            field_same: Values at s, the argument v of the impulse operators
            s: Time node
            y: Point (n,) or points (P, n)

        Returns:
            OperatorResult whose index belongs to the grid of the attained branch
        """
        pts, single = GridService._as_points(grid, y)
        if OperatorService.is_terminal(grid, s):
            value = problem.terminal(pts)
            return _pack(value, np.full(pts.shape[0], -1), np.full(pts.shape[0], Regime.TERMINAL.value), single)

        phi = problem.damping_factor(grid.h)
        ham = OperatorService.approximate_hamiltonian(problem, grid, field_next, s, pts)
        sup = OperatorService.max_cost_operator(problem, grid, field_same, s, pts)
        inf = OperatorService.min_cost_operator(problem, grid, field_same, s, pts)
        value, branch = OperatorService.select_branch(ham.value, phi * sup.value, phi * inf.value)
        index = np.choose(branch, [ham.index, sup.index, inf.index])
        return _pack(value, index, BRANCH_LABELS[branch], single)

    @staticmethod
    def obstacle_residuals(problem: GameProblem, grid: TimeSpaceGrid,
                           field: Union[ValueField, np.ndarray], s: float, y=None) -> ObstacleResiduals:
        """
        Residuals of the scheme at time s.

        Returns H_h = v - B, the lower gap v - Phi*Hsup v, the upper gap v - Phi*Hinf v and the
        composite max{min[H_h, lower gap], upper gap}, which vanishes at a solution.

        Args:
            problem: Game instance
            grid: Grid of the field
            field: ValueField or (I, J) value array
            s: A non-terminal time node
            y: Point(s); defaults to every space node

        Raises:
            ConfigurationError: If s is not a non-terminal time node
        """
        values = field.values if isinstance(field, ValueField) else np.asarray(field, dtype=float)
        i = GridService.locate_time(grid, s)
        if i >= grid.num_times - 1:
            raise ConfigurationError("Residuals are defined on time nodes before the terminal time")
        pts, single = GridService._as_points(grid, grid.nodes if y is None else y)
        s = float(grid.time_nodes[i])
        phi = problem.damping_factor(grid.h)

        v = GridService.interpolate(values[i], grid, pts)
        ham = OperatorService.approximate_hamiltonian(problem, grid, values[i + 1], s, pts)
        sup = OperatorService.max_cost_operator(problem, grid, values[i], s, pts)
        inf = OperatorService.min_cost_operator(problem, grid, values[i], s, pts)
        hjb = v - ham.value
        lower_gap = v - phi * sup.value
        upper_gap = v - phi * inf.value
        composite = np.maximum(np.minimum(hjb, lower_gap), upper_gap)
        if single and y is not None:
            return ObstacleResiduals(hjb=float(hjb[0]), lower_gap=float(lower_gap[0]),
                                     upper_gap=float(upper_gap[0]), composite=float(composite[0]))
        return ObstacleResiduals(hjb=hjb, lower_gap=lower_gap, upper_gap=upper_gap, composite=composite)

    # ------------------------------------------------------------------
    # Slice-level matrix form used by the iterative solvers
    # ------------------------------------------------------------------

    @staticmethod
    def prepare_slice(problem: GameProblem, grid: TimeSpaceGrid, slice_index: int,
                      field_next: Optional[np.ndarray] = None) -> SliceOperators:
        """
        Precompute jump-target interpolation matrices and costs for one time slice.

        Args:
            problem: Game instance
            grid: Grid of the solve
            slice_index: Non-terminal time node i
            field_next: Values at node i + 1; when given, B and theta are computed too

        Raises:
            ConfigurationError: If slice_index is the terminal node or out of range
            OutOfDomainError: If a target leaves the box under the "error" policy
        """
        if not 0 <= slice_index < grid.num_times - 1:
            raise ConfigurationError(f"Slice index {slice_index} is not a non-terminal time node")
        s = float(grid.time_nodes[slice_index])
        nodes = grid.nodes
        clamped = 0
        stacks = {}
        for player in (Player.MAXIMIZER, Player.MINIMIZER):
            weights, costs = [], []
            for k in range(problem.control_grid(player).shape[0]):
                W, moved = GridService.interpolation_matrix(grid, nodes + problem.jump(player, s, nodes, k))
                weights.append(W)
                costs.append(problem.cost(player, s, nodes, k))
                clamped += moved
            stacks[player] = (csr_matrix(vstack(weights, format="csr")), np.stack(costs))

        continuous = theta = None
        if field_next is not None:
            for k in range(problem.continuous_control_grid.shape[0]):
                _, moved = GridService.resolve_points(grid, nodes + grid.h * problem.drift(s, nodes, k))
                clamped += int(np.count_nonzero(moved))
            ham = OperatorService.approximate_hamiltonian(problem, grid, field_next, s, nodes)
            continuous, theta = ham.value, ham.index

        if clamped:
            logger.debug(
                f"Slice {slice_index}: {clamped} target(s) projected onto the box",
                extra={'custom_dimensions': {'slice': slice_index, 'clamped': clamped}},
            )

        return SliceOperators(
            index=slice_index,
            time=s,
            phi=problem.damping_factor(grid.h),
            max_weights=stacks[Player.MAXIMIZER][0],
            max_costs=stacks[Player.MAXIMIZER][1],
            min_weights=stacks[Player.MINIMIZER][0],
            min_costs=stacks[Player.MINIMIZER][1],
            continuous=continuous,
            theta=theta,
            clamped_points=clamped,
        )

    @staticmethod
    def impulse_candidates(ops: SliceOperators, player: Player, v: np.ndarray) -> np.ndarray:
        """(K, J) array of I[v](y_j + g_k) - c_k (maximizer) or + chi_k (minimizer)."""
        if Player(player) is Player.MAXIMIZER:
            return (ops.max_weights @ v).reshape(ops.max_costs.shape) - ops.max_costs
        return (ops.min_weights @ v).reshape(ops.min_costs.shape) + ops.min_costs

    @staticmethod
    def sup_operator(ops: SliceOperators, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        candidates = OperatorService.impulse_candidates(ops, Player.MAXIMIZER, v)
        index = np.argmax(candidates, axis=0)
        return candidates[index, np.arange(v.size)], index

    @staticmethod
    def inf_operator(ops: SliceOperators, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        candidates = OperatorService.impulse_candidates(ops, Player.MINIMIZER, v)
        index = np.argmin(candidates, axis=0)
        return candidates[index, np.arange(v.size)], index

    @staticmethod
    def game_operator(ops: SliceOperators, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """F(v) on the slice's nodes with branch codes."""
        if ops.continuous is None:
            raise ConfigurationError("The game operator needs the next time slice")
        sup, _ = OperatorService.sup_operator(ops, v)
        inf, _ = OperatorService.inf_operator(ops, v)
        return OperatorService.select_branch(ops.continuous, ops.phi * sup, ops.phi * inf)
