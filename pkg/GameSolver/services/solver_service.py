"""
Backward time sweep, per-slice value/policy iteration and h-refinement studies.
"""

import time
from typing import List, Optional, Sequence

import numpy as np

from GameSolver.models.game import GameProblem, Player
from GameSolver.models.grid import GridSpec, Regime, TimeSpaceGrid, ValueField
from GameSolver.models.solver import (
    BoundAudit,
    CandidateFields,
    IterationMode,
    PolicyIterationResult,
    RefinementReport,
    RefinementRow,
    SliceOperators,
    SliceStats,
    SolverConfig,
    SolveReport,
    ValueIterationResult,
)
from GameSolver.services.game_service import GameService
from GameSolver.services.grid_service import GridService
from GameSolver.services.operator_service import BRANCH_LABELS, OperatorService
from GameSolver.utils.errors import ConfigurationError
from GameSolver.utils.logger import get_logger
from GameSolver.utils.tracing import add_span_attributes, create_span

logger = get_logger(__name__)

# Relative slack when matching h against the grid step and coarse steps against the finest
STEP_MATCH_TOLERANCE = 1e-9
TREND_SLACK = 1e-12


def _frozen_policy(ops: SliceOperators, player: Player, policy: np.ndarray):
    """Per-node interpolation rows and costs of a frozen impulse policy."""
    weights = ops.min_weights if player is Player.MINIMIZER else ops.max_weights
    costs = ops.min_costs if player is Player.MINIMIZER else ops.max_costs
    nodes = np.arange(policy.size)
    return weights[policy * policy.size + nodes], costs[policy, nodes]


class SolverService:
    """Service class for solving the discrete game on a time-space grid."""

    @staticmethod
    def value_iteration(
        problem: GameProblem,
        grid: TimeSpaceGrid,
        slice_index: int,
        config: SolverConfig,
        mode: IterationMode,
        policy: Optional[np.ndarray] = None,
        initial: Optional[np.ndarray] = None,
        field_next: Optional[np.ndarray] = None,
        operators: Optional[SliceOperators] = None,
    ) -> ValueIterationResult:
        """
        Jacobi value iteration on one time slice.

        Iterates V <- Phi(h) * (I[V](y + g(policy)) + chi) for a frozen minimizer policy,
        V <- Phi(h) * (I[V](y + g(policy)) - c) for a frozen maximizer policy, the full min or max
        impulse operator, or the full game operator, until ||V_new - V||_inf < tolerance.

        Args:
            problem: Game instance
            grid: Grid of the solve
            slice_index: Non-terminal time node
            config: Tolerance and iteration cap
            mode: Right-hand side to iterate
            policy: Impulse index per node, required by the frozen-policy modes
            initial: Starting field; defaults to the continuous value B when known, zeros otherwise
            field_next: Values at the next time node, used when ``operators`` is not given
            operators: Precomputed slice operators

        Returns:
            ValueIterationResult with the last iterate; ``converged`` is False when the cap was hit
        """
        mode = IterationMode(mode)
        ops = operators or OperatorService.prepare_slice(problem, grid, slice_index, field_next)
        phi = ops.phi

        if mode in (IterationMode.POLICY_MIN, IterationMode.POLICY_MAX):
            if policy is None:
                raise ConfigurationError(f"Value iteration mode '{mode.value}' needs a policy")
            player = Player.MINIMIZER if mode is IterationMode.POLICY_MIN else Player.MAXIMIZER
            rows, costs = _frozen_policy(ops, player, np.asarray(policy, dtype=int))
            offset = costs if player is Player.MINIMIZER else -costs

            def step(v):
                return phi * (rows @ v + offset)
        elif mode is IterationMode.FULL_MIN:
            def step(v):
                return phi * OperatorService.inf_operator(ops, v)[0]
        elif mode is IterationMode.FULL_MAX:
            def step(v):
                return phi * OperatorService.sup_operator(ops, v)[0]
        else:
            def step(v):
                return OperatorService.game_operator(ops, v)[0]

        if initial is not None:
            v = np.array(initial, dtype=float)
        elif ops.continuous is not None:
            v = np.array(ops.continuous, dtype=float)
        else:
            v = np.zeros(grid.num_nodes)

        history: List[float] = []
        converged = False
        iterations = 0
        while iterations < config.max_iterations:
            new = step(v)
            iterations += 1
            change = float(np.max(np.abs(new - v)))
            if config.record_convergence:
                history.append(change)
            v = new
            if change < config.tolerance:
                converged = True
                break

        if not converged:
            logger.warning(
                f"Value iteration ({mode.value}) on slice {slice_index} hit {config.max_iterations} iterations",
                extra={'custom_dimensions': {'slice': slice_index, 'mode': mode.value}},
            )
        return ValueIterationResult(values=v, iterations=iterations, converged=converged, history=history)

    @staticmethod
    def _policy_iteration(
        problem: GameProblem,
        grid: TimeSpaceGrid,
        slice_index: int,
        config: SolverConfig,
        player: Player,
        initial_policy: Optional[np.ndarray],
        field_next: Optional[np.ndarray],
        operators: Optional[SliceOperators],
    ) -> PolicyIterationResult:
        ops = operators or OperatorService.prepare_slice(problem, grid, slice_index, field_next)
        minimizing = player is Player.MINIMIZER
        mode = IterationMode.POLICY_MIN if minimizing else IterationMode.POLICY_MAX
        pick = np.argmin if minimizing else np.argmax
        nodes = np.arange(grid.num_nodes)

        v = np.array(ops.continuous, dtype=float) if ops.continuous is not None else np.zeros(grid.num_nodes)
        if initial_policy is None:
            policy = pick(OperatorService.impulse_candidates(ops, player, v), axis=0)
        else:
            policy = np.asarray(initial_policy, dtype=int).copy()
            size = problem.control_grid(player).shape[0]
            if policy.shape != (grid.num_nodes,) or np.any((policy < 0) | (policy >= size)):
                raise ConfigurationError(f"Initial {player.value} policy does not index the impulse grid")

        value_history: List[np.ndarray] = []
        evaluations = 0
        outer = 0
        converged = False
        while outer < config.max_iterations:
            outer += 1
            # policy evaluation
            result = SolverService.value_iteration(
                problem, grid, slice_index, config, mode, policy=policy, initial=v, operators=ops
            )
            v = result.values
            evaluations += result.iterations
            value_history.append(v.copy())

            # policy improvement, keeping the incumbent on near-ties
            candidates = OperatorService.impulse_candidates(ops, player, v)
            best = pick(candidates, axis=0)
            incumbent = candidates[policy, nodes]
            chosen = candidates[best, nodes]
            keep = np.abs(incumbent - chosen) <= config.tolerance
            improved = np.where(keep, policy, best)
            if np.array_equal(improved, policy):
                converged = result.converged
                break
            policy = improved

        if not converged:
            logger.warning(
                f"Policy iteration ({player.value}) on slice {slice_index} did not settle "
                f"within {config.max_iterations} outer iterations",
                extra={'custom_dimensions': {'slice': slice_index, 'player': player.value}},
            )
        return PolicyIterationResult(
            values=v,
            policy=policy,
            outer_iterations=outer,
            evaluation_iterations=evaluations,
            converged=converged,
            value_history=value_history,
        )

    @staticmethod
    def policy_iteration_min(
        problem: GameProblem,
        grid: TimeSpaceGrid,
        slice_index: int,
        config: SolverConfig,
        initial_policy: Optional[np.ndarray] = None,
        field_next: Optional[np.ndarray] = None,
        operators: Optional[SliceOperators] = None,
    ) -> PolicyIterationResult:
        """
        Minimizer-intervention value V = Phi(h) * min_eta (I[V](y + g_eta) + chi) by policy iteration.

        The initial policy defaults to the argmin at the slice's continuous value (or zeros).
        """
        return SolverService._policy_iteration(
            problem, grid, slice_index, config, Player.MINIMIZER, initial_policy, field_next, operators
        )

    @staticmethod
    def policy_iteration_max(
        problem: GameProblem,
        grid: TimeSpaceGrid,
        slice_index: int,
        config: SolverConfig,
        initial_policy: Optional[np.ndarray] = None,
        field_next: Optional[np.ndarray] = None,
        operators: Optional[SliceOperators] = None,
    ) -> PolicyIterationResult:
        """Maximizer-intervention value V = Phi(h) * max_xi (I[V](y + g_xi) - c) by policy iteration."""
        return SolverService._policy_iteration(
            problem, grid, slice_index, config, Player.MAXIMIZER, initial_policy, field_next, operators
        )

    @staticmethod
    def bound_audit(problem: GameProblem, field: ValueField, tolerance: float) -> BoundAudit:
        """Compare ||v_h||_inf with ||f||_inf / lambda + ||G||_inf sampled on the field's grid."""
        bounds = GameService.sampled_bounds(problem, field.grid)
        budget = bounds["running_gain"] / problem.discount + bounds["terminal_gain"]
        finite = field.values[np.isfinite(field.values)]
        max_abs = float(np.max(np.abs(finite))) if finite.size else 0.0
        return BoundAudit(budget=budget, max_abs=max_abs, ok=bool(max_abs <= budget + tolerance))

    @staticmethod
    def backward_sweep(problem: GameProblem, grid: TimeSpaceGrid, config: SolverConfig) -> SolveReport:
        """
        Solve the discrete game backwards in time.

        On every slice, from the last non-terminal node down to the first: the continuous value B
        and control theta, the minimizer-intervention value by policy iteration, the
        maximizer-intervention value by policy iteration, then the published value as the fixed
        point of the game operator started from B. Impulse annotations and the regime are read
        off the published value.

        Args:
            problem: Game instance
            grid: Grid whose step equals ``config.h``
            config: Solver settings

        Returns:
            SolveReport; non-convergence and clamped interpolation become warnings

        Raises:
            ConfigurationError: If the grid does not fit the problem or the step is not admissible
            OutOfDomainError: If a target leaves the box under the "error" policy
        """
        if grid.state_dim != problem.state_dim:
            raise ConfigurationError(
                f"Grid dimension {grid.state_dim} does not match state_dim {problem.state_dim}",
                keys=["grid.space"],
            )
        if abs(grid.h - config.h) > STEP_MATCH_TOLERANCE * config.h:
            raise ConfigurationError(f"Grid step {grid.h} differs from solver.h {config.h}", keys=["solver.h"])
        if abs(grid.time_nodes[0] - problem.start_time) > STEP_MATCH_TOLERANCE or \
                abs(grid.time_nodes[-1] - problem.end_time) > STEP_MATCH_TOLERANCE:
            raise ConfigurationError("Grid time nodes do not span the problem horizon", keys=["problem.horizon"])
        phi = GameService.check_step(problem, grid.h, config.allow_large_step)

        started = time.perf_counter()
        I, J = grid.num_times, grid.num_nodes
        values = np.empty((I, J))
        values[-1] = problem.terminal(grid.nodes)
        theta = np.full((I, J), -1, dtype=int)
        xi = np.full((I, J), -1, dtype=int)
        eta = np.full((I, J), -1, dtype=int)
        regime = np.full((I, J), Regime.TERMINAL.value, dtype=object)
        cand = {name: np.full((I, J), np.nan) for name in ("continuous", "min_value", "max_value")}
        cand_policy = {name: np.full((I, J), -1, dtype=int) for name in ("continuous", "min", "max")}

        slices: List[SliceStats] = []
        warnings: List[str] = []
        clamped_total = 0
        residual_norm = 0.0
        upper_gap_max = -np.inf

        with create_span("solver.backward_sweep", {"problem": problem.name, "h": grid.h, "nodes": J, "slices": I}):
            logger.info(
                f"Backward sweep for '{problem.name}': {I} time nodes x {J} space nodes, h = {grid.h}",
                extra={'custom_dimensions': {'problem': problem.name, 'h': grid.h, 'phi': phi}},
            )
            for i in range(I - 2, -1, -1):
                ops = OperatorService.prepare_slice(problem, grid, i, values[i + 1])
                pmin = SolverService.policy_iteration_min(problem, grid, i, config, operators=ops)
                pmax = SolverService.policy_iteration_max(problem, grid, i, config, operators=ops)
                game = SolverService.value_iteration(
                    problem, grid, i, config, IterationMode.GAME, initial=ops.continuous, operators=ops
                )

                v = game.values
                values[i] = v
                sup, xi[i] = OperatorService.sup_operator(ops, v)
                inf, eta[i] = OperatorService.inf_operator(ops, v)
                _, branch = OperatorService.select_branch(ops.continuous, phi * sup, phi * inf)
                regime[i] = BRANCH_LABELS[branch]
                theta[i] = ops.theta

                cand["continuous"][i], cand_policy["continuous"][i] = ops.continuous, ops.theta
                cand["min_value"][i], cand_policy["min"][i] = pmin.values, pmin.policy
                cand["max_value"][i], cand_policy["max"][i] = pmax.values, pmax.policy

                residuals = OperatorService.obstacle_residuals(problem, grid, values, float(grid.time_nodes[i]))
                slice_residual = float(np.max(np.abs(residuals.composite)))
                residual_norm = max(residual_norm, slice_residual)
                upper_gap_max = max(upper_gap_max, float(np.max(residuals.upper_gap)))
                clamped_total += ops.clamped_points

                converged = game.converged and pmin.converged and pmax.converged
                if not converged:
                    warnings.append(
                        f"Slice {i} (s = {grid.time_nodes[i]:.12g}) did not converge within "
                        f"{config.max_iterations} iterations"
                    )
                slices.append(SliceStats(
                    index=i,
                    time=float(grid.time_nodes[i]),
                    value_iterations=game.iterations,
                    min_policy_iterations=pmin.outer_iterations,
                    min_evaluation_iterations=pmin.evaluation_iterations,
                    max_policy_iterations=pmax.outer_iterations,
                    max_evaluation_iterations=pmax.evaluation_iterations,
                    residual=slice_residual,
                    converged=converged,
                    clamped_points=ops.clamped_points,
                    residual_history=game.history,
                ))
                logger.debug(
                    f"Slice {i}: {game.iterations} game iterations, residual {slice_residual:.3e}",
                    extra={'custom_dimensions': {'slice': i, 'min_outer': pmin.outer_iterations,
                                                 'max_outer': pmax.outer_iterations}},
                )

            slices.reverse()
            field = ValueField(
                grid=grid,
                values=values,
                theta_index=theta,
                xi_index=xi,
                eta_index=eta,
                regime=regime,
                clamped=clamped_total > 0,
            )
            if clamped_total:
                warnings.append(f"{clamped_total} interpolation target(s) were projected onto the space box")
                logger.warning(
                    f"Clamped {clamped_total} interpolation target(s) during the sweep",
                    extra={'custom_dimensions': {'clamped': clamped_total}},
                )
            audit = SolverService.bound_audit(problem, field, config.tolerance)
            if not audit.ok:
                warnings.append(f"||v_h||_inf = {audit.max_abs:.12g} exceeds the bound {audit.budget:.12g}")
                logger.warning(
                    "Value field exceeds the sampled bound ||f||/lambda + ||G||",
                    extra={'custom_dimensions': audit.model_dump()},
                )

            wall_time = time.perf_counter() - started
            add_span_attributes(residual_norm=residual_norm, warnings=len(warnings))
            logger.info(
                f"Backward sweep for '{problem.name}' done: residual {residual_norm:.3e}, "
                f"{len(warnings)} warning(s), {wall_time:.3f}s",
                extra={'custom_dimensions': {'residual_norm': residual_norm, 'warnings': len(warnings)}},
            )

        return SolveReport(
            value_field=field,
            candidates=CandidateFields(
                continuous=cand["continuous"],
                continuous_policy=cand_policy["continuous"],
                min_value=cand["min_value"],
                min_policy=cand_policy["min"],
                max_value=cand["max_value"],
                max_policy=cand_policy["max"],
            ),
            slices=slices,
            residual_norm=residual_norm,
            upper_gap_max=float(upper_gap_max) if I > 1 else 0.0,
            bound_audit=audit,
            damping=phi,
            tolerance=config.tolerance,
            wall_time_seconds=wall_time,
            warnings=warnings,
        )

    @staticmethod
    def refinement_study(
        problem: GameProblem,
        grid_spec: GridSpec,
        h_list: Sequence[float],
        config: SolverConfig,
        reference_state: Optional[Sequence[float]] = None,
        reference_value: Optional[float] = None,
    ) -> RefinementReport:
        """
        Solve at a decreasing list of steps and compare with the finest solve on shared nodes.

        Args:
            problem: Game instance
            grid_spec: Space grid shared by every solve
            h_list: Strictly decreasing steps; each must be a multiple of the last one
            config: Solver settings; ``h`` is replaced per solve
            reference_state: Optional state whose value at the start time is tabulated
            reference_value: Optional analytic limit at the reference state

        Returns:
            RefinementReport; the trend uses reference errors when a reference is given

        Raises:
            ConfigurationError: If the steps are not decreasing or do not share time nodes
        """
        steps = [float(h) for h in h_list]
        if not steps:
            raise ConfigurationError("Refinement needs at least one step", keys=["refinement.h_list"])
        if any(b >= a for a, b in zip(steps, steps[1:])):
            raise ConfigurationError("Refinement steps must be strictly decreasing", keys=["refinement.h_list"])
        finest = steps[-1]
        for h in steps:
            ratio = h / finest
            if abs(ratio - round(ratio)) > STEP_MATCH_TOLERANCE * ratio:
                raise ConfigurationError(
                    f"Step {h} does not share time nodes with the finest step {finest}",
                    keys=["refinement.h_list"],
                )
        if reference_state is None and reference_value is not None:
            raise ConfigurationError("A reference value needs a reference state", keys=["refinement.reference_state"])

        with create_span("solver.refinement_study", {"problem": problem.name, "steps": len(steps)}):
            reports = []
            for h in steps:
                grid = GridService.build_from_spec(problem.horizon, h, grid_spec)
                reports.append(SolverService.backward_sweep(problem, grid, config.model_copy(update={"h": h})))

            fine = reports[-1].value_field.values
            rows: List[RefinementRow] = []
            for h, report in zip(steps, reports):
                stride = int(round(h / finest))
                error = float(np.max(np.abs(report.value_field.values - fine[::stride])))
                iterations = sum(
                    s.value_iterations + s.min_evaluation_iterations + s.max_evaluation_iterations
                    for s in report.slices
                )
                at_reference = reference_error = None
                if reference_state is not None:
                    at_reference = GridService.interpolate(report.value_field.values[0], report.value_field.grid, reference_state)
                    if reference_value is not None:
                        reference_error = abs(at_reference - reference_value)
                rows.append(RefinementRow(
                    h=h,
                    error_to_finest=error,
                    iterations=iterations,
                    reference_state_value=at_reference,
                    reference_error=reference_error,
                    bound_ok=report.bound_audit.ok,
                ))

            errors = [r.reference_error for r in rows] if reference_value is not None else \
                [r.error_to_finest for r in rows]
            trend = all(b <= a + TREND_SLACK for a, b in zip(errors, errors[1:]))
            logger.info(
                f"Refinement study for '{problem.name}' over {len(steps)} step(s): "
                f"trend {'decreasing' if trend else 'not decreasing'}",
                extra={'custom_dimensions': {'errors': errors}},
            )
        return RefinementReport(rows=rows, trend_decreasing=trend, finest_h=finest)
