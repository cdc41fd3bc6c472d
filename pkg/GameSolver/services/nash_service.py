"""
Forward extraction of the equilibrium controls, the discrete payoff J_h and the empirical
equilibrium audit.
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np

from GameSolver.models.game import GameProblem, Player
from GameSolver.models.grid import Regime, TimeSpaceGrid
from GameSolver.models.solver import SolverConfig, SolveReport
from GameSolver.models.strategy import (
    ControlSchedule,
    ExtractionConfig,
    ImpulseEvent,
    NashStrategy,
    NEDeviation,
    NEReport,
    TrajectoryRecord,
    VerificationConfig,
)
from GameSolver.services.game_service import GameService
from GameSolver.services.grid_service import GridService
from GameSolver.services.operator_service import OperatorService
from GameSolver.utils.errors import ConfigurationError, OutOfDomainError
from GameSolver.utils.logger import get_logger
from GameSolver.utils.tracing import add_span_attributes, add_span_event, create_span

logger = get_logger(__name__)

MAX_DEVIATIONS = ("theta_perturb", "impulse_add", "impulse_remove", "impulse_shift", "impulse_resize")
MIN_DEVIATIONS = ("impulse_add", "impulse_remove", "impulse_shift", "impulse_resize")


class NashService:
    """Service class for equilibrium extraction and verification."""

    @staticmethod
    def _start_point(grid: TimeSpaceGrid, start_state: Sequence[float], nearest: bool) -> np.ndarray:
        x = np.asarray(start_state, dtype=float).reshape(-1)
        if x.size != grid.state_dim:
            raise ConfigurationError(
                f"Start state has dimension {x.size}, expected {grid.state_dim}", keys=["extraction.start_state"]
            )
        if np.any(x < grid.lower) or np.any(x > grid.upper):
            raise ConfigurationError(
                f"Start state {x.tolist()} lies outside the space box", keys=["extraction.start_state"]
            )
        if nearest:
            x = grid.nodes[GridService.nearest_node(grid, x)].copy()
        return x

    @staticmethod
    def extract_equilibrium(
        problem: GameProblem,
        grid: TimeSpaceGrid,
        report: SolveReport,
        start_state: Sequence[float],
        config: SolverConfig,
        extraction: Optional[ExtractionConfig] = None,
    ) -> Tuple[NashStrategy, TrajectoryRecord]:
        """
        Walk forward from (t, x) and read the equilibrium controls off the solved field.

        At each node the minimizer impulses when max[B, Phi*Hsup] > Phi*Hinf + band, otherwise
        the maximizer impulses when B < Phi*Hsup - band, otherwise the continuous step with the
        argmax control is taken. B uses the next slice, the impulse operators the current one,
        all evaluated at the path point (or its nearest node in nearest-node mode).

        Args:
            problem: Game instance the report was solved for
            grid: Grid of the solve
            report: Backward sweep result
            start_state: Initial state x
            config: Solver settings; ``switch_band`` is the deadband
            extraction: Placeholder indices and nearest-node mode

        Returns:
            (NashStrategy, TrajectoryRecord); a path that leaves the box under the "error" policy
            yields a truncated record with a diagnostic and no payoff

        Raises:
            ConfigurationError: If the start state does not fit the grid
        """
        extraction = extraction or ExtractionConfig()
        values = report.value_field.values
        h = grid.h
        t0 = float(grid.time_nodes[0])
        phi = problem.damping_factor(h)
        band = config.switch_band
        y = NashService._start_point(grid, start_state, extraction.nearest_node)

        max_impulses = [ImpulseEvent(time=t0, index=extraction.initial_max_impulse, placeholder=True)]
        min_impulses = [ImpulseEvent(time=t0, index=extraction.initial_min_impulse, placeholder=True)]
        continuous: List[Optional[int]] = []
        standby: List[int] = []
        states = [y.tolist()]
        regimes: List[str] = []
        realized: List[Optional[float]] = []
        clamped: List[int] = []
        truncated, diagnostic = False, None

        with create_span("nash.extract_equilibrium", {"problem": problem.name, "start": str(y.tolist())}):
            for i in range(grid.num_times - 1):
                s = float(grid.time_nodes[i])
                query = grid.nodes[GridService.nearest_node(grid, y)] if extraction.nearest_node else y
                try:
                    ham = OperatorService.approximate_hamiltonian(problem, grid, values[i + 1], s, query)
                    sup = OperatorService.max_cost_operator(problem, grid, values[i], s, query)
                    inf = OperatorService.min_cost_operator(problem, grid, values[i], s, query)
                except OutOfDomainError as e:
                    truncated, diagnostic = True, str(e.at_step(i))
                    break
                standby.append(ham.index)

                if max(ham.value, phi * sup.value) > phi * inf.value + band:
                    min_impulses.append(ImpulseEvent(time=s, index=inf.index))
                    step = GameService.apply_jumps(problem, y, [(Player.MINIMIZER, min_impulses[-1])])
                    regime, value = Regime.MIN_IMPULSE, phi * inf.value
                    continuous.append(None)
                elif ham.value < phi * sup.value - band:
                    max_impulses.append(ImpulseEvent(time=s, index=sup.index))
                    step = GameService.apply_jumps(problem, y, [(Player.MAXIMIZER, max_impulses[-1])])
                    regime, value = Regime.MAX_IMPULSE, phi * sup.value
                    continuous.append(None)
                else:
                    step = GameService.euler_step(problem, s, y, ham.index, h)
                    regime, value = Regime.CONTINUOUS, ham.value
                    continuous.append(ham.index)
                regimes.append(regime.value)
                realized.append(float(value))

                try:
                    moved_to, moved = GridService.resolve_points(grid, step[None, :])
                except OutOfDomainError as e:
                    truncated, diagnostic = True, str(e.at_step(i + 1))
                    break
                if moved[0]:
                    clamped.append(i + 1)
                y = moved_to[0]
                states.append(y.tolist())

            strategy = NashStrategy(
                continuous_timeline=continuous,
                standby_timeline=standby,
                max_impulses=max_impulses,
                min_impulses=min_impulses,
            )
            payoff = None
            if truncated:
                logger.warning(
                    f"Equilibrium path for '{problem.name}' left the space box: {diagnostic}",
                    extra={'custom_dimensions': {'steps_completed': len(regimes)}},
                )
            else:
                realized.append(float(problem.terminal(y[None, :])[0]))
                payoff = NashService.evaluate_payoff(
                    problem, (t0, states[0]), strategy.schedule(), h, domain=grid
                )
                add_span_attributes(payoff=payoff)

            record = TrajectoryRecord(
                times=grid.time_nodes[:len(states)].tolist(),
                states=states,
                regimes=regimes,
                values=realized,
                payoff=payoff,
                truncated=truncated,
                diagnostic=diagnostic,
                clamped_steps=clamped,
            )
            logger.info(
                f"Extracted equilibrium for '{problem.name}': {len(max_impulses) - 1} maximizer and "
                f"{len(min_impulses) - 1} minimizer impulse(s)",
                extra={'custom_dimensions': {'payoff': payoff, 'truncated': truncated}},
            )
        return strategy, record

    @staticmethod
    def evaluate_payoff(
        problem: GameProblem,
        start: Tuple[float, Sequence[float]],
        schedule: ControlSchedule,
        h: float,
        domain: Optional[TimeSpaceGrid] = None,
    ) -> float:
        """
        Discrete payoff J_h of explicit control lists.

        J_h = sum_d (1-lambda*h)^d * [h*f + sum chi - sum c at step d] + (1-lambda*h)^N * G(y_N),
        with maximizer impulses colliding with a minimizer impulse suppressed.

        Raises:
            OutOfDomainError: If the path leaves ``domain`` under the "error" policy
        """
        return GameService.simulate_trajectory(problem, start, schedule, h, domain=domain).payoff

    @staticmethod
    def _deviate(
        rng: np.random.Generator,
        schedule: ControlSchedule,
        player: Player,
        kind: str,
        grid_size: int,
        theta_size: int,
        times: np.ndarray,
    ) -> Tuple[ControlSchedule, str, str]:
        """One unilateral deviation of ``player``; falls back to ``impulse_add`` when ``kind`` has nothing to act on."""
        deviated = schedule.model_copy(deep=True)
        events = deviated.max_impulses if player is Player.MAXIMIZER else deviated.min_impulses
        real = [k for k, e in enumerate(events) if not e.placeholder and e.index is not None]
        steps = times.size - 1

        if kind == "theta_perturb" and theta_size > 1:
            d = int(rng.integers(steps))
            old = deviated.theta[d]
            new = int(rng.choice([k for k in range(theta_size) if k != old]))
            deviated.theta[d] = new
            return deviated, kind, f"theta at node {d}: {old} -> {new}"
        if kind == "impulse_remove" and real:
            k = real[int(rng.integers(len(real)))]
            removed = events.pop(k)
            return deviated, kind, f"remove impulse at {removed.time:.12g}"
        if kind == "impulse_shift" and real and steps > 1:
            k = real[int(rng.integers(len(real)))]
            old = events[k].time
            choices = [float(s) for s in times[:-1] if abs(s - old) > 1e-12]
            events[k] = events[k].model_copy(update={"time": float(rng.choice(choices))})
            return deviated, kind, f"shift impulse {old:.12g} -> {events[k].time:.12g}"
        if kind == "impulse_resize" and real and grid_size > 1:
            k = real[int(rng.integers(len(real)))]
            old = events[k].index
            new = int(rng.choice([j for j in range(grid_size) if j != old]))
            events[k] = events[k].model_copy(update={"index": new})
            return deviated, kind, f"resize impulse at {events[k].time:.12g}: {old} -> {new}"

        d = int(rng.integers(steps))
        index = int(rng.integers(grid_size))
        events.append(ImpulseEvent(time=float(times[d]), index=index))
        events.sort(key=lambda e: (not e.placeholder, e.time))
        return deviated, "impulse_add", f"add impulse {index} at {times[d]:.12g}"

    @staticmethod
    def verify_equilibrium(
        problem: GameProblem,
        grid: TimeSpaceGrid,
        report: SolveReport,
        start_state: Sequence[float],
        config: SolverConfig,
        verification: Optional[VerificationConfig] = None,
        extraction: Optional[ExtractionConfig] = None,
    ) -> NEReport:
        """
        Empirical equilibrium audit.

        Checks |J_h(psi*, v*) - v_h(t, x)| <= tol, then plays ``deviation_budget`` seeded unilateral
        deviations per player drawn from the control grids and checks that none improves the
        deviator's payoff by more than tol. Deviations that leave the box under the "error"
        policy are skipped.

        Returns:
            NEReport; a failing check is a result, never an exception
        """
        verification = verification or VerificationConfig()
        seed = 0 if verification.seed is None else verification.seed
        tol = verification.tolerance

        with create_span("nash.verify_equilibrium", {"problem": problem.name, "seed": seed}):
            strategy, record = NashService.extract_equilibrium(
                problem, grid, report, start_state, config, extraction
            )
            start = np.asarray(record.states[0], dtype=float)
            value_at_start = GridService.interpolate(report.value_field.values[0], grid, start)
            if record.truncated:
                return NEReport(
                    passed=False, value_at_start=value_at_start, equilibrium_payoff=None,
                    equilibrium_gap=None, value_check_passed=False, tolerance=tol, seed=seed,
                    diagnostic=record.diagnostic,
                )

            base = record.payoff
            gap = abs(base - value_at_start)
            schedule = strategy.schedule()
            times = grid.time_nodes
            t0 = float(times[0])
            rng = np.random.default_rng(seed)
            theta_size = problem.continuous_control_grid.shape[0]

            tested = {Player.MAXIMIZER.value: 0, Player.MINIMIZER.value: 0}
            worst = {Player.MAXIMIZER: [], Player.MINIMIZER: []}
            violations = skipped = 0
            for player, kinds in ((Player.MAXIMIZER, MAX_DEVIATIONS), (Player.MINIMIZER, MIN_DEVIATIONS)):
                grid_size = problem.control_grid(player).shape[0]
                for _ in range(verification.deviation_budget):
                    kind = kinds[int(rng.integers(len(kinds)))]
                    deviated, kind, description = NashService._deviate(
                        rng, schedule, player, kind, grid_size, theta_size, times
                    )
                    tested[player.value] += 1
                    try:
                        payoff = NashService.evaluate_payoff(problem, (t0, start), deviated, grid.h, domain=grid)
                    except OutOfDomainError:
                        skipped += 1
                        worst[player].append(NEDeviation(
                            player=player.value, kind=kind, description=description, feasible=False,
                        ))
                        continue
                    improvement = payoff - base if player is Player.MAXIMIZER else base - payoff
                    if improvement > tol:
                        violations += 1
                        add_span_event("ne.violation", {"player": player.value, "kind": kind})
                    worst[player].append(NEDeviation(
                        player=player.value, kind=kind, description=description,
                        payoff=payoff, improvement=improvement,
                    ))

            def ranked(items: List[NEDeviation]) -> List[NEDeviation]:
                feasible = [d for d in items if d.feasible]
                feasible.sort(key=lambda d: d.improvement, reverse=True)
                return feasible[:verification.worst_count]

            value_ok = gap <= tol
            result = NEReport(
                passed=bool(value_ok and violations == 0),
                value_at_start=value_at_start,
                equilibrium_payoff=base,
                equilibrium_gap=gap,
                value_check_passed=value_ok,
                tolerance=tol,
                seed=seed,
                deviations_tested=tested,
                violations=violations,
                skipped=skipped,
                worst_max=ranked(worst[Player.MAXIMIZER]),
                worst_min=ranked(worst[Player.MINIMIZER]),
            )
            level = logger.info if result.passed else logger.warning
            level(
                f"Equilibrium audit for '{problem.name}': {'passed' if result.passed else 'failed'} "
                f"(gap {gap:.3e}, {violations} violation(s), {skipped} skipped)",
                extra={'custom_dimensions': {'seed': seed, 'tested': tested}},
            )
        return result
