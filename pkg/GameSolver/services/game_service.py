"""
Game-model diagnostics and the explicit-Euler state recursion with impulses.
"""

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from GameSolver.models.game import (
    AssumptionReport,
    AssumptionViolation,
    GameProblem,
    Player,
    TrajectoryBoundCheck,
)
from GameSolver.models.grid import BoundaryPolicy, Regime, TimeSpaceGrid
from GameSolver.models.strategy import ControlSchedule, ImpulseEvent, TrajectoryRecord
from GameSolver.services.grid_service import GridService
from GameSolver.utils.errors import ConfigurationError, OutOfDomainError
from GameSolver.utils.logger import get_logger

logger = get_logger(__name__)

DEFAULT_COST_TOLERANCE = 1e-6
TERMINAL_SLACK = 1e-12
COLLISION_TOLERANCE = 1e-12


def _pairwise_lipschitz(nodes: np.ndarray, samples: np.ndarray) -> float:
    """Largest ||F(y_a) - F(y_b)||_inf / ||y_a - y_b||_inf over node pairs."""
    if samples.ndim == 1:
        samples = samples[:, None]
    dist = np.max(np.abs(nodes[:, None, :] - nodes[None, :, :]), axis=2)
    diff = np.max(np.abs(samples[:, None, :] - samples[None, :, :]), axis=2)
    mask = dist > 0
    if not np.any(mask):
        return 0.0
    return float(np.max(diff[mask] / dist[mask]))


class GameService:
    """Service class for game-model checks and trajectory simulation."""

    @staticmethod
    def check_step(problem: GameProblem, h: float, allow_large_step: bool = False) -> float:
        """
        Check that a time step is admissible for a solve.

        Requires lambda*h <= 1/2, or lambda*h < 1 when ``allow_large_step`` is set, and
        0 < Phi(h) < 1.

        Returns:
            Phi(h)

        Raises:
            ConfigurationError: If the step is not admissible
        """
        lam_h = problem.discount * h
        if lam_h >= 1.0:
            raise ConfigurationError(
                f"lambda*h = {lam_h:.6g} must be below 1 (discount {problem.discount}, h {h})",
                keys=["solver.h"],
            )
        if lam_h > 0.5 and not allow_large_step:
            raise ConfigurationError(
                f"lambda*h = {lam_h:.6g} exceeds 1/2; reduce h or set solver.allow_large_step",
                keys=["solver.h", "solver.allow_large_step"],
            )
        phi = problem.damping_factor(h)
        if not 0.0 < phi < 1.0:
            raise ConfigurationError(f"Damping Phi(h) = {phi!r} must lie in (0, 1)", keys=["problem.damping"])
        return phi

    @staticmethod
    def sampled_bounds(problem: GameProblem, grid: TimeSpaceGrid) -> Dict[str, float]:
        """Sampled sup-norms of b, f and G over every time node, space node and control."""
        nodes = grid.nodes
        dyn, gain = 0.0, 0.0
        for s in grid.time_nodes:
            for k in range(problem.continuous_control_grid.shape[0]):
                dyn = max(dyn, float(np.max(np.abs(problem.drift(s, nodes, k)))))
                gain = max(gain, float(np.max(np.abs(problem.gain(s, nodes, k)))))
        terminal = float(np.max(np.abs(problem.terminal(nodes))))
        return {"dynamics": dyn, "running_gain": gain, "terminal_gain": terminal}

    @staticmethod
    def validate_assumptions(
        problem: GameProblem,
        sample_grid: TimeSpaceGrid,
        cost_tolerance: float = DEFAULT_COST_TOLERANCE,
        bound_limit: Optional[float] = None,
    ) -> AssumptionReport:
        """
        Audit the standing assumptions on every (time node, space node, control) sample.

        Args:
            problem: Game instance
            sample_grid: Grid whose nodes are sampled
            cost_tolerance: Impulse costs at or below this value violate the positive-infimum check
            bound_limit: Optional M; sampled bounds above it are reported as violations

        Returns:
            AssumptionReport listing every violated assumption with one witness

        Raises:
            ConfigurationError: If the grid dimension does not match the problem
        """
        if sample_grid.state_dim != problem.state_dim:
            raise ConfigurationError(
                f"Grid dimension {sample_grid.state_dim} does not match state_dim {problem.state_dim}",
                keys=["grid.space"],
            )
        nodes = sample_grid.nodes
        violations: List[AssumptionViolation] = []
        lipschitz: Dict[str, float] = {}
        non_finite: Optional[Dict] = None
        bounds = {"dynamics": 0.0, "running_gain": 0.0}
        cost_inf = np.inf
        cost_witness: Dict = {}

        def note(name: str, value: float):
            lipschitz[name] = max(lipschitz.get(name, 0.0), value)

        for s in sample_grid.time_nodes:
            s = float(s)
            for k in range(problem.continuous_control_grid.shape[0]):
                b = problem.drift(s, nodes, k)
                f = problem.gain(s, nodes, k)
                for name, values in (("dynamics", b), ("running_gain", f)):
                    if non_finite is None and not np.all(np.isfinite(values)):
                        non_finite = {"function": name, "s": s, "control_index": k}
                    bounds[name] = max(bounds[name], float(np.max(np.abs(values))))
                note("dynamics", _pairwise_lipschitz(nodes, b))
                note("running_gain", _pairwise_lipschitz(nodes, f))

            for player, jump_name, cost_name in ((Player.MAXIMIZER, "jump_max", "cost_max"),
                                                 (Player.MINIMIZER, "jump_min", "cost_min")):
                for k in range(problem.control_grid(player).shape[0]):
                    g = problem.jump(player, s, nodes, k)
                    c = problem.cost(player, s, nodes, k)
                    for name, values in ((jump_name, g), (cost_name, c)):
                        if non_finite is None and not np.all(np.isfinite(values)):
                            non_finite = {"function": name, "s": s, "control_index": k}
                    note(jump_name, _pairwise_lipschitz(nodes, g))
                    note(cost_name, _pairwise_lipschitz(nodes, c))
                    j = int(np.argmin(c))
                    if c[j] < cost_inf:
                        cost_inf = float(c[j])
                        cost_witness = {"function": cost_name, "s": s, "y": nodes[j].tolist(), "control_index": k}

        G = problem.terminal(nodes)
        terminal_bound = float(np.max(np.abs(G)))
        note("terminal_gain", _pairwise_lipschitz(nodes, G))
        if non_finite is None and not np.all(np.isfinite(G)):
            non_finite = {"function": "terminal_gain"}

        if non_finite is not None:
            violations.append(AssumptionViolation(
                assumption="finite_samples", message="Model function returned a non-finite value",
                witness=non_finite,
            ))
        for name, assumption in (("dynamics", "bounded_dynamics"), ("running_gain", "bounded_running_gain")):
            value = bounds[name]
            if not np.isfinite(value) or (bound_limit is not None and value > bound_limit):
                violations.append(AssumptionViolation(
                    assumption=assumption,
                    message=f"Sampled bound {value!r} of {name} exceeds the limit {bound_limit!r}",
                    witness={"function": name, "bound": value},
                ))
        if not cost_inf > cost_tolerance:
            violations.append(AssumptionViolation(
                assumption="positive_impulse_cost",
                message=f"Impulse cost infimum {cost_inf!r} is not above {cost_tolerance!r}",
                witness=cost_witness,
            ))

        terminal_ok, terminal_witness = GameService._terminal_no_impulse(problem, nodes, G)
        if not terminal_ok:
            violations.append(AssumptionViolation(
                assumption="no_terminal_impulse",
                message="An impulse at the terminal time would change the terminal gain",
                witness=terminal_witness,
            ))

        report = AssumptionReport(
            bound_estimate=max(bounds["dynamics"], bounds["running_gain"]),
            dynamics_bound=bounds["dynamics"],
            running_gain_bound=bounds["running_gain"],
            terminal_bound=terminal_bound,
            lipschitz_estimates=dict(sorted(lipschitz.items())),
            cost_infimum=cost_inf,
            terminal_no_impulse_ok=terminal_ok,
            violations=violations,
        )
        level = logger.warning if violations else logger.info
        level(
            f"Assumption audit for '{problem.name}': {len(violations)} violation(s)",
            extra={'custom_dimensions': {'violations': [v.assumption for v in violations],
                                         'cost_infimum': cost_inf}},
        )
        return report

    @staticmethod
    def _terminal_no_impulse(problem: GameProblem, nodes: np.ndarray, G: np.ndarray) -> Tuple[bool, Dict]:
        """sup_xi{G(y+g_xi) - c} <= G(y) <= inf_eta{G(y+g_eta) + chi} at s = T on every node."""
        T = problem.end_time
        best_max = np.full(nodes.shape[0], -np.inf)
        for k in range(problem.max_impulse_grid.shape[0]):
            target = nodes + problem.jump(Player.MAXIMIZER, T, nodes, k)
            best_max = np.maximum(best_max, problem.terminal(target) - problem.cost(Player.MAXIMIZER, T, nodes, k))
        best_min = np.full(nodes.shape[0], np.inf)
        for k in range(problem.min_impulse_grid.shape[0]):
            target = nodes + problem.jump(Player.MINIMIZER, T, nodes, k)
            best_min = np.minimum(best_min, problem.terminal(target) + problem.cost(Player.MINIMIZER, T, nodes, k))
        bad = (best_max > G + TERMINAL_SLACK) | (G > best_min + TERMINAL_SLACK)
        if not np.any(bad):
            return True, {}
        j = int(np.flatnonzero(bad)[0])
        return False, {
            "y": nodes[j].tolist(),
            "terminal_gain": float(G[j]),
            "best_max_impulse": float(best_max[j]),
            "best_min_impulse": float(best_min[j]),
        }

    # ------------------------------------------------------------------
    # State recursion
    # ------------------------------------------------------------------

    @staticmethod
    def euler_step(problem: GameProblem, s: float, y: np.ndarray, k: int, h: float) -> np.ndarray:
        """y + h*b(s, y; theta_k) for a single state y of shape (n,)."""
        return y + h * problem.drift(s, y[None, :], k)[0]

    @staticmethod
    def apply_jumps(
        problem: GameProblem, y: np.ndarray, events: Sequence[Tuple[Player, ImpulseEvent]]
    ) -> np.ndarray:
        """Sum of the jumps of all events, each evaluated at the pre-jump state."""
        total = np.zeros_like(y)
        for player, event in events:
            total = total + problem.jump(player, event.time, y[None, :], event.index)[0]
        return y + total

    @staticmethod
    def _bucket(
        problem: GameProblem, player: Player, events: Sequence[ImpulseEvent], t0: float, h: float, steps: int
    ) -> Dict[int, List[ImpulseEvent]]:
        size = problem.control_grid(player).shape[0]
        buckets: Dict[int, List[ImpulseEvent]] = {}
        for event in events:
            if event.placeholder or event.index is None:
                continue
            if not 0 <= event.index < size:
                raise ConfigurationError(f"Impulse index {event.index} outside the {player.value} grid")
            d = event.step(t0, h)
            if d < 0 or d > steps:
                raise ConfigurationError(f"Impulse time {event.time} lies outside the horizon")
            if d == steps:
                # terminal no-intervention
                logger.debug(f"Ignoring {player.value} impulse at the terminal time {event.time}")
                continue
            buckets.setdefault(d, []).append(event)
        return buckets

    @staticmethod
    def simulate_trajectory(
        problem: GameProblem,
        start: Tuple[float, Sequence[float]],
        schedule: ControlSchedule,
        h: float,
        domain: Optional[TimeSpaceGrid] = None,
    ) -> TrajectoryRecord:
        """
        Explicit-Euler state recursion with impulses, and the discrete payoff J_h.

        Every step earns h*f at the state it starts from with the scheduled control. On an interval
        with impulses the drift is skipped and the jumps of all impulses in the interval are applied
        at once. A maximizer impulse whose time equals a minimizer impulse time is suppressed with
        its cost.

        Args:
            problem: Game instance
            start: (t, x)
            schedule: Open-loop controls; ``theta`` needs one entry per time step
            h: Time step, must divide T - t
            domain: Optional grid whose box and boundary policy constrain the path

        Returns:
            TrajectoryRecord with the realized payoff

        Raises:
            ConfigurationError: If lambda*h >= 1 or the schedule is malformed
            OutOfDomainError: If the path leaves the box under the "error" policy
        """
        t0 = float(start[0])
        y = np.asarray(start[1], dtype=float).reshape(-1)
        if y.size != problem.state_dim:
            raise ConfigurationError(f"Start state has dimension {y.size}, expected {problem.state_dim}")
        decay = 1.0 - problem.discount * h
        if decay <= 0.0:
            raise ConfigurationError(f"lambda*h = {problem.discount * h:.6g} must be below 1", keys=["solver.h"])

        times = GridService.time_nodes((t0, problem.end_time), h)
        steps = times.size - 1
        if len(schedule.theta) < steps:
            raise ConfigurationError(f"Continuous timeline has {len(schedule.theta)} entries, needs {steps}")

        max_buckets = GameService._bucket(problem, Player.MAXIMIZER, schedule.max_impulses, t0, h, steps)
        min_buckets = GameService._bucket(problem, Player.MINIMIZER, schedule.min_impulses, t0, h, steps)
        min_times = [e.time for events in min_buckets.values() for e in events]

        def collides(event: ImpulseEvent) -> bool:
            return any(abs(event.time - rho) <= COLLISION_TOLERANCE * max(1.0, abs(rho)) for rho in min_times)

        def constrain(state: np.ndarray, d: int) -> np.ndarray:
            if domain is None:
                return state
            try:
                clipped, moved = GridService.resolve_points(domain, state[None, :])
            except OutOfDomainError as e:
                raise e.at_step(d)
            if moved[0]:
                clamped.append(d)
            return clipped[0]

        clamped: List[int] = []
        y = constrain(y, 0)
        states = [y.tolist()]
        regimes: List[str] = []
        payoff = 0.0

        for d in range(steps):
            s = float(times[d])
            weight = decay ** d
            mins = min_buckets.get(d, [])
            maxs = [e for e in max_buckets.get(d, []) if not collides(e)]
            k = int(schedule.theta[d])
            payoff += weight * h * float(problem.gain(s, y[None, :], k)[0])
            if mins or maxs:
                events = [(Player.MINIMIZER, e) for e in mins] + [(Player.MAXIMIZER, e) for e in maxs]
                for player, event in events:
                    cost = float(problem.cost(player, event.time, y[None, :], event.index)[0])
                    payoff += weight * cost if player is Player.MINIMIZER else -weight * cost
                y = GameService.apply_jumps(problem, y, events)
                regimes.append(Regime.MIN_IMPULSE.value if mins else Regime.MAX_IMPULSE.value)
            else:
                y = GameService.euler_step(problem, s, y, k, h)
                regimes.append(Regime.CONTINUOUS.value)
            y = constrain(y, d + 1)
            states.append(y.tolist())

        payoff += (decay ** steps) * float(problem.terminal(y[None, :])[0])
        return TrajectoryRecord(
            times=times.tolist(),
            states=states,
            regimes=regimes,
            payoff=payoff,
            clamped_steps=clamped,
        )

    @staticmethod
    def trajectory_bound(
        problem: GameProblem, record: TrajectoryRecord, dynamics_bound: float
    ) -> TrajectoryBoundCheck:
        """
        Check max ||y(s) - x||_inf <= M*(s - t) + (sum of jump magnitudes up to s).

        Args:
            problem: Game instance the record was simulated on
            record: Simulated trajectory
            dynamics_bound: Sampled bound M on ||b||_inf

        Returns:
            TrajectoryBoundCheck with the per-node bound and distance
        """
        states = np.asarray(record.states, dtype=float)
        times = np.asarray(record.times, dtype=float)
        x = states[0]
        jump_total = 0.0
        bounds, distances = [0.0], [0.0]
        for d, regime in enumerate(record.regimes):
            if regime != Regime.CONTINUOUS.value:
                jump_total += float(np.max(np.abs(states[d + 1] - states[d])))
            bounds.append(dynamics_bound * (times[d + 1] - times[0]) + jump_total)
            distances.append(float(np.max(np.abs(states[d + 1] - x))))
        excess = max(dist - bound for dist, bound in zip(distances, bounds))
        return TrajectoryBoundCheck(
            bounds=bounds,
            distances=distances,
            max_excess=float(excess),
            ok=bool(excess <= 1e-12 * max(1.0, max(bounds))),
        )
