"""
Portfolio game construction and its worst-case strategy.
"""

from typing import List, Optional, Tuple

import numpy as np

from GameSolver.models.game import GameProblem
from GameSolver.models.grid import GridSpec, Regime
from GameSolver.models.portfolio import (
    CompositionStep,
    FixedPlusProportionalCost,
    PortfolioImpulse,
    PortfolioProblem,
    PortfolioStrategyReport,
    ReturnCurveSpec,
)
from GameSolver.models.solver import SolverConfig, SolveReport
from GameSolver.models.strategy import ExtractionConfig
from GameSolver.services.grid_service import GridService
from GameSolver.services.nash_service import NashService
from GameSolver.services.solver_service import SolverService
from GameSolver.utils.errors import ConfigurationError
from GameSolver.utils.logger import get_logger
from GameSolver.utils.tracing import create_span

logger = get_logger(__name__)

# Cost of a disabled market impulse; large enough never to be chosen
PROHIBITIVE_COST = 1e9


def _return_curve(spec: ReturnCurveSpec):
    if spec.rate is not None:
        rate = float(spec.rate)
        return lambda s: rate
    times, rates = np.asarray(spec.times, dtype=float), np.asarray(spec.rates, dtype=float)
    return lambda s: float(np.interp(s, times, rates))


def _linear_cost(cost: FixedPlusProportionalCost):
    return lambda s, y, u: cost.fixed + cost.proportional * np.abs(y[:, 0])


class PortfolioService:
    """Service class for the portfolio instance of the game."""

    @staticmethod
    def simplex_grid(num_stocks: int, resolution: int) -> np.ndarray:
        """
        All weight vectors with entries k/D, k >= 0, summing to 1, in descending lexicographic order.

        Args:
            num_stocks: N
            resolution: D

        Returns:
            Array of shape (C(N+D-1, D), N)
        """
        if num_stocks < 1 or resolution < 1:
            raise ConfigurationError("Simplex grids need N >= 1 and D >= 1", keys=["portfolio.problem.weight_resolution"])

        def compositions(remaining: int, parts: int) -> List[List[int]]:
            if parts == 1:
                return [[remaining]]
            return [[k] + rest for k in range(remaining, -1, -1) for rest in compositions(remaining - k, parts - 1)]

        return np.asarray(compositions(resolution, num_stocks), dtype=float) / resolution

    @staticmethod
    def weight_grids(pp: PortfolioProblem) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(continuous, market impulse, investor impulse) weight grids."""
        if pp.weight_grid is not None:
            shared = np.asarray(pp.weight_grid, dtype=float)
        else:
            shared = PortfolioService.simplex_grid(pp.market.num_stocks, pp.weight_resolution)
        market = shared if pp.market_weight_grid is None else np.asarray(pp.market_weight_grid, dtype=float)
        investor = shared if pp.investor_weight_grid is None else np.asarray(pp.investor_weight_grid, dtype=float)
        for name, grid in (("weight_grid", shared), ("market_weight_grid", market),
                           ("investor_weight_grid", investor)):
            if grid.size == 0:
                raise ConfigurationError(f"Empty {name}", keys=[f"portfolio.problem.{name}"])
        return shared, market, investor

    @staticmethod
    def build_portfolio_game(pp: PortfolioProblem, h: float, wealth_floor: float) -> GameProblem:
        """
        Build the one-dimensional wealth game.

        b(s, w; omega) = w * omega . r(s); jumps g(s, w; omega') = w * omega' . r(s) * delta;
        f = l(w) - u(w); c and chi fixed plus proportional; G(w) = a + b*w + c*w^2.

        Args:
            pp: Portfolio problem
            h: Solver step, the default return increment delta
            wealth_floor: Lower clip of the log utility argument

        Raises:
            ConfigurationError: If a weight grid is empty or the floor is not positive
        """
        if wealth_floor <= 0:
            raise ConfigurationError("The wealth floor must be positive", keys=["portfolio.wealth.lo"])
        continuous, market_grid, investor_grid = PortfolioService.weight_grids(pp)
        curves = [_return_curve(spec) for spec in pp.market.return_curves]
        delta = h if pp.jump_increment is None else pp.jump_increment

        def returns(s: float) -> np.ndarray:
            return np.array([curve(s) for curve in curves])

        def dynamics(s, y, omega):
            return y * float(np.dot(omega, returns(s)))

        def investor_jump(s, y, omega):
            return y * float(np.dot(omega, returns(s))) * delta

        if pp.market_impulses_enabled:
            market_jump = investor_jump
            market_cost = _linear_cost(pp.market_cost or pp.transaction_cost)
        else:
            def market_jump(s, y, omega):
                return np.zeros_like(y)

            def market_cost(s, y, omega):
                return PROHIBITIVE_COST

        holding, utility = pp.holding_cost, pp.utility

        def running_gain(s, y, omega):
            w = y[:, 0]
            lost = holding.coefficient * (w ** 2 if holding.kind == "quadratic" else w)
            if utility.kind == "log":
                gained = utility.coefficient * np.log(np.maximum(w, wealth_floor))
            else:
                gained = utility.coefficient * w
            return lost - gained

        terminal = pp.terminal_cost

        def terminal_gain(y):
            w = y[:, 0]
            return terminal.a + terminal.b * w + terminal.c * w ** 2

        problem = GameProblem(
            name=pp.name,
            state_dim=1,
            continuous_control_grid=continuous,
            max_impulse_grid=market_grid,
            min_impulse_grid=investor_grid,
            dynamics=dynamics,
            jump_max=market_jump,
            jump_min=investor_jump,
            running_gain=running_gain,
            cost_max=market_cost,
            cost_min=_linear_cost(pp.investor_cost or pp.transaction_cost),
            terminal_gain=terminal_gain,
            discount=pp.discount,
            horizon=pp.horizon,
            damping=pp.damping,
        )
        logger.debug(
            f"Built portfolio game '{pp.name}' with {pp.market.num_stocks} stock(s)",
            extra={'custom_dimensions': {'weights': continuous.shape[0], 'delta': delta,
                                         'market_impulses': pp.market_impulses_enabled}},
        )
        return problem

    @staticmethod
    def solve_portfolio(
        pp: PortfolioProblem,
        grid_spec: GridSpec,
        config: SolverConfig,
        extraction: Optional[ExtractionConfig] = None,
    ) -> Tuple[SolveReport, PortfolioStrategyReport]:
        """
        Solve the portfolio game and extract the worst-case strategy from the initial wealth.

        Args:
            pp: Portfolio problem
            grid_spec: One-axis wealth grid with lo > 0
            config: Solver settings
            extraction: Forward pass options; the start state is always the initial wealth

        Returns:
            (SolveReport, PortfolioStrategyReport)

        Raises:
            ConfigurationError: If the wealth grid is not one-dimensional and strictly positive
        """
        if len(grid_spec.space) != 1:
            raise ConfigurationError("The portfolio game has a one-dimensional wealth grid", keys=["portfolio.wealth"])
        wealth = grid_spec.space[0]
        if wealth.lo <= 0:
            raise ConfigurationError("The wealth grid must be strictly positive", keys=["portfolio.wealth.lo"])

        with create_span("portfolio.solve", {"problem": pp.name, "stocks": pp.market.num_stocks}):
            problem = PortfolioService.build_portfolio_game(pp, config.h, wealth.lo)
            grid = GridService.build_from_spec(problem.horizon, config.h, grid_spec)
            report = SolverService.backward_sweep(problem, grid, config)
            strategy, record = NashService.extract_equilibrium(
                problem, grid, report, [pp.initial_wealth], config, extraction
            )

            continuous, market_grid, investor_grid = PortfolioService.weight_grids(pp)
            timeline: List[CompositionStep] = []
            for i, regime in enumerate(record.regimes):
                if regime == Regime.CONTINUOUS.value:
                    weights = continuous[strategy.continuous_timeline[i]]
                else:
                    weights = None
                timeline.append(CompositionStep(
                    time=record.times[i], wealth=record.states[i][0], regime=regime,
                    weights=None if weights is None else weights.tolist(), value=record.values[i],
                ))
            if not record.truncated:
                timeline.append(CompositionStep(
                    time=record.times[-1], wealth=record.states[-1][0], regime=Regime.TERMINAL.value,
                    value=record.values[-1],
                ))

            def impulses(events, weights):
                return [PortfolioImpulse(time=e.time, weights=weights[e.index].tolist())
                        for e in events if not e.placeholder and e.index is not None]

            market_impulses = impulses(strategy.max_impulses, market_grid)
            investor_impulses = impulses(strategy.min_impulses, investor_grid)
            # impulse rows carry the impulse composition
            by_time = {
                Regime.MAX_IMPULSE.value: {e.time: e.weights for e in market_impulses},
                Regime.MIN_IMPULSE.value: {e.time: e.weights for e in investor_impulses},
            }
            for step in timeline:
                if step.regime in by_time:
                    step.weights = list(by_time[step.regime][step.time])

            value = GridService.interpolate(report.value_field.values[0], grid, [pp.initial_wealth])
            strategy_report = PortfolioStrategyReport(
                initial_wealth=pp.initial_wealth,
                worst_case_value=value,
                payoff=record.payoff,
                timeline=timeline,
                market_impulses=market_impulses,
                investor_impulses=investor_impulses,
                truncated=record.truncated,
                diagnostic=record.diagnostic,
            )
            logger.info(
                f"Portfolio '{pp.name}': worst-case value {value:.10g} at wealth {pp.initial_wealth}",
                extra={'custom_dimensions': {'market_impulses': len(market_impulses),
                                             'investor_impulses': len(investor_impulses)}},
            )
        return report, strategy_report
