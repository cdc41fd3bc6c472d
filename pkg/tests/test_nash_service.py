import numpy as np
import pytest

from conftest import make_problem
from oracle import brute_force_values, random_game
from GameSolver.models.grid import Regime
from GameSolver.models.solver import SolverConfig
from GameSolver.models.strategy import ControlSchedule, ExtractionConfig, ImpulseEvent, VerificationConfig
from GameSolver.services.grid_service import GridService
from GameSolver.services.nash_service import NashService
from GameSolver.services.solver_service import SolverService
from GameSolver.utils.errors import ConfigurationError


@pytest.fixture
def lattice_solution(lattice_problem, lattice_grid, tight_config):
    return SolverService.backward_sweep(lattice_problem, lattice_grid, tight_config)


def drain_problem():
    """f = 10y, a cheap minimizer jump of -1 and a priced-out maximizer."""
    return make_problem(
        running_gain=lambda s, y, u: 10.0 * y[:, 0],
        max_impulses=((1.0,),),
        min_impulses=((-1.0,),),
        cost_max=lambda s, y, u: np.full(y.shape[0], 1e6),
        cost_min=lambda s, y, u: np.full(y.shape[0], 0.01),
    )


def test_priced_out_impulses_leave_only_placeholders(lattice_problem, lattice_grid, tight_config, lattice_solution):
    strategy, record = NashService.extract_equilibrium(
        lattice_problem, lattice_grid, lattice_solution, [1.0], tight_config
    )
    assert [e.placeholder for e in strategy.max_impulses] == [True]
    assert [e.placeholder for e in strategy.min_impulses] == [True]
    assert strategy.max_impulses[0].index is None
    assert None not in strategy.continuous_timeline
    assert set(record.regimes) == {Regime.CONTINUOUS.value}
    assert len(record.states) == lattice_grid.num_times
    assert record.payoff == pytest.approx(lattice_solution.value_field.values[0][4], abs=1e-9)


def test_realized_values_follow_the_field(lattice_problem, lattice_grid, tight_config, lattice_solution):
    _, record = NashService.extract_equilibrium(
        lattice_problem, lattice_grid, lattice_solution, [1.0], tight_config
    )
    values = lattice_solution.value_field.values
    for i, (state, realized) in enumerate(zip(record.states, record.values)):
        expected = GridService.interpolate(values[i], lattice_grid, state)
        assert realized == pytest.approx(expected, abs=1e-9)


def test_minimizer_impulses_at_the_first_node():
    problem = drain_problem()
    grid = GridService.build_grid((0.0, 1.0), 0.25, [(0.0, 2.0, 5)], "clamp")
    config = SolverConfig(h=0.25, tolerance=1e-12)
    report = SolverService.backward_sweep(problem, grid, config)
    phi = problem.damping_factor(0.25)
    assert report.value_field.values[0][2] == pytest.approx(phi * 0.01, abs=1e-10)
    assert report.value_field.regime[0][2] == Regime.MIN_IMPULSE.value

    strategy, record = NashService.extract_equilibrium(problem, grid, report, [1.0], config)
    real = [e for e in strategy.min_impulses if not e.placeholder]
    assert [(e.time, e.index) for e in real] == [(0.0, 0)]
    assert strategy.continuous_timeline[0] is None
    assert record.regimes[0] == Regime.MIN_IMPULSE.value
    assert record.states[1] == [0.0]
    assert record.values[0] == pytest.approx(phi * 0.01, abs=1e-10)
    # the impulse consumes its time step: J_h charges chi undamped and still earns h*f(1) on it
    assert record.payoff == pytest.approx(0.01 + 0.25 * 10.0, abs=1e-12)


def test_evaluate_payoff_closed_forms():
    h = 0.5
    gain = make_problem(running_gain=lambda s, y, u: np.ones(y.shape[0]))
    assert NashService.evaluate_payoff(gain, (0.0, [1.0]), ControlSchedule(theta=[0, 0]), h) == pytest.approx(0.75)

    schedule = ControlSchedule(theta=[0, 0], min_impulses=[ImpulseEvent(time=0.0, index=0)])
    charged = make_problem(cost_min=lambda s, y, u: np.full(y.shape[0], 2.0))
    assert NashService.evaluate_payoff(charged, (0.0, [1.0]), schedule, h) == pytest.approx(2.0)


def test_impulse_steps_still_earn_the_running_gain():
    stationary = lambda s, y, u: np.zeros_like(y)
    problem = make_problem(running_gain=lambda s, y, u: np.ones(y.shape[0]), jump_min=stationary)
    schedule = ControlSchedule(theta=[0, 0], min_impulses=[ImpulseEvent(time=0.0, index=0)])
    # h*f on both steps, chi at step 0
    assert NashService.evaluate_payoff(problem, (0.0, [1.0]), schedule, 0.5) == pytest.approx(0.5 * (1.0 + 0.5) + 1.0)


def test_colliding_maximizer_impulse_is_suppressed(zero_problem):
    schedule = ControlSchedule(
        theta=[0] * 4,
        max_impulses=[ImpulseEvent(time=0.25, index=0)],
        min_impulses=[ImpulseEvent(time=0.25, index=0)],
    )
    payoff = NashService.evaluate_payoff(zero_problem, (0.0, [1.0]), schedule, 0.25)
    assert payoff == pytest.approx(0.75)


def test_replaying_the_strategy_reproduces_the_payoff(lattice_problem, lattice_grid, tight_config, lattice_solution):
    strategy, record = NashService.extract_equilibrium(
        lattice_problem, lattice_grid, lattice_solution, [1.0], tight_config
    )
    replay = NashService.evaluate_payoff(
        lattice_problem, (0.0, record.states[0]), strategy.schedule(), lattice_grid.h, domain=lattice_grid
    )
    assert replay == record.payoff


def test_lattice_equilibrium_audit(lattice_problem, lattice_grid, tight_config, lattice_solution):
    expected = brute_force_values(lattice_problem, lattice_grid.time_nodes, lattice_grid.space_axes[0], tol=1e-13)
    np.testing.assert_allclose(lattice_solution.value_field.values, expected, rtol=0, atol=1e-8)

    verification = VerificationConfig(deviation_budget=100, tolerance=1e-6, seed=7)
    report = NashService.verify_equilibrium(
        lattice_problem, lattice_grid, lattice_solution, [1.0], tight_config, verification
    )
    assert report.passed
    assert report.value_check_passed
    assert report.equilibrium_gap <= 1e-6
    assert report.deviations_tested == {"max": 100, "min": 100}
    assert report.violations == 0
    assert report.skipped == 0
    assert 0 < len(report.worst_max) <= 5
    assert all(d.improvement <= 1e-6 for d in report.worst_max + report.worst_min)


@pytest.mark.parametrize("seed", range(6))
def test_equilibrium_audit_on_random_games(seed):
    problem, grid = random_game(seed)
    config = SolverConfig(h=0.25, tolerance=1e-11)
    report = SolverService.backward_sweep(problem, grid, config)
    # impulses take a whole step in J_h and none in the scheme, so agreement is first order in h
    tolerance = 3.0 * grid.h
    verification = VerificationConfig(deviation_budget=100, tolerance=tolerance, seed=7)
    audit = NashService.verify_equilibrium(problem, grid, report, [1.0], config, verification)
    assert audit.deviations_tested == {"max": 100, "min": 100}
    assert audit.equilibrium_gap <= tolerance
    assert all(d.improvement <= tolerance for d in audit.worst_max + audit.worst_min)
    assert audit.passed


def test_audit_is_reproducible(lattice_problem, lattice_grid, tight_config, lattice_solution):
    verification = VerificationConfig(deviation_budget=20, seed=3)
    first = NashService.verify_equilibrium(lattice_problem, lattice_grid, lattice_solution, [1.0], tight_config, verification)
    second = NashService.verify_equilibrium(lattice_problem, lattice_grid, lattice_solution, [1.0], tight_config, verification)
    assert first.model_dump() == second.model_dump()


def test_gratuitous_minimizer_impulse_costs_the_minimizer(lattice_problem, lattice_grid, tight_config, lattice_solution):
    strategy, record = NashService.extract_equilibrium(
        lattice_problem, lattice_grid, lattice_solution, [1.0], tight_config
    )
    schedule = strategy.schedule()
    schedule.min_impulses.append(ImpulseEvent(time=0.5, index=1))
    deviated = NashService.evaluate_payoff(lattice_problem, (0.0, [1.0]), schedule, 0.25, domain=lattice_grid)
    assert deviated > record.payoff + 1.0


def test_zero_model_audit_passes(zero_problem, unit_grid, tight_config):
    report = SolverService.backward_sweep(zero_problem, unit_grid, tight_config)
    audit = NashService.verify_equilibrium(
        zero_problem, unit_grid, report, [1.0], tight_config, VerificationConfig(seed=1)
    )
    assert audit.passed
    assert audit.equilibrium_payoff == 0.0
    assert audit.deviations_tested == {"max": 100, "min": 100}


def overshoot_problem():
    """Node targets stay in [0, 1] while interior points overshoot; jumps are stationary."""
    stationary = lambda s, y, u: np.zeros_like(y)
    return make_problem(dynamics=lambda s, y, u: 16.0 * y * (1.0 - y), jump_max=stationary, jump_min=stationary)


def test_path_leaving_the_box_is_truncated():
    problem = overshoot_problem()
    grid = GridService.build_grid((0.0, 1.0), 0.25, [(0.0, 1.0, 2)])
    config = SolverConfig(h=0.25)
    report = SolverService.backward_sweep(problem, grid, config)
    strategy, record = NashService.extract_equilibrium(problem, grid, report, [0.5], config)
    assert record.truncated
    assert record.payoff is None
    assert "step 0" in record.diagnostic
    assert record.states == [[0.5]]
    assert strategy.standby_timeline == []


def test_truncated_audit_fails_with_diagnostic():
    problem = overshoot_problem()
    grid = GridService.build_grid((0.0, 1.0), 0.25, [(0.0, 1.0, 2)])
    config = SolverConfig(h=0.25)
    report = SolverService.backward_sweep(problem, grid, config)
    audit = NashService.verify_equilibrium(problem, grid, report, [0.5], config)
    assert not audit.passed
    assert audit.equilibrium_payoff is None
    assert audit.diagnostic


def test_start_state_is_validated(lattice_problem, lattice_grid, tight_config, lattice_solution):
    with pytest.raises(ConfigurationError):
        NashService.extract_equilibrium(lattice_problem, lattice_grid, lattice_solution, [2.5], tight_config)
    with pytest.raises(ConfigurationError):
        NashService.extract_equilibrium(lattice_problem, lattice_grid, lattice_solution, [1.0, 1.0], tight_config)


def test_nearest_node_mode_snaps_the_start(lattice_problem, lattice_grid, tight_config, lattice_solution):
    _, record = NashService.extract_equilibrium(
        lattice_problem, lattice_grid, lattice_solution, [0.9], tight_config, ExtractionConfig(nearest_node=True)
    )
    assert record.states[0] == [1.0]


def test_placeholder_indices_are_recorded_and_inert(lattice_problem, lattice_grid, tight_config, lattice_solution):
    extraction = ExtractionConfig(initial_max_impulse=1, initial_min_impulse=0)
    strategy, record = NashService.extract_equilibrium(
        lattice_problem, lattice_grid, lattice_solution, [1.0], tight_config, extraction
    )
    assert (strategy.max_impulses[0].index, strategy.max_impulses[0].placeholder) == (1, True)
    assert (strategy.min_impulses[0].index, strategy.min_impulses[0].placeholder) == (0, True)
    assert record.payoff == pytest.approx(lattice_solution.value_field.values[0][4], abs=1e-9)
