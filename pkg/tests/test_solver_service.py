import math

import numpy as np
import pytest

from conftest import make_problem
from oracle import brute_force_values, random_game
from GameSolver.config import get_benchmark_path, list_benchmarks, load_run_config
from GameSolver.models.game import DampingSpec
from GameSolver.models.grid import GridSpec, Regime
from GameSolver.models.solver import IterationMode, SolverConfig
from GameSolver.services.catalog_service import CatalogService
from GameSolver.services.grid_service import GridService
from GameSolver.services.operator_service import OperatorService
from GameSolver.services.portfolio_service import PortfolioService
from GameSolver.services.solver_service import SolverService
from GameSolver.utils.errors import ConfigurationError

PRICED_OUT = 1e6
EPS = 1e-8


def priced_out_problem(**kwargs):
    return make_problem(
        running_gain=lambda s, y, u: np.ones(y.shape[0]),
        cost_max=lambda s, y, u: np.full(y.shape[0], PRICED_OUT),
        cost_min=lambda s, y, u: np.full(y.shape[0], PRICED_OUT),
        **kwargs,
    )


def stationary_problem(min_costs=(1.0,), max_costs=(1.0,), h=0.25):
    """g = 0 with Phi(h) = 0.9 exactly through the exponential rate -ln(0.9)/h."""
    stationary = lambda s, y, u: np.zeros_like(y)
    min_table = dict(zip(range(len(min_costs)), min_costs))
    max_table = dict(zip(range(len(max_costs)), max_costs))
    return make_problem(
        min_impulses=[[float(k + 1)] for k in range(len(min_costs))],
        max_impulses=[[float(k + 1)] for k in range(len(max_costs))],
        jump_max=stationary,
        jump_min=stationary,
        cost_min=lambda s, y, u: np.full(y.shape[0], min_table[int(u[0]) - 1]),
        cost_max=lambda s, y, u: np.full(y.shape[0], max_table[int(u[0]) - 1]),
        damping=DampingSpec(kind="exponential", rate=-math.log(0.9) / h),
    )


def benchmark_instance(name):
    """(problem, grid, solver config) of a shipped benchmark."""
    config = load_run_config(get_benchmark_path(name))
    if config.portfolio is not None:
        section = config.portfolio
        problem = PortfolioService.build_portfolio_game(section.problem, config.solver.h, section.wealth.lo)
        grid = GridService.build_from_spec(problem.horizon, config.solver.h, section.grid_spec())
    else:
        problem = CatalogService.build_problem(config.problem)
        grid = GridService.build_from_spec(problem.horizon, config.solver.h, config.grid)
    return problem, grid, config.solver


def test_zero_model_sweep(zero_problem, unit_grid, tight_config):
    report = SolverService.backward_sweep(zero_problem, unit_grid, tight_config)
    np.testing.assert_array_equal(report.value_field.values, 0.0)
    assert set(report.value_field.regime[:-1].ravel()) == {Regime.CONTINUOUS.value}
    assert set(report.value_field.regime[-1]) == {Regime.TERMINAL.value}
    assert report.residual_norm == 0.0
    assert report.warnings == []


def test_unit_gain_two_steps():
    grid = GridService.build_grid((0.0, 1.0), 0.5, [(0.0, 2.0, 5)], "clamp")
    report = SolverService.backward_sweep(priced_out_problem(), grid, SolverConfig(h=0.5, tolerance=1e-12))
    np.testing.assert_allclose(report.value_field.values[0], 0.75, rtol=0, atol=1e-12)


def test_constant_gain_closed_form():
    problem, grid, config = benchmark_instance("constant_gain")
    report = SolverService.backward_sweep(problem, grid, config)
    h = grid.h
    closed_form = (1.0 - (1.0 - h) ** round(1.0 / h)) / 1.0
    np.testing.assert_allclose(report.value_field.values[0], closed_form, rtol=0, atol=1e-12)


def test_discount_consistency_with_terminal_gain():
    grid = GridService.build_grid((0.0, 1.0), 0.125, [(0.0, 1.0, 3)], "clamp")
    problem = priced_out_problem(terminal_gain=lambda y: np.full(y.shape[0], 2.0), discount=2.0)
    report = SolverService.backward_sweep(problem, grid, SolverConfig(h=0.125, tolerance=1e-12))
    decay = 1.0 - 2.0 * 0.125
    expected = 0.125 * sum(decay ** d for d in range(8)) + 2.0 * decay ** 8
    np.testing.assert_allclose(report.value_field.values[0], expected, rtol=0, atol=1e-12)


@pytest.mark.parametrize("mode,expected", [(IterationMode.FULL_MIN, 9.0), (IterationMode.FULL_MAX, -9.0)])
def test_value_iteration_affine_fixed_point(unit_grid, mode, expected):
    problem = stationary_problem()
    assert problem.damping_factor(0.25) == pytest.approx(0.9, abs=1e-15)
    config = SolverConfig(h=0.25, tolerance=1e-12)
    result = SolverService.value_iteration(problem, unit_grid, 0, config, mode)
    assert result.converged
    np.testing.assert_allclose(result.values, expected, rtol=0, atol=EPS)


def test_value_iteration_geometric_envelope(unit_grid):
    problem = stationary_problem()
    ops = OperatorService.prepare_slice(problem, unit_grid, 0)
    initial_error = 9.0
    for k in range(1, 60):
        config = SolverConfig(h=0.25, tolerance=1e-14, max_iterations=k)
        result = SolverService.value_iteration(
            problem, unit_grid, 0, config, IterationMode.FULL_MIN, operators=ops
        )
        assert result.iterations == k
        assert np.max(np.abs(result.values - 9.0)) <= 0.9 ** k * initial_error + 1e-12


def test_value_iteration_records_history(unit_grid):
    problem = stationary_problem()
    config = SolverConfig(h=0.25, tolerance=1e-10, record_convergence=True)
    result = SolverService.value_iteration(problem, unit_grid, 0, config, IterationMode.FULL_MIN)
    assert len(result.history) == result.iterations
    assert result.history[-1] < 1e-10
    assert all(b <= a + 1e-15 for a, b in zip(result.history, result.history[1:]))


def test_frozen_policy_needs_a_policy(unit_grid):
    with pytest.raises(ConfigurationError):
        SolverService.value_iteration(stationary_problem(), unit_grid, 0, SolverConfig(h=0.25), IterationMode.POLICY_MIN)


def test_value_iteration_cap_returns_last_iterate(unit_grid):
    result = SolverService.value_iteration(
        stationary_problem(), unit_grid, 0, SolverConfig(h=0.25, max_iterations=3), IterationMode.FULL_MIN
    )
    assert not result.converged
    assert result.iterations == 3
    np.testing.assert_allclose(result.values, 9.0 * (1.0 - 0.9 ** 3))


def test_policy_iteration_single_candidate(unit_grid):
    config = SolverConfig(h=0.25, tolerance=1e-12)
    pmin = SolverService.policy_iteration_min(stationary_problem(), unit_grid, 0, config)
    assert pmin.outer_iterations == 1
    np.testing.assert_allclose(pmin.values, 9.0, atol=EPS)
    pmax = SolverService.policy_iteration_max(stationary_problem(), unit_grid, 0, config)
    assert pmax.outer_iterations == 1
    np.testing.assert_allclose(pmax.values, -9.0, atol=EPS)


def test_policy_iteration_picks_cheaper_impulse(unit_grid):
    problem = stationary_problem(min_costs=(1.0, 2.0), max_costs=(1.0, 1.0, 1.0))
    config = SolverConfig(h=0.25, tolerance=1e-12)
    pmin = SolverService.policy_iteration_min(problem, unit_grid, 0, config, initial_policy=np.ones(5, dtype=int))
    assert pmin.policy.tolist() == [0] * 5
    np.testing.assert_allclose(pmin.values, 9.0, atol=EPS)
    pmax = SolverService.policy_iteration_max(problem, unit_grid, 0, config)
    np.testing.assert_allclose(pmax.values, -9.0, atol=EPS)


def test_policy_iteration_rejects_bad_initial_policy(unit_grid):
    with pytest.raises(ConfigurationError):
        SolverService.policy_iteration_min(
            stationary_problem(), unit_grid, 0, SolverConfig(h=0.25), initial_policy=np.full(5, 4)
        )


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4, 5])
def test_sweep_matches_brute_force(seed):
    problem, grid = random_game(seed)
    config = SolverConfig(h=0.25, tolerance=1e-11, max_iterations=20000)
    report = SolverService.backward_sweep(problem, grid, config)
    expected = brute_force_values(problem, grid.time_nodes, grid.space_axes[0], tol=1e-13)
    np.testing.assert_allclose(report.value_field.values, expected, rtol=0, atol=EPS)

    # policy iteration agrees with the full-operator value iteration on every slice
    values = report.value_field.values
    for i in range(grid.num_times - 1):
        ops = OperatorService.prepare_slice(problem, grid, i, values[i + 1])
        for player_pi, mode in ((SolverService.policy_iteration_min, IterationMode.FULL_MIN),
                                (SolverService.policy_iteration_max, IterationMode.FULL_MAX)):
            pi = player_pi(problem, grid, i, config, operators=ops)
            vi = SolverService.value_iteration(problem, grid, i, config, mode, operators=ops)
            np.testing.assert_allclose(pi.values, vi.values, rtol=0, atol=EPS)
        np.testing.assert_allclose(report.candidates.min_value[i], SolverService.policy_iteration_min(
            problem, grid, i, config, operators=ops).values, rtol=0, atol=EPS)


def test_policy_iteration_is_monotone_per_outer_iteration():
    problem, grid = random_game(7)
    config = SolverConfig(h=0.25, tolerance=1e-11)
    nxt = problem.terminal(grid.nodes)
    ops = OperatorService.prepare_slice(problem, grid, grid.num_times - 2, nxt)
    pmin = SolverService.policy_iteration_min(problem, grid, grid.num_times - 2, config, operators=ops)
    for a, b in zip(pmin.value_history, pmin.value_history[1:]):
        assert np.all(b <= a + 1e-9)
    pmax = SolverService.policy_iteration_max(problem, grid, grid.num_times - 2, config, operators=ops)
    for a, b in zip(pmax.value_history, pmax.value_history[1:]):
        assert np.all(b >= a - 1e-9)


def test_game_iteration_is_independent_of_the_start():
    problem, grid = random_game(3)
    config = SolverConfig(h=0.25, tolerance=1e-10)
    ops = OperatorService.prepare_slice(problem, grid, 2, problem.terminal(grid.nodes) * 0.5)
    first = SolverService.value_iteration(problem, grid, 2, config, IterationMode.GAME, operators=ops)
    second = SolverService.value_iteration(
        problem, grid, 2, config, IterationMode.GAME, initial=np.full(grid.num_nodes, 50.0), operators=ops
    )
    assert np.max(np.abs(first.values - second.values)) <= 10 * config.tolerance


@pytest.mark.parametrize("name", list_benchmarks())
def test_benchmark_residual_bound_and_obstacle_order(name):
    problem, grid, config = benchmark_instance(name)
    report = SolverService.backward_sweep(problem, grid, config)
    assert report.residual_norm <= EPS
    assert report.bound_audit.ok
    assert report.value_field.values.max() <= report.bound_audit.budget + config.tolerance

    field = report.value_field
    for i in range(grid.num_times - 1):
        r = OperatorService.obstacle_residuals(problem, grid, field, float(grid.time_nodes[i]))
        assert np.all(r.upper_gap <= EPS)
        strictly_below = r.upper_gap < -EPS
        assert np.all(r.lower_gap[strictly_below] >= -EPS)
        # the stored regime is the active branch
        active = {
            Regime.CONTINUOUS.value: r.hjb,
            Regime.MAX_IMPULSE.value: r.lower_gap,
            Regime.MIN_IMPULSE.value: r.upper_gap,
        }
        for j, regime in enumerate(field.regime[i]):
            assert abs(active[regime][j]) <= EPS


def test_impulse_benchmark_uses_both_impulse_regimes():
    problem, grid, config = benchmark_instance("impulse_game")
    regimes = set(SolverService.backward_sweep(problem, grid, config).value_field.regime.ravel())
    assert Regime.MIN_IMPULSE.value in regimes
    assert Regime.MAX_IMPULSE.value in regimes


def test_iteration_cap_becomes_a_warning():
    problem, grid, config = benchmark_instance("impulse_game")
    report = SolverService.backward_sweep(problem, grid, config.model_copy(update={"max_iterations": 1}))
    assert any("did not converge" in w for w in report.warnings)
    assert not all(s.converged for s in report.slices)


def test_clamped_targets_are_reported():
    problem, grid, config = benchmark_instance("lattice_game")
    report = SolverService.backward_sweep(problem, grid, config)
    assert report.value_field.clamped
    assert any("projected onto the space box" in w for w in report.warnings)
    assert [s.index for s in report.slices] == list(range(grid.num_times - 1))


def test_sweep_rejects_mismatched_inputs(zero_problem, unit_grid):
    with pytest.raises(ConfigurationError):
        SolverService.backward_sweep(zero_problem, unit_grid, SolverConfig(h=0.5))
    grid = GridService.build_grid((0.0, 1.0), 0.5, [(0.0, 2.0, 5)])
    with pytest.raises(ConfigurationError):
        SolverService.backward_sweep(make_problem(discount=1.5), grid, SolverConfig(h=0.5))


def test_refinement_study_on_constant_gain():
    config = load_run_config(get_benchmark_path("constant_gain"))
    problem = CatalogService.build_problem(config.problem)
    refinement = config.refinement
    report = SolverService.refinement_study(
        problem, config.grid, refinement.h_list, config.solver,
        reference_state=refinement.reference_state, reference_value=refinement.reference_value,
    )
    errors = [row.reference_error for row in report.rows]
    assert all(b < a for a, b in zip(errors, errors[1:]))
    assert report.trend_decreasing
    assert report.finest_h == 0.03125
    assert report.rows[-1].error_to_finest == 0.0
    for row in report.rows:
        assert row.bound_ok
        assert row.reference_state_value == pytest.approx(1.0 - (1.0 - row.h) ** round(1.0 / row.h), abs=1e-12)
    assert refinement.reference_value == pytest.approx(1.0 - math.exp(-1.0), abs=1e-15)


def test_refinement_on_random_instance_shrinks_differences():
    problem, _ = random_game(12)
    spec = GridSpec.model_validate({"space": [{"lo": 0.0, "hi": 2.0, "count": 9}], "boundary_policy": "clamp"})
    report = SolverService.refinement_study(problem, spec, [0.25, 0.125, 0.0625], SolverConfig(h=0.25, tolerance=1e-11))
    assert [row.h for row in report.rows] == [0.25, 0.125, 0.0625]
    assert all(row.bound_ok for row in report.rows)
    assert report.trend_decreasing
    errors = [row.error_to_finest for row in report.rows]
    assert errors[-1] == 0.0
    assert all(later < earlier for earlier, later in zip(errors, errors[1:]))


def test_refinement_rejects_bad_step_lists(zero_problem):
    spec = GridSpec.model_validate({"space": [{"lo": 0.0, "hi": 2.0, "count": 5}]})
    config = SolverConfig(h=0.25)
    with pytest.raises(ConfigurationError):
        SolverService.refinement_study(zero_problem, spec, [0.125, 0.25], config)
    with pytest.raises(ConfigurationError):
        SolverService.refinement_study(zero_problem, spec, [0.25, 0.1], config)
    with pytest.raises(ConfigurationError):
        SolverService.refinement_study(zero_problem, spec, [0.25, 0.125], config, reference_value=1.0)
