import numpy as np
import pytest

from conftest import make_problem
from GameSolver.models.game import Player
from GameSolver.models.grid import Regime
from GameSolver.services.grid_service import GridService
from GameSolver.services.operator_service import MAX_IMPULSE, MIN_IMPULSE, OperatorService
from GameSolver.utils.errors import ConfigurationError, OutOfDomainError


def identity_problem(cost=0.2, **kwargs):
    """V(y) = y on [0, 2] with jumps of -0.5 and +0.5 for both players."""
    return make_problem(
        max_impulses=((-0.5,), (0.5,)),
        min_impulses=((-0.5,), (0.5,)),
        cost_max=lambda s, y, u: np.full(y.shape[0], cost),
        cost_min=lambda s, y, u: np.full(y.shape[0], cost),
        **kwargs,
    )


def test_hamiltonian_of_zero_model(zero_problem, unit_grid):
    result = OperatorService.approximate_hamiltonian(zero_problem, unit_grid, np.zeros(5), 0.0, [1.0])
    assert result.value == 0.0
    assert result.index == 0
    assert result.branch == Regime.CONTINUOUS.value


def test_hamiltonian_of_constant_field(unit_grid):
    problem = make_problem(continuous=((0.0,), (1.0,)), dynamics=lambda s, y, u: np.full_like(y, u[0]))
    result = OperatorService.approximate_hamiltonian(problem, unit_grid, np.full(5, 3.0), 0.0, [1.0])
    assert result.value == pytest.approx(0.75 * 3.0)
    # ties go to the first index
    assert result.index == 0


def test_two_backward_steps_with_unit_gain():
    grid = GridService.build_grid((0.0, 1.0), 0.5, [(0.0, 1.0, 3)])
    problem = make_problem(running_gain=lambda s, y, u: np.ones(y.shape[0]))
    first = OperatorService.approximate_hamiltonian(problem, grid, np.zeros(3), 0.5, grid.nodes)
    np.testing.assert_allclose(first.value, 0.5)
    second = OperatorService.approximate_hamiltonian(problem, grid, first.value, 0.0, grid.nodes)
    np.testing.assert_allclose(second.value, 0.75)


def test_hamiltonian_picks_best_control(unit_grid):
    problem = make_problem(
        continuous=((-1.0,), (0.0,), (1.0,)),
        dynamics=lambda s, y, u: np.full_like(y, u[0]),
        running_gain=lambda s, y, u: np.full(y.shape[0], -u[0] ** 2),
    )
    field = unit_grid.nodes[:, 0] * 2.0
    result = OperatorService.approximate_hamiltonian(problem, unit_grid, field, 0.0, [1.0])
    # candidates 0.75*I[2y](1 + 0.25 u) - 0.25 u^2: u=1 gives 0.75*2.5 - 0.25
    assert result.index == 2
    assert result.value == pytest.approx(0.75 * 2.5 - 0.25)


def test_cost_operators_on_constant_fields(unit_grid):
    problem = make_problem()
    sup = OperatorService.max_cost_operator(problem, unit_grid, np.zeros(5), 0.0, [1.0])
    inf = OperatorService.min_cost_operator(problem, unit_grid, np.zeros(5), 0.0, [1.0])
    assert sup.value == -1.0
    assert inf.value == 1.0
    assert sup.branch == Regime.MAX_IMPULSE.value
    assert inf.branch == Regime.MIN_IMPULSE.value


def test_stationary_jumps_read_the_same_point(unit_grid):
    stationary = lambda s, y, u: np.zeros_like(y)
    problem = make_problem(
        jump_max=stationary,
        jump_min=stationary,
        cost_max=lambda s, y, u: np.full(y.shape[0], 0.1),
        cost_min=lambda s, y, u: np.full(y.shape[0], 0.1),
    )
    field = np.array([0.0, 1.0, 5.0, 1.0, 0.0])
    assert OperatorService.max_cost_operator(problem, unit_grid, field, 0.0, [1.0]).value == pytest.approx(4.9)
    assert OperatorService.min_cost_operator(problem, unit_grid, field, 0.0, [1.0]).value == pytest.approx(5.1)


def test_cost_operators_enumerate_impulses(unit_grid):
    problem = identity_problem()
    field = unit_grid.nodes[:, 0].copy()
    sup = OperatorService.max_cost_operator(problem, unit_grid, field, 0.0, [1.0])
    inf = OperatorService.min_cost_operator(problem, unit_grid, field, 0.0, [1.0])
    assert sup.value == pytest.approx(1.3)
    assert sup.index == 1
    assert inf.value == pytest.approx(0.7)
    assert inf.index == 0


def test_jump_out_of_box_under_error_policy(unit_grid):
    problem = identity_problem()
    with pytest.raises(OutOfDomainError):
        OperatorService.max_cost_operator(problem, unit_grid, np.zeros(5), 0.0, [1.8])


def test_zero_field_is_a_fixed_point(zero_problem, unit_grid):
    result = OperatorService.bellman_map(zero_problem, unit_grid, np.zeros(5), np.zeros(5), 0.0, unit_grid.nodes)
    np.testing.assert_array_equal(result.value, 0.0)
    assert set(result.branch) == {Regime.CONTINUOUS.value}


def test_bellman_map_at_terminal_time_returns_terminal_gain(unit_grid):
    problem = make_problem(terminal_gain=lambda y: 3.0 * y[:, 0])
    result = OperatorService.bellman_map(problem, unit_grid, None, np.zeros(5), 1.0, [0.5])
    assert result.value == pytest.approx(1.5)
    assert result.branch == Regime.TERMINAL.value


def test_min_impulse_branch_wins_when_cheaper(unit_grid):
    problem = identity_problem(cost=0.01, running_gain=lambda s, y, u: np.full(y.shape[0], 4.0))
    field = unit_grid.nodes[:, 0].copy()
    result = OperatorService.bellman_map(problem, unit_grid, field, field, 0.0, [1.0])
    phi = problem.damping_factor(unit_grid.h)
    assert result.branch == Regime.MIN_IMPULSE.value
    assert result.value == pytest.approx(phi * 0.51)
    assert result.index == 0


def test_select_branch_precedence():
    value, branch = OperatorService.select_branch(
        np.array([0.0, 0.0, 0.0]), np.array([1.0, 2.0, -1.0]), np.array([0.5, 3.0, 2.0])
    )
    np.testing.assert_allclose(value, [0.5, 2.0, 0.0])
    assert branch.tolist() == [MIN_IMPULSE, MAX_IMPULSE, 0]


def random_instance(seed, h):
    rng = np.random.default_rng(seed)
    grid = GridService.build_grid((0.0, 1.0), h, [(0.0, 2.0, 9)], "clamp")
    a, p, q = rng.uniform(-1.0, 1.0, size=3)
    problem = make_problem(
        continuous=((-1.0,), (0.0,), (1.0,)),
        max_impulses=((-0.4,), (0.3,)),
        min_impulses=((-0.3,), (0.6,)),
        dynamics=lambda s, y, u: a * u[0] + 0.2 * y,
        running_gain=lambda s, y, u: np.sin(p * y[:, 0] + q * u[0]),
        cost_max=lambda s, y, u: np.full(y.shape[0], 0.1 + 0.2 * abs(u[0])),
        cost_min=lambda s, y, u: np.full(y.shape[0], 0.05 + 0.1 * abs(u[0])),
    )
    return problem, grid


@pytest.mark.parametrize("h", [0.5, 0.1])
def test_bellman_map_is_a_contraction(h):
    problem, grid = random_instance(17, h)
    factor = max(1.0 - problem.discount * h, problem.damping_factor(h))
    rng = np.random.default_rng(99)
    nxt = rng.normal(size=grid.num_nodes)
    ops = OperatorService.prepare_slice(problem, grid, 0, nxt)
    for _ in range(200):
        v1 = rng.normal(scale=3.0, size=grid.num_nodes)
        v2 = rng.normal(scale=3.0, size=grid.num_nodes)
        n1 = rng.normal(size=grid.num_nodes)
        n2 = rng.normal(size=grid.num_nodes)
        # the full map moves in both slices at once
        f1 = OperatorService.bellman_map(problem, grid, n1, v1, 0.0, grid.nodes).value
        f2 = OperatorService.bellman_map(problem, grid, n2, v2, 0.0, grid.nodes).value
        distance = max(np.max(np.abs(v1 - v2)), np.max(np.abs(n1 - n2)))
        assert np.max(np.abs(f1 - f2)) <= factor * distance + 1e-12
        # same next slice: the per-slice game operator
        g1, _ = OperatorService.game_operator(ops, v1)
        g2, _ = OperatorService.game_operator(ops, v2)
        assert np.max(np.abs(g1 - g2)) <= factor * np.max(np.abs(v1 - v2)) + 1e-12


def test_bellman_map_is_monotone():
    problem, grid = random_instance(4, 0.25)
    rng = np.random.default_rng(1)
    for _ in range(50):
        v1 = rng.normal(size=grid.num_nodes)
        v2 = v1 + rng.uniform(0.0, 1.0, size=grid.num_nodes)
        f1 = OperatorService.bellman_map(problem, grid, v1, v1, 0.25, grid.nodes).value
        f2 = OperatorService.bellman_map(problem, grid, v2, v2, 0.25, grid.nodes).value
        assert np.all(f1 <= f2 + 1e-12)


def test_branch_value_matches_returned_value():
    problem, grid = random_instance(8, 0.25)
    rng = np.random.default_rng(2)
    v, nxt = rng.normal(size=grid.num_nodes), rng.normal(size=grid.num_nodes)
    phi = problem.damping_factor(grid.h)
    result = OperatorService.bellman_map(problem, grid, nxt, v, 0.25, grid.nodes)
    ham = OperatorService.approximate_hamiltonian(problem, grid, nxt, 0.25, grid.nodes)
    sup = OperatorService.max_cost_operator(problem, grid, v, 0.25, grid.nodes)
    inf = OperatorService.min_cost_operator(problem, grid, v, 0.25, grid.nodes)
    by_branch = {
        Regime.CONTINUOUS.value: ham.value,
        Regime.MAX_IMPULSE.value: phi * sup.value,
        Regime.MIN_IMPULSE.value: phi * inf.value,
    }
    for j, branch in enumerate(result.branch):
        assert abs(by_branch[branch][j] - result.value[j]) <= 1e-12


def test_residuals_of_zero_model(zero_problem, unit_grid):
    phi = zero_problem.damping_factor(unit_grid.h)
    residuals = OperatorService.obstacle_residuals(zero_problem, unit_grid, np.zeros((5, 5)), 0.0, [1.0])
    assert residuals.hjb == 0.0
    assert residuals.lower_gap == pytest.approx(phi)
    assert residuals.upper_gap == pytest.approx(-phi)
    assert residuals.composite == 0.0


def test_residuals_need_a_non_terminal_node(zero_problem, unit_grid):
    with pytest.raises(ConfigurationError):
        OperatorService.obstacle_residuals(zero_problem, unit_grid, np.zeros((5, 5)), 1.0)


def test_slice_operators_match_pointwise_operators():
    problem, grid = random_instance(21, 0.25)
    rng = np.random.default_rng(6)
    v, nxt = rng.normal(size=grid.num_nodes), rng.normal(size=grid.num_nodes)
    ops = OperatorService.prepare_slice(problem, grid, 1, nxt)
    sup, sup_index = OperatorService.sup_operator(ops, v)
    inf, inf_index = OperatorService.inf_operator(ops, v)
    pointwise_sup = OperatorService.max_cost_operator(problem, grid, v, 0.25, grid.nodes)
    pointwise_inf = OperatorService.min_cost_operator(problem, grid, v, 0.25, grid.nodes)
    np.testing.assert_allclose(sup, pointwise_sup.value, atol=1e-13)
    np.testing.assert_allclose(inf, pointwise_inf.value, atol=1e-13)
    np.testing.assert_array_equal(sup_index, pointwise_sup.index)
    np.testing.assert_array_equal(inf_index, pointwise_inf.index)

    value, _ = OperatorService.game_operator(ops, v)
    full = OperatorService.bellman_map(problem, grid, nxt, v, 0.25, grid.nodes)
    np.testing.assert_allclose(value, full.value, atol=1e-13)
    assert ops.clamped_points > 0
    assert OperatorService.impulse_candidates(ops, Player.MINIMIZER, v).shape == (2, grid.num_nodes)


def test_slice_operators_stay_sparse_on_fine_grids():
    grid = GridService.build_grid((0.0, 1.0), 0.5, [(0.0, 1.0, 101), (0.0, 1.0, 101)], "clamp")
    problem = make_problem(
        state_dim=2,
        continuous=((0.0, 0.0),),
        max_impulses=((0.013, -0.027), (0.1, 0.1)),
        min_impulses=((-0.05, 0.005),),
    )
    ops = OperatorService.prepare_slice(problem, grid, 0)
    J = grid.num_nodes
    assert ops.max_weights.shape == (2 * J, J)
    assert ops.max_weights.nnz <= 4 * 2 * J
    assert ops.min_weights.nnz <= 4 * J

    v = grid.nodes[:, 0] + 2.0 * grid.nodes[:, 1]
    candidates = OperatorService.impulse_candidates(ops, Player.MAXIMIZER, v)
    for k, jump in enumerate(problem.max_impulse_grid):
        target = np.clip(grid.nodes + jump, 0.0, 1.0)
        np.testing.assert_allclose(candidates[k], target[:, 0] + 2.0 * target[:, 1] - 1.0, atol=1e-12)


def test_prepare_slice_rejects_terminal_index(zero_problem, unit_grid):
    with pytest.raises(ConfigurationError):
        OperatorService.prepare_slice(zero_problem, unit_grid, 4)
