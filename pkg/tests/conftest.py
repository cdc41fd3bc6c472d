import os

# no log files or span exporters from test runs
os.environ.setdefault("GAMESOLVER_FILE_LOGGING", "false")
os.environ.setdefault("GAMESOLVER_ENABLE_TRACING", "false")

import numpy as np
import pytest

from GameSolver.models.game import GameProblem
from GameSolver.models.solver import SolverConfig
from GameSolver.services.grid_service import GridService


def make_problem(
    dynamics=None,
    running_gain=None,
    terminal_gain=None,
    jump_max=None,
    jump_min=None,
    cost_max=None,
    cost_min=None,
    continuous=((0.0,),),
    max_impulses=((0.5,),),
    min_impulses=((-0.5,),),
    discount=1.0,
    horizon=(0.0, 1.0),
    state_dim=1,
    **kwargs,
) -> GameProblem:
    """GameProblem with zero dynamics, zero gains, additive jumps and unit costs unless overridden."""
    zero_vector = lambda s, y, u: np.zeros_like(y)
    additive = lambda s, y, u: np.broadcast_to(np.asarray(u, dtype=float), y.shape)
    return GameProblem(
        state_dim=state_dim,
        continuous_control_grid=continuous,
        max_impulse_grid=max_impulses,
        min_impulse_grid=min_impulses,
        dynamics=dynamics or zero_vector,
        jump_max=jump_max or additive,
        jump_min=jump_min or additive,
        running_gain=running_gain or (lambda s, y, u: np.zeros(y.shape[0])),
        cost_max=cost_max or (lambda s, y, u: np.ones(y.shape[0])),
        cost_min=cost_min or (lambda s, y, u: np.ones(y.shape[0])),
        terminal_gain=terminal_gain or (lambda y: np.zeros(y.shape[0])),
        discount=discount,
        horizon=horizon,
        **kwargs,
    )


@pytest.fixture
def zero_problem():
    """b = 0, f = 0, G = 0, c = chi = 1 and stationary jumps."""
    stationary = lambda s, y, u: np.zeros_like(y)
    return make_problem(jump_max=stationary, jump_min=stationary)


@pytest.fixture
def unit_grid():
    return GridService.build_grid((0.0, 1.0), 0.25, [(0.0, 2.0, 5)])


@pytest.fixture
def tight_config():
    return SolverConfig(h=0.25, tolerance=1e-11, max_iterations=20000)


@pytest.fixture
def lattice_problem():
    """
    Lattice instance: every Euler step and jump lands on a node of the [0, 2] grid with nine nodes
    and h = 0.25, and impulse costs of at least 5 price every impulse out.
    """
    return make_problem(
        continuous=((-1.0,), (0.0,), (1.0,)),
        max_impulses=((-0.5,), (0.5,)),
        min_impulses=((-0.25,), (0.25,)),
        dynamics=lambda s, y, u: np.full_like(y, u[0]),
        running_gain=lambda s, y, u: np.tanh(y[:, 0] - 1.0 + 0.5 * u[0]),
        cost_max=lambda s, y, u: np.full(y.shape[0], 5.0),
        cost_min=lambda s, y, u: np.full(y.shape[0], 6.0),
        terminal_gain=lambda y: np.tanh(1.0 - y[:, 0]),
    )


@pytest.fixture
def lattice_grid():
    return GridService.build_grid((0.0, 1.0), 0.25, [(0.0, 2.0, 9)], "clamp")
