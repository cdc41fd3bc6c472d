"""
Service layer for the solver's numerical logic.
"""

from .catalog_service import CatalogService
from .game_service import GameService
from .grid_service import GridService
from .nash_service import NashService
from .operator_service import OperatorService
from .portfolio_service import PortfolioService
from .solver_service import SolverService

__all__ = [
    'CatalogService', 'GameService', 'GridService', 'NashService',
    'OperatorService', 'PortfolioService', 'SolverService',
]
