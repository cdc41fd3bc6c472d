"""
Data models for the impulse-game solver.
"""

from .game import AssumptionReport, DampingSpec, GameProblem, Player
from .grid import AxisSpec, BoundaryPolicy, GridSpec, Regime, TimeSpaceGrid, ValueField
from .solver import OperatorResult, SolverConfig, SolveReport
from .strategy import ImpulseEvent, NashStrategy, NEReport, TrajectoryRecord

__all__ = [
    'AssumptionReport', 'DampingSpec', 'GameProblem', 'Player',
    'AxisSpec', 'BoundaryPolicy', 'GridSpec', 'Regime', 'TimeSpaceGrid', 'ValueField',
    'OperatorResult', 'SolverConfig', 'SolveReport',
    'ImpulseEvent', 'NashStrategy', 'NEReport', 'TrajectoryRecord',
]
