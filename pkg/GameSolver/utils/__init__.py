"""
Utility functions for the solver: logging, tracing and error types.
"""

from .errors import ConfigurationError, GameSolverError, OutOfDomainError
from .logger import LogContext, get_logger, setup_logging

__all__ = [
    'GameSolverError', 'ConfigurationError', 'OutOfDomainError',
    'LogContext', 'get_logger', 'setup_logging',
]
