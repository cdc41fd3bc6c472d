"""
Batch commands, one module per command, each exposing ``run(config, directory)``.
"""

from . import extract, portfolio, refine, solve, verify

HANDLERS = {
    'solve': solve.run,
    'extract': extract.run,
    'verify': verify.run,
    'refine': refine.run,
    'portfolio': portfolio.run,
}

__all__ = ['HANDLERS']
