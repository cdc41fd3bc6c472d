"""
Grid solver for zero-sum differential games with continuous and impulse controls.
"""
