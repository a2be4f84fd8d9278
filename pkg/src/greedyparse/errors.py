"""Exception hierarchy shared across the package.

``GreedyParseError`` is the base for everything raised on bad input data or
inconsistent model state, so callers (and the CLI) can distinguish data
problems from plain bugs.
"""


class GreedyParseError(Exception):
    """Base class for all package-specific errors."""
