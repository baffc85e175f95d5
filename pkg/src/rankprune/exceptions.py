"""Exception hierarchy for the toolkit.

All toolkit errors derive from RankPruneError so callers can catch one
base; the CLI maps subclasses onto distinct exit codes.
"""


class RankPruneError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(RankPruneError, ValueError):
    """Invalid configuration value or incompatible option combination."""


class NumericalError(RankPruneError, ArithmeticError):
    """Numerical failure: non-convergent SVD, non-finite gradients."""


class IdxFormatError(RankPruneError):
    """Malformed IDX image or label file."""


class CheckpointError(RankPruneError):
    """Corrupt or truncated model checkpoint."""
