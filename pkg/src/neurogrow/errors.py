"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes, so keep the split coarse: configuration
problems, data/checkpoint problems, and caller misuse.
"""


class NeurogrowError(Exception):
    pass


class DimensionError(NeurogrowError, ValueError):
    """Operand shapes do not line up."""


class ConfigError(NeurogrowError, ValueError):
    """Invalid configuration value or unknown key."""


class DataError(NeurogrowError, ValueError):
    """Dataset or label contents are invalid."""


class ParseError(DataError):
    """A file could not be parsed."""


class CheckpointError(DataError):
    """A checkpoint file is unreadable, corrupt or of an unknown version."""


class UsageError(NeurogrowError, RuntimeError):
    """An API was called in a state it does not support (stale cache, stale plan, bad index)."""
