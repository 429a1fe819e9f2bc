"""Exception hierarchy shared by every module.

The CLI maps each family onto its own exit code.
"""


class MolDGNNError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(MolDGNNError, ValueError):
    """Operand shapes do not fit the requested operation."""


class ConfigError(MolDGNNError, ValueError):
    """Invalid or inconsistent run configuration."""


class DataError(MolDGNNError, ValueError):
    """Malformed or physically invalid input data."""


class CheckpointError(DataError):
    """A checkpoint file is unreadable, truncated, corrupt or from another version."""


class NumericError(MolDGNNError, ArithmeticError):
    """Non-finite values appeared during training or evaluation."""
