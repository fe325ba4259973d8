"""Exception types raised across the package."""


class DPPError(Exception):
    """Base class for all package errors."""


class ShapeError(DPPError, ValueError):
    """Array shapes do not satisfy an operation's contract."""


class StateError(DPPError, RuntimeError):
    """An operation was called without the state it depends on."""


class DataError(DPPError, ValueError):
    """Input data (annotations, ground truths) violates an invariant."""


class FormatError(DataError):
    """A binary or text file is malformed."""


class ConfigError(DPPError, ValueError):
    """Invalid or unknown configuration value."""


class ArchitectureMismatch(DataError):
    """Checkpoint was written for a different network architecture."""


class NumericalError(DPPError, FloatingPointError):
    """A non-finite value appeared during training."""
