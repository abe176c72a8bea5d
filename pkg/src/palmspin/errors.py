"""Exception types shared across the package."""


class PalmspinError(Exception):
    """Base class for all package errors."""


class DimensionError(PalmspinError):
    """Tensor shape does not match what an operation requires."""


class ContractError(PalmspinError):
    """An operation was called outside its contract (e.g. backward on a non-scalar)."""


class NonFiniteError(PalmspinError):
    """A NaN or Inf appeared where only finite values are allowed."""


class SimulationDivergedError(PalmspinError):
    """Physics state became non-finite; carries the offending step index."""

    def __init__(self, step, message=""):
        self.step = step
        super().__init__(f"simulation diverged at step {step}" + (f": {message}" if message else ""))


class ShapeDataError(PalmspinError):
    """A mesh or hull is degenerate or fails a dataset filter."""


class ConfigError(PalmspinError):
    """Invalid configuration value or unknown key."""


class CheckpointError(PalmspinError):
    """Base class for checkpoint file problems."""


class NotACheckpointError(CheckpointError):
    """File does not start with the checkpoint magic."""


class ChecksumMismatchError(CheckpointError):
    """Stored checksum does not match the file content."""


class UnsupportedVersionError(CheckpointError):
    """Checkpoint was written by a newer format version."""


class TruncatedCheckpointError(CheckpointError):
    """File ended before the declared content was read."""
