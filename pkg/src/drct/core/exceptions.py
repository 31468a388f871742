"""
Custom exceptions for drct.
"""

from typing import Optional


class DRCTError(Exception):
    """Base exception for all drct errors."""


class ConfigError(DRCTError):
    """Raised when a configuration is invalid or violates a constraint."""


class DataLoadError(DRCTError):
    """Raised when there is an issue loading data or files."""

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(message)
        self.path = path


class CheckpointError(DataLoadError):
    """Raised when a checkpoint envelope cannot be read or written."""


class ValidationError(DRCTError):
    """Raised when data validation fails."""


class ShapeError(ValidationError):
    """Raised when tensor shapes or channel widths do not line up."""


class ArgumentError(DRCTError, ValueError):
    """Raised when a function is called with an invalid argument."""


class ProcessingError(DRCTError):
    """Raised when an error occurs during training or evaluation."""


class TrainingDivergedError(ProcessingError):
    """Raised when the training loss becomes non-finite."""

    def __init__(self, message: str, iteration: int):
        super().__init__(message)
        self.iteration = iteration
