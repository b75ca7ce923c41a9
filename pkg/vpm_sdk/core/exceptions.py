"""
VPM SDK Exception Classes

This module defines all custom exceptions used throughout the VPM SDK.
"""

from typing import Optional, Dict, Any


class VPMError(Exception):
    """Base exception for all VPM SDK errors."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def __str__(self) -> str:
        if self.details:
            return f"{self.message} (Details: {self.details})"
        return self.message


class ConfigurationError(VPMError):
    """Raised when there's an error in configuration."""
    pass


class MapFormatError(VPMError):
    """Raised when a map file is malformed."""

    def __init__(self, message: str, line: Optional[int] = None, **kwargs):
        super().__init__(message, **kwargs)
        self.line = line


class InvalidStateError(VPMError):
    """Raised when a world state, coordinate or agent reference is invalid."""
    pass


class VisibilityError(VPMError):
    """Raised for invalid field-of-view parameters."""
    pass


class ObservationError(VPMError):
    """Raised when an observation cannot be rendered."""
    pass


class NoPathError(VPMError):
    """Raised when two cells that must be connected are not."""

    def __init__(self, message: str, start=None, goal=None, **kwargs):
        super().__init__(message, **kwargs)
        self.start = start
        self.goal = goal


class PolicyError(VPMError):
    """Raised when a policy is unknown or misbehaves."""
    pass


class GradientError(VPMError):
    """Raised on shape mismatches inside the autodiff engine."""
    pass


class TrainingDivergedError(VPMError):
    """Raised when the training loss becomes NaN or infinite."""

    def __init__(
        self,
        message: str,
        episode: Optional[int] = None,
        last_checkpoint: Optional[str] = None,
        **kwargs
    ):
        super().__init__(message, **kwargs)
        self.episode = episode
        self.last_checkpoint = last_checkpoint


class CheckpointError(VPMError):
    """Raised when checkpoint operations fail."""
    pass


class AnalysisError(VPMError):
    """Raised for invalid inputs to the trajectory analysis tools."""
    pass
