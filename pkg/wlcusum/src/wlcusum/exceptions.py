"""Exception hierarchy for the wlcusum library."""
from __future__ import annotations


class DetectionError(Exception):
    """Base exception for all wlcusum errors."""
    pass


class InputError(DetectionError):
    """Raised when an observation has the wrong shape or cannot be parsed."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class DomainError(DetectionError):
    """Raised when a value lies outside the domain of an operation."""
    pass


class UsageError(DetectionError):
    """Raised when an API is called out of order or with empty input."""
    pass


class NotReadyError(UsageError):
    """Raised when an estimate is requested before the window is full."""

    def __init__(self, required: int, available: int):
        self.required = required
        self.available = available
        super().__init__(
            f"Estimate needs {required} samples, only {available} buffered"
        )


class InfeasibleWindowError(DomainError):
    """Raised when a window is too small for a positive post-change drift."""

    def __init__(self, window: int, ihat0: float):
        self.window = window
        self.ihat0 = ihat0
        super().__init__(
            f"Window {window} gives Ihat0={ihat0:.6g} <= 0; "
            f"increase the window size"
        )


class ConfigError(UsageError):
    """Raised when an experiment config key is missing or invalid."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"Config key '{key}': {message}")


class StoreError(DetectionError):
    """Raised when the result store cannot connect or persist."""
    pass
