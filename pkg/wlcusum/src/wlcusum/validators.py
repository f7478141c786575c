"""Input validation shared by models, detectors and the CLI."""
from __future__ import annotations

import math
from typing import Any, Sequence

import numpy as np

from .exceptions import DomainError, InputError, UsageError
from .types import Vector


class InputValidator:
    """
    Validates and normalizes user-facing inputs.

    Every public entry point funnels its arguments through these helpers so
    the hot loops can assume well-formed float64 arrays.
    """

    @staticmethod
    def observation(x: Any, dimension: int) -> Vector:
        """
        Coerce an observation to a finite float64 vector of the given length.

        Args:
            x: Scalar or sequence of reals
            dimension: Expected length k

        Returns:
            1-D float64 array of length ``dimension``

        Raises:
            InputError: On dimension mismatch or non-finite entries

        Examples:
            >>> InputValidator.observation(0.5, 1)
            array([0.5])

            >>> InputValidator.observation([1.0, 2.0], 1)
            InputError: Observation has dimension 2, expected 1
        """
        arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
        if arr.ndim != 1 or arr.shape[0] != dimension:
            raise InputError(
                f"Observation has dimension {arr.size}, expected {dimension}"
            )
        if not np.all(np.isfinite(arr)):
            raise InputError(f"Observation has non-finite entries: {arr.tolist()}")
        return arr

    @staticmethod
    def samples(samples: Sequence[Any] | np.ndarray, dimension: int) -> np.ndarray:
        """
        Stack a sequence of observations into an ``(n, dimension)`` array.

        Raises:
            UsageError: If no samples are given
            InputError: On dimension mismatch or non-finite entries
        """
        arr = np.asarray(samples, dtype=np.float64)
        if arr.size == 0:
            raise UsageError("At least one sample is required")
        if arr.ndim == 1:
            if arr.size % dimension:
                raise InputError(
                    f"Flat samples of length {arr.size} do not split into dimension {dimension}"
                )
            arr = arr.reshape(-1, dimension) if dimension > 1 else arr[:, None]
        if arr.ndim != 2 or arr.shape[1] != dimension:
            raise InputError(
                f"Samples have shape {arr.shape}, expected (n, {dimension})"
            )
        if not np.all(np.isfinite(arr)):
            raise InputError("Samples contain non-finite entries")
        return arr

    @staticmethod
    def gamma(gamma: float) -> float:
        """
        Validate a target average run length.

        Raises:
            DomainError: If gamma <= 1 or not finite

        Examples:
            >>> InputValidator.gamma(1000)
            1000.0
            >>> InputValidator.gamma(0.5)
            DomainError: Target ARL gamma must be > 1, got 0.5
        """
        gamma = float(gamma)
        if not math.isfinite(gamma) or gamma <= 1.0:
            raise DomainError(f"Target ARL gamma must be > 1, got {gamma}")
        return gamma

    @staticmethod
    def threshold(threshold: float) -> float:
        """Validate a detection threshold (finite and > 0)."""
        threshold = float(threshold)
        if not math.isfinite(threshold) or threshold <= 0.0:
            raise DomainError(f"Threshold must be finite and > 0, got {threshold}")
        return threshold

    @staticmethod
    def positive_int(name: str, value: Any) -> int:
        """
        Validate a count such as a window size or number of trials.

        Raises:
            UsageError: If the value is not an integer >= 1
        """
        try:
            valid = not isinstance(value, bool) and int(value) == value and value >= 1
        except (TypeError, ValueError):
            valid = False
        if not valid:
            raise UsageError(f"{name} must be an integer >= 1, got {value!r}")
        return int(value)

    @staticmethod
    def seed(value: Any) -> int:
        """
        Validate a root seed.

        Raises:
            UsageError: If the value is not an integer >= 0
        """
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 0:
            raise UsageError(f"seed must be an integer >= 0, got {value!r}")
        return int(value)
