"""Shared enums and type aliases."""
from __future__ import annotations

from enum import Enum

import numpy as np
from numpy.typing import NDArray

# One observation (length k) or one parameter vector (length K).
Vector = NDArray[np.float64]


class FamilyKind(Enum):
    """Supported pre-/post-change density pairs."""

    GAUSSIAN = 'gaussian'
    LAPLACE_NORMAL = 'laplace-normal'
    LAPLACE_NORMAL_UNKNOWN_VAR = 'laplace-normal-unknown-var'


class ParameterSetKind(Enum):
    """Shapes of the admissible post-change parameter set."""

    FULL_SPACE = 'full-space'
    NORM_BARRIER = 'norm-barrier'
    POSITIVE_VARIANCE = 'mean-and-positive-variance'


class MethodKind(Enum):
    """Detection procedures known to the Monte Carlo harness."""

    EXACT_CUSUM = 'exact-cusum'
    WLCUSUM = 'wlcusum'
    PARALLEL = 'parallel'
    GLR = 'glr'
    CUSUM_MIN_STRENGTH = 'cusum-min-strength'

    @property
    def windowed(self) -> bool:
        """Whether the method takes a window argument, e.g. ``wlcusum(4)``."""
        return self in (MethodKind.WLCUSUM, MethodKind.PARALLEL, MethodKind.GLR)


class Regime(Enum):
    """Which law generates the data of a Monte Carlo run."""

    ARL = 'arl'    # all samples pre-change
    WADD = 'wadd'  # change at time 0


class StopRule(Enum):
    """Statistic a window-limited CUSUM compares against the threshold."""

    CUSUM = 'cusum'
    CUMULATIVE = 'cumulative'
    SHIRYAEV_ROBERTS = 'sr'
