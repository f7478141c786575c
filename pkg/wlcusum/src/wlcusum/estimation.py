"""Sliding-window sample management and shared-prefix estimate banks."""
from __future__ import annotations

from typing import Any

import numpy as np

from .exceptions import InputError, NotReadyError
from .models import ModelSpec, mle_from_sums
from .types import Vector
from .validators import InputValidator

# Running sums are rebuilt from the buffer this often to bound float drift.
REFRESH_INTERVAL = 4096


class SlidingWindow:
    """
    Ring buffer of the last ``capacity`` observations with running sums.

    The window only produces an estimate once it is full, matching the
    warm-up of the window-limited CUSUM.

    Examples:
        >>> window = SlidingWindow(2)
        >>> window.push(1.0).push(2.0).push(3.0).samples()
        array([[2.],
               [3.]])
        >>> float(window.running_sum[0])
        5.0
    """

    def __init__(self, capacity: int, dimension: int = 1):
        self._capacity = InputValidator.positive_int('capacity', capacity)
        self._dimension = InputValidator.positive_int('dimension', dimension)
        self._buffer = np.zeros((self._capacity, self._dimension))
        self._sum = np.zeros(self._dimension)
        self._sq_sum = np.zeros(self._dimension)
        self._head = 0
        self._count = 0
        self._pushes = 0

    @property
    def capacity(self) -> int:
        return self._capacity

    @property
    def dimension(self) -> int:
        return self._dimension

    @property
    def count(self) -> int:
        """Number of buffered observations (at most ``capacity``)."""
        return self._count

    @property
    def full(self) -> bool:
        return self._count == self._capacity

    @property
    def running_sum(self) -> Vector:
        return self._sum.copy()

    @property
    def running_sq_sum(self) -> Vector:
        return self._sq_sum.copy()

    def push(self, x: Any) -> 'SlidingWindow':
        """
        Append an observation, evicting the oldest one when full.

        Raises:
            InputError: On dimension mismatch
        """
        self.push_unchecked(InputValidator.observation(x, self._dimension))
        return self

    def push_unchecked(self, x: Vector) -> None:
        """``push`` for callers that already validated ``x``."""
        if self._count == self._capacity:
            old = self._buffer[self._head]
            self._sum -= old
            self._sq_sum -= old * old
        else:
            self._count += 1
        self._sum += x
        self._sq_sum += x * x
        self._buffer[self._head] = x
        self._head = (self._head + 1) % self._capacity
        self._pushes += 1
        if self._pushes % REFRESH_INTERVAL == 0:
            self._refresh()

    def _refresh(self) -> None:
        # Newest-first sequential sums, the order PrefixEstimateBank uses.
        live = self.samples()[::-1]
        self._sum = np.cumsum(live, axis=0)[-1]
        self._sq_sum = np.cumsum(live * live, axis=0)[-1]

    def samples(self) -> np.ndarray:
        """Buffered observations, oldest first, as an ``(count, k)`` array."""
        if self._count < self._capacity:
            return self._buffer[: self._count].copy()
        return np.concatenate((self._buffer[self._head:], self._buffer[: self._head]))

    def estimate(self, model: ModelSpec) -> Vector:
        """
        MLE over the buffered window.

        Raises:
            NotReadyError: If fewer than ``capacity`` samples are buffered
            InputError: If the model dimension differs from the window's

        Examples:
            >>> window = SlidingWindow(2).push(0.2).push(0.4)
            >>> window.estimate(ModelSpec.gaussian(barrier=0.5))
            array([0.5])
        """
        if model.dimension != self._dimension:
            raise InputError(
                f"Model dimension {model.dimension} differs from window dimension {self._dimension}"
            )
        if self._count < self._capacity:
            raise NotReadyError(self._capacity, self._count)
        return self.estimate_unchecked(model)

    def estimate_unchecked(self, model: ModelSpec) -> Vector:
        counts = np.array([float(self._capacity)])
        return mle_from_sums(model, counts, self._sum[None, :], self._sq_sum[None, :])[0]

    def reset(self) -> None:
        self._buffer.fill(0.0)
        self._sum.fill(0.0)
        self._sq_sum.fill(0.0)
        self._head = 0
        self._count = 0
        self._pushes = 0


class PrefixEstimateBank:
    """
    Estimates for every window size 1..W from one shared buffer.

    Per-window running sums are updated together on each push (add the new
    sample, drop the sample that leaves window w), so one step costs
    Theta(W) for all W estimates.

    Examples:
        >>> bank = PrefixEstimateBank(2)
        >>> bank.push(1.0).push(3.0).estimates_all(ModelSpec.gaussian(barrier=0))
        {1: array([3.]), 2: array([2.])}
    """

    def __init__(self, max_window: int, dimension: int = 1):
        self._max_window = InputValidator.positive_int('max_window', max_window)
        self._dimension = InputValidator.positive_int('dimension', dimension)
        self._buffer = np.zeros((self._max_window, self._dimension))
        self._sums = np.zeros((self._max_window, self._dimension))
        self._sq_sums = np.zeros((self._max_window, self._dimension))
        self._sizes = np.arange(1, self._max_window + 1, dtype=np.float64)
        self._lags = np.arange(self._max_window)
        self._head = 0
        self._count = 0
        self._pushes = 0

    @property
    def max_window(self) -> int:
        return self._max_window

    @property
    def dimension(self) -> int:
        return self._dimension

    @property
    def count(self) -> int:
        """Total observations pushed so far."""
        return self._count

    @property
    def available(self) -> int:
        """Largest window size with a full window of data."""
        return min(self._count, self._max_window)

    def _recent(self, n: int) -> np.ndarray:
        """Last ``n`` observations, newest first."""
        return self._buffer[(self._head - 1 - self._lags[:n]) % self._max_window]

    def push(self, x: Any) -> 'PrefixEstimateBank':
        """
        Append an observation and update all per-window sums.

        Raises:
            InputError: On dimension mismatch
        """
        self.push_unchecked(InputValidator.observation(x, self._dimension))
        return self

    def push_unchecked(self, x: Vector) -> None:
        full = self.available
        if full:
            # Window w is full when count >= w; it drops x_{t-w}.
            leaving = self._recent(full)
            self._sums[:full] -= leaving
            self._sq_sums[:full] -= leaving * leaving
        self._sums += x
        self._sq_sums += x * x
        self._buffer[self._head] = x
        self._head = (self._head + 1) % self._max_window
        self._count += 1
        self._pushes += 1
        if self._pushes % REFRESH_INTERVAL == 0:
            self._refresh()

    def _refresh(self) -> None:
        n = self.available
        recent = self._recent(n)
        csum = np.cumsum(recent, axis=0)
        csq = np.cumsum(recent * recent, axis=0)
        self._sums[:n] = csum
        self._sq_sums[:n] = csq
        # Windows longer than the data seen so far hold every sample.
        self._sums[n:] = csum[-1]
        self._sq_sums[n:] = csq[-1]

    def estimate_rows(self, model: ModelSpec, n: int | None = None) -> np.ndarray:
        """
        Estimates for window sizes 1..n as an ``(n, K)`` array.

        Raises:
            NotReadyError: If nothing has been pushed or ``n`` exceeds the data
        """
        available = self.available
        n = available if n is None else n
        if available == 0 or n > available:
            raise NotReadyError(max(n, 1), available)
        return mle_from_sums(model, self._sizes[:n], self._sums[:n], self._sq_sums[:n])

    def estimates_all(self, model: ModelSpec) -> dict[int, Vector]:
        """Map from window size to its estimate, for every available size."""
        if model.dimension != self._dimension:
            raise InputError(
                f"Model dimension {model.dimension} differs from bank dimension {self._dimension}"
            )
        rows = self.estimate_rows(model)
        return {w: rows[w - 1] for w in range(1, rows.shape[0] + 1)}

    def reset(self) -> None:
        self._buffer.fill(0.0)
        self._sums.fill(0.0)
        self._sq_sums.fill(0.0)
        self._head = 0
        self._count = 0
        self._pushes = 0
