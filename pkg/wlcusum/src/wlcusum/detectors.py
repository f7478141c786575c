"""
Statistic recursions and stopping rules.

Procedures:

- ``ExactCusum``: CUSUM with a known post-change parameter.
- ``WindowLimitedCusum``: CUSUM whose increment plugs in the MLE from the
  previous ``w`` samples. It tracks the reflected statistic S, the cumulative
  sum U and the log of the SR-like statistic L side by side.
- ``ParallelWindowLimitedCusum``: window-limited CUSUMs for every window size
  1..W sharing one estimate bank; stops at the first crossing of any of them.
- ``WindowLimitedGlr``: maximizes the log-likelihood ratio over changepoints
  in the last ``w`` samples and over the parameter set.

Every detector stops on ``statistic >= threshold``; reported stop times count
the warm-up samples.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .estimation import PrefixEstimateBank, SlidingWindow
from .exceptions import DomainError, UsageError
from .models import (
    ModelSpec,
    _llr_samples,
    llr_rows,
    mle_from_sums,
)
from .types import FamilyKind, ParameterSetKind, StopRule, Vector
from .validators import InputValidator

Estimator = Callable[[SlidingWindow, ModelSpec], Vector]


@dataclass
class DetectorState:
    """
    Mutable state of one detector run.

    ``statistic`` is the reflected CUSUM statistic S (for the parallel
    detector, the largest per-window statistic); ``cumulative`` is U and
    ``log_sr`` is log L with L = 0 before the first increment.
    """

    t: int = 0
    statistic: float = 0.0
    threshold: float = math.inf
    stopped: bool = False
    cumulative: float = 0.0
    log_sr: float = -math.inf
    warmup: int = 0
    stop_on: StopRule = StopRule.CUSUM
    window: SlidingWindow | None = None
    bank: PrefixEstimateBank | None = None
    window_statistics: np.ndarray | None = None
    which_window: int | None = None

    @property
    def sr(self) -> float:
        """L_t itself; may overflow to inf for large statistics."""
        return math.exp(self.log_sr)

    @property
    def stop_statistic(self) -> float:
        """The statistic compared against the threshold."""
        if self.stop_on == StopRule.CUMULATIVE:
            return self.cumulative
        if self.stop_on == StopRule.SHIRYAEV_ROBERTS:
            return self.log_sr
        return self.statistic


@dataclass(frozen=True)
class StoppingResult:
    """
    Outcome of ``run_until_stop``.

    A censored run carries ``overshoot = nan``; its ``stop_time`` is
    ``max_steps`` or the number of observations the stream supplied.
    """

    stop_time: int
    terminal_statistic: float
    overshoot: float
    censored: bool
    which_window: int | None = None


# ---------------------------------------------------------------------------
# Scalar recursions
# ---------------------------------------------------------------------------


def _log1p_exp(a: float) -> float:
    """log(e^a + 1) without overflow."""
    if a > 0.0:
        return a + math.log1p(math.exp(-a))
    return math.log1p(math.exp(a))


def _ensure_running(state: DetectorState) -> None:
    if state.stopped:
        raise UsageError(f"Detector already stopped at t={state.t}; call reset() first")


def cusum_step(state: DetectorState, increment: float) -> DetectorState:
    """
    Reflected CUSUM update S <- max(S, 0) + increment.

    Raises:
        UsageError: If the detector has already stopped

    Examples:
        >>> cusum_step(DetectorState(statistic=-0.3, threshold=5.0), 0.2).statistic
        0.2
    """
    _ensure_running(state)
    state.statistic = max(state.statistic, 0.0) + increment
    state.t += 1
    state.stopped = state.statistic >= state.threshold
    return state


def cumulative_step(state: DetectorState, increment: float) -> DetectorState:
    """Non-reflected update U <- U + increment, stopping on U >= threshold."""
    _ensure_running(state)
    state.cumulative += increment
    state.t += 1
    state.stopped = state.cumulative >= state.threshold
    return state


def sr_log_step(state: DetectorState, log_ratio: float) -> DetectorState:
    """
    SR-like update in log space: log L <- log(L + 1) + log_ratio.

    The threshold applies to log L, i.e. the run stops once L >= e^threshold.
    """
    _ensure_running(state)
    state.log_sr = _log1p_exp(state.log_sr) + log_ratio
    state.t += 1
    state.stopped = state.log_sr >= state.threshold
    return state


def sr_step(state: DetectorState, likelihood_ratio: float) -> DetectorState:
    """
    SR-like update L <- (L + 1) * likelihood_ratio.

    Raises:
        DomainError: If the likelihood ratio is negative

    Examples:
        >>> sr_step(DetectorState(threshold=10.0), 2.0).sr
        2.0
    """
    if not likelihood_ratio >= 0.0:
        raise DomainError(f"Likelihood ratio must be >= 0, got {likelihood_ratio}")
    log_ratio = math.log(likelihood_ratio) if likelihood_ratio > 0.0 else -math.inf
    return sr_log_step(state, log_ratio)


def cusum_maxform_oracle(increments: Sequence[float] | np.ndarray) -> float:
    """
    CUSUM statistic from its non-recursive definition, the largest suffix sum.

    Raises:
        UsageError: If ``increments`` is empty

    Examples:
        >>> cusum_maxform_oracle([1.0, -2.0, 0.5])
        0.5
        >>> cusum_maxform_oracle([-1.0, -1.0])
        -1.0
    """
    arr = np.asarray(increments, dtype=np.float64).ravel()
    if arr.size == 0:
        raise UsageError("At least one increment is required")
    return float(np.max(np.cumsum(arr[::-1])))


def _advance_all(state: DetectorState, increment: float) -> None:
    state.statistic = max(state.statistic, 0.0) + increment
    state.cumulative += increment
    state.log_sr = _log1p_exp(state.log_sr) + increment


# ---------------------------------------------------------------------------
# Window-limited steps
# ---------------------------------------------------------------------------


def _default_estimator(window: SlidingWindow, model: ModelSpec) -> Vector:
    return window.estimate_unchecked(model)


def _wlcusum_advance(
    state: DetectorState,
    x: Vector,
    model: ModelSpec,
    estimator: Estimator = _default_estimator,
) -> None:
    window = state.window
    if window.count < window.capacity:
        window.push_unchecked(x)
        state.t += 1
        return
    # Estimate from the previous w samples before x enters the window.
    theta = estimator(window, model)
    increment = float(llr_rows(model, x, theta[None, :])[0])
    _advance_all(state, increment)
    window.push_unchecked(x)
    state.t += 1
    state.stopped = state.stop_statistic >= state.threshold


def wlcusum_step(state: DetectorState, x: Any, model: ModelSpec) -> DetectorState:
    """
    One window-limited CUSUM step.

    During the first ``w`` steps the observation only fills the window. From
    step ``w + 1`` on the increment is ``llr(x, theta_hat)`` with ``theta_hat``
    estimated from the previous ``w`` samples, then ``x`` enters the window.

    Raises:
        UsageError: If the detector has stopped or has no window
        InputError: On dimension mismatch

    Examples:
        >>> model = ModelSpec.gaussian(barrier=0.5)
        >>> state = DetectorState(threshold=5.0, warmup=2, window=SlidingWindow(2))
        >>> for x in (0.2, 0.4, 1.0):
        ...     state = wlcusum_step(state, x, model)
        >>> state.statistic
        0.375
    """
    _ensure_running(state)
    if state.window is None:
        raise UsageError("Window-limited step needs a SlidingWindow in the state")
    _wlcusum_advance(state, InputValidator.observation(x, model.dimension), model)
    return state


def _parallel_advance(state: DetectorState, x: Vector, model: ModelSpec) -> None:
    bank = state.bank
    active = bank.available
    if active:
        thetas = bank.estimate_rows(model, active)
        increments = llr_rows(model, x, thetas)
        stats = state.window_statistics
        stats[:active] = np.maximum(stats[:active], 0.0) + increments
        state.statistic = float(stats[:active].max())
    bank.push_unchecked(x)
    state.t += 1
    if active:
        crossed = state.window_statistics[:active] >= state.threshold
        if crossed.any():
            state.stopped = True
            state.which_window = int(np.argmax(crossed)) + 1


def parallel_step(state: DetectorState, x: Any, model: ModelSpec) -> DetectorState:
    """
    One step of the parallel window-limited CUSUM.

    Every window size whose warm-up is complete is updated with its own
    estimate from the shared bank (computed before ``x`` is pushed). The run
    stops when any per-window statistic reaches the threshold and records the
    smallest such window.

    Raises:
        UsageError: If the detector has stopped or has no estimate bank
        InputError: On dimension mismatch
    """
    _ensure_running(state)
    if state.bank is None or state.window_statistics is None:
        raise UsageError("Parallel step needs a PrefixEstimateBank in the state")
    _parallel_advance(state, InputValidator.observation(x, model.dimension), model)
    return state


# ---------------------------------------------------------------------------
# Window-limited GLR
# ---------------------------------------------------------------------------


def _glr_newest_first(recent: np.ndarray, model: ModelSpec) -> float:
    """GLR over segments ending at ``recent[0]``; ``recent`` is newest first."""
    n_max = recent.shape[0]
    lengths = np.arange(1, n_max + 1, dtype=np.float64)
    suffix_sums = np.cumsum(recent, axis=0)
    if model.family == FamilyKind.GAUSSIAN:
        means = suffix_sums / lengths[:, None]
        norms = np.sqrt(np.einsum('ij,ij->i', means, means))
        barrier = model.barrier
        values = np.where(
            norms >= barrier,
            lengths * norms * norms / 2.0,
            lengths * (barrier * norms - barrier * barrier / 2.0),
        )
        return float(values.max())
    start = model.min_segment
    suffix_sq = np.cumsum(recent * recent, axis=0)
    thetas = mle_from_sums(model, lengths, suffix_sums, suffix_sq)
    best = -math.inf
    for n in range(start, n_max + 1):
        best = max(best, float(_llr_samples(model, recent[:n], thetas[n - 1]).sum()))
    return best


def glr_window_stat(samples: Sequence[Any] | np.ndarray, model: ModelSpec) -> float:
    """
    Window-limited GLR statistic of ``samples`` (oldest first).

    Maximizes the summed log-likelihood ratio over every segment that ends at
    the newest sample and over the parameter set. Gaussian models use the
    closed form; other families fit the MLE per segment.

    Raises:
        UsageError: If there are fewer samples than the family's minimum
            segment length

    Examples:
        >>> glr_window_stat([1.0, 1.0, 1.0, 1.0], ModelSpec.gaussian(barrier=0.5))
        2.0
    """
    arr = InputValidator.samples(samples, model.dimension)
    if arr.shape[0] < model.min_segment:
        raise UsageError(
            f"GLR needs at least {model.min_segment} samples, got {arr.shape[0]}"
        )
    return _glr_newest_first(arr[::-1], model)


# ---------------------------------------------------------------------------
# Detector objects
# ---------------------------------------------------------------------------


class Detector(ABC):
    """
    Common surface of every stopping rule.

    ``step`` validates its input; ``step_unchecked`` is for Monte Carlo loops
    that feed float64 vectors of the right length.
    """

    def __init__(self, model: ModelSpec, threshold: float):
        self.model = model
        self._threshold = InputValidator.threshold(threshold)
        self._state = self._fresh_state()

    @property
    def threshold(self) -> float:
        return self._threshold

    @property
    def state(self) -> DetectorState:
        return self._state

    @property
    def warmup(self) -> int:
        """Samples consumed before the first statistic update."""
        return self._state.warmup

    @property
    def statistic(self) -> float:
        return self._state.stop_statistic

    @abstractmethod
    def _fresh_state(self) -> DetectorState:
        ...

    @abstractmethod
    def _advance(self, x: Vector) -> None:
        ...

    def reset(self, threshold: float | None = None) -> 'Detector':
        """Start a new run, optionally with a new threshold."""
        if threshold is not None:
            self._threshold = InputValidator.threshold(threshold)
        self._state = self._fresh_state()
        return self

    def step(self, x: Any) -> DetectorState:
        """
        Consume one observation.

        Raises:
            UsageError: If the detector has already stopped
            InputError: On dimension mismatch
        """
        _ensure_running(self._state)
        self._advance(InputValidator.observation(x, self.model.dimension))
        return self._state

    def step_unchecked(self, x: Vector) -> bool:
        """Consume a validated observation; returns whether the run stopped."""
        self._advance(x)
        return self._state.stopped


class ExactCusum(Detector):
    """
    CUSUM with the post-change parameter known.

    Examples:
        >>> detector = ExactCusum(ModelSpec.gaussian(), theta=[1.0], threshold=1.0)
        >>> detector.step(1.5).statistic
        1.0
    """

    def __init__(self, model: ModelSpec, theta: Any, threshold: float):
        self.theta = model.check_theta(theta)
        self._theta_row = self.theta[None, :]
        super().__init__(model, threshold)

    def _fresh_state(self) -> DetectorState:
        return DetectorState(threshold=self._threshold)

    def _advance(self, x: Vector) -> None:
        state = self._state
        state.statistic = max(state.statistic, 0.0) + float(llr_rows(self.model, x, self._theta_row)[0])
        state.t += 1
        state.stopped = state.statistic >= state.threshold


class WindowLimitedCusum(Detector):
    """
    CUSUM with the post-change parameter estimated from the last ``window``
    samples.

    Args:
        model: Model specification
        window: Window size w (also the warm-up length)
        threshold: Threshold applied to the statistic chosen by ``stop_on``
        stop_on: Stop on the reflected S (default), the cumulative U or log L
        estimator: Replacement for the window MLE, called with the full window
    """

    def __init__(
        self,
        model: ModelSpec,
        window: int,
        threshold: float,
        stop_on: StopRule = StopRule.CUSUM,
        estimator: Estimator | None = None,
    ):
        self.window = InputValidator.positive_int('window', window)
        self.stop_on = stop_on
        self._estimator = estimator or _default_estimator
        super().__init__(model, threshold)

    def _fresh_state(self) -> DetectorState:
        return DetectorState(
            threshold=self._threshold,
            warmup=self.window,
            stop_on=self.stop_on,
            window=SlidingWindow(self.window, self.model.dimension),
        )

    def _advance(self, x: Vector) -> None:
        _wlcusum_advance(self._state, x, self.model, self._estimator)


class ParallelWindowLimitedCusum(Detector):
    """
    Window-limited CUSUMs of every size 1..``max_window`` run side by side.

    Calibrate with ``threshold_parallel(gamma, max_window)``.
    """

    def __init__(self, model: ModelSpec, max_window: int, threshold: float):
        self.max_window = InputValidator.positive_int('max_window', max_window)
        super().__init__(model, threshold)

    def _fresh_state(self) -> DetectorState:
        return DetectorState(
            threshold=self._threshold,
            warmup=1,
            bank=PrefixEstimateBank(self.max_window, self.model.dimension),
            window_statistics=np.zeros(self.max_window),
        )

    def _advance(self, x: Vector) -> None:
        _parallel_advance(self._state, x, self.model)


class WindowLimitedGlr(Detector):
    """
    GLR over changepoints within the last ``window`` samples.

    The statistic is recomputed from the buffer on every step; a window must
    exceed ``log(gamma) / I0`` for the detector to be able to reach the
    threshold ``log(gamma)`` in time (see ``calibration.glr_min_window``).
    """

    def __init__(self, model: ModelSpec, window: int, threshold: float):
        self.window = InputValidator.positive_int('window', window)
        if self.window < model.min_segment:
            raise UsageError(f"GLR window must be >= {model.min_segment}, got {window}")
        super().__init__(model, threshold)

    def _fresh_state(self) -> DetectorState:
        return DetectorState(
            threshold=self._threshold,
            warmup=self.model.min_segment - 1,
            window=SlidingWindow(self.window, self.model.dimension),
        )

    def _advance(self, x: Vector) -> None:
        state = self._state
        window = state.window
        window.push_unchecked(x)
        state.t += 1
        if window.count >= self.model.min_segment:
            state.statistic = _glr_newest_first(window.samples()[::-1], self.model)
            state.stopped = state.statistic >= state.threshold


def cusum_min_strength(model: ModelSpec, theta: Any, threshold: float) -> ExactCusum:
    """
    Exact CUSUM tuned to the weakest admissible change in the direction of
    ``theta``, i.e. the parameter ``barrier * theta / ||theta||``.

    Raises:
        DomainError: If the model has no norm barrier

    Examples:
        >>> cusum_min_strength(ModelSpec.gaussian(barrier=0.5), [2.0], 3.0).theta
        array([0.5])
    """
    if model.parameter_set.kind != ParameterSetKind.NORM_BARRIER:
        raise DomainError("Minimum-strength CUSUM needs a model with a norm barrier")
    theta = model.check_theta(theta)
    return ExactCusum(model, model.barrier * theta / np.linalg.norm(theta), threshold)


def run_until_stop(
    detector: Detector,
    stream: Iterable[Any],
    threshold: float | None = None,
    max_steps: int | None = None,
    on_step: Callable[[DetectorState], None] | None = None,
    validate: bool = True,
) -> StoppingResult:
    """
    Run a fresh detector over ``stream`` until it stops.

    Args:
        detector: Detector to reset and drive
        stream: Iterable of observations
        threshold: New threshold; keeps the detector's own if None
        max_steps: Censoring horizon; unbounded if None
        on_step: Called with the state after every step
        validate: Validate every observation (disable for float64 vectors)

    Returns:
        StoppingResult; censoring is reported, not raised

    Examples:
        >>> detector = ExactCusum(ModelSpec.gaussian(), [2.0], threshold=2.5)
        >>> run_until_stop(detector, [1.5] * 10)
        StoppingResult(stop_time=3, terminal_statistic=3.0, overshoot=0.5, censored=False, which_window=None)
    """
    detector.reset(threshold)
    if max_steps is not None:
        max_steps = InputValidator.positive_int('max_steps', max_steps)
    state = detector.state
    dimension = detector.model.dimension
    for x in stream:
        if max_steps is not None and state.t >= max_steps:
            break
        if validate:
            x = InputValidator.observation(x, dimension)
        stopped = detector.step_unchecked(x)
        if on_step is not None:
            on_step(state)
        if stopped:
            statistic = state.stop_statistic
            return StoppingResult(
                stop_time=state.t,
                terminal_statistic=statistic,
                overshoot=statistic - state.threshold,
                censored=False,
                which_window=state.which_window,
            )
    return StoppingResult(
        stop_time=state.t,
        terminal_statistic=state.stop_statistic,
        overshoot=math.nan,
        censored=True,
    )
