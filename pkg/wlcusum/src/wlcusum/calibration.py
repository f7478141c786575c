"""
Closed-form threshold and window calibration.

Thresholds guarantee an average run length of at least ``gamma``; window
sizes come from minimizing the worst-case delay upper bound, whose leading
term gives ``w ~ sqrt(trace(Sigma0 F0) / 2) / I0 * sqrt(log gamma)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .exceptions import DomainError, InfeasibleWindowError, UsageError
from .models import InfoNumbers, approx_info_numbers
from .validators import InputValidator


@dataclass(frozen=True)
class CalibrationReport:
    """
    Calibration summary for one target ARL.

    ``wadd_upper_bound`` is evaluated at ``bound_window``, which equals
    ``optimal_window`` unless that window is infeasible, in which case the
    smallest feasible window is used.
    """

    gamma: float
    threshold: float
    optimal_window: int
    optimal_window_raw: float
    predicted_delay: float
    bound_window: int
    wadd_upper_bound: float
    min_feasible_window: int
    max_window: int | None = None
    threshold_parallel: float | None = None
    parallel_wadd_upper_bound: float | None = None


def threshold_single(gamma: float) -> float:
    """
    Threshold ``log(gamma)`` for a single detector.

    Raises:
        DomainError: If gamma <= 1

    Examples:
        >>> round(threshold_single(1000), 4)
        6.9078
    """
    return math.log(InputValidator.gamma(gamma))


def threshold_parallel(gamma: float, max_window: int) -> float:
    """
    Threshold ``log(W * gamma)`` for the parallel detector with W windows.

    Examples:
        >>> round(threshold_parallel(1000, 15), 4)
        9.6158
    """
    gamma = InputValidator.gamma(gamma)
    max_window = InputValidator.positive_int('max_window', max_window)
    return math.log(max_window * gamma)


def _positive_i0(info: InfoNumbers) -> float:
    if not info.I0 > 0.0:
        raise DomainError(f"I0 must be > 0, got {info.I0}")
    return info.I0


def optimal_window_raw(gamma: float, info: InfoNumbers) -> float:
    """
    Leading-term optimal window before rounding.

    Raises:
        DomainError: If gamma <= e or I0 <= 0
    """
    gamma = InputValidator.gamma(gamma)
    if gamma <= math.e:
        raise DomainError(f"Optimal window needs gamma > e, got {gamma}")
    i0 = _positive_i0(info)
    return math.sqrt(info.crlb_trace) / (i0 * math.sqrt(2.0)) * math.sqrt(math.log(gamma))


def optimal_window(gamma: float, info: InfoNumbers) -> int:
    """
    Optimal window size rounded to the nearest integer, at least 1.

    Examples:
        >>> from wlcusum.models import ModelSpec, info_numbers
        >>> optimal_window(1e4, info_numbers(ModelSpec.gaussian(barrier=0.5), [1.0]))
        4
    """
    return max(1, int(math.floor(optimal_window_raw(gamma, info) + 0.5)))


def min_feasible_window(info: InfoNumbers) -> int:
    """Smallest window with Ihat0 > 0, i.e. w > trace(Sigma0 F0) / (2 I0)."""
    i0 = _positive_i0(info)
    w = max(1, int(math.floor(info.crlb_trace / (2.0 * i0))) + 1)
    while approx_info_numbers(info, w).Ihat0 <= 0.0:
        w += 1
    return w


def _feasible_ratio(info: InfoNumbers, w: int) -> tuple[float, float]:
    approx = approx_info_numbers(info, w)
    if approx.Ihat0 <= 0.0:
        raise InfeasibleWindowError(w, approx.Ihat0)
    return approx.Ihat0, approx.Jhat0 / approx.Ihat0


def wadd_upper_bound(gamma: float, w: int, info: InfoNumbers) -> float:
    """
    Upper bound on the worst-case average detection delay of the window-limited
    CUSUM with window ``w`` and threshold ``log(gamma)``.

    Raises:
        InfeasibleWindowError: If Ihat0(w) <= 0

    Examples:
        >>> from wlcusum.models import ModelSpec, info_numbers
        >>> info = info_numbers(ModelSpec.gaussian(barrier=0.5), [1.0])
        >>> round(wadd_upper_bound(1e4, 4, info), 2)
        62.39
    """
    log_gamma = threshold_single(gamma)
    w = InputValidator.positive_int('w', w)
    ihat0, ratio = _feasible_ratio(info, w)
    return (
        log_gamma
        + ratio
        + math.sqrt(ratio * log_gamma)
        + w * info.I0
        + math.sqrt(ratio * info.I0 * w)
    ) / ihat0


def overshoot_upper_bound(threshold: float, w: int, info: InfoNumbers) -> float:
    """
    Bound on the mean overshoot of the cumulative statistic U at its stopping
    time: ``r + sqrt(r * nu) + sqrt(r * I0 * w)`` with ``r = Jhat0 / Ihat0``.

    Raises:
        InfeasibleWindowError: If Ihat0(w) <= 0
    """
    threshold = InputValidator.threshold(threshold)
    w = InputValidator.positive_int('w', w)
    _, ratio = _feasible_ratio(info, w)
    return ratio + math.sqrt(ratio * threshold) + math.sqrt(ratio * info.I0 * w)


def parallel_wadd_upper_bound(gamma: float, max_window: int, info: InfoNumbers) -> float:
    """
    Delay bound for the parallel detector: the best single-window bound over
    feasible ``w <= max_window`` at the parallel threshold ``log(W * gamma)``.

    Raises:
        InfeasibleWindowError: If no window up to ``max_window`` is feasible
    """
    gamma = InputValidator.gamma(gamma)
    max_window = InputValidator.positive_int('max_window', max_window)
    smallest = min_feasible_window(info)
    if smallest > max_window:
        raise InfeasibleWindowError(max_window, approx_info_numbers(info, max_window).Ihat0)
    return min(
        wadd_upper_bound(max_window * gamma, w, info)
        for w in range(smallest, max_window + 1)
    )


def bound_argmin(gamma: float, info: InfoNumbers, windows: Iterable[int]) -> int:
    """
    Feasible window among ``windows`` minimizing ``wadd_upper_bound``.

    Raises:
        UsageError: If no window in ``windows`` is feasible
    """
    best: tuple[float, int] | None = None
    for w in windows:
        try:
            bound = wadd_upper_bound(gamma, w, info)
        except InfeasibleWindowError:
            continue
        if best is None or bound < best[0]:
            best = (bound, w)
    if best is None:
        raise UsageError("No feasible window in the requested range")
    return best[1]


def cusum_delay_first_order(gamma: float, i0: float) -> float:
    """
    First-order delay ``log(gamma) / I0`` of the exact CUSUM.

    Examples:
        >>> round(cusum_delay_first_order(1e4, 0.5), 2)
        18.42
    """
    log_gamma = threshold_single(gamma)
    if not i0 > 0.0:
        raise DomainError(f"I0 must be > 0, got {i0}")
    return log_gamma / i0


def glr_min_window(gamma: float, i0: float) -> int:
    """Smallest GLR window exceeding ``log(gamma) / I0``."""
    return int(math.floor(cusum_delay_first_order(gamma, i0))) + 1


def calibrate(gamma: float, info: InfoNumbers, max_window: int | None = None) -> CalibrationReport:
    """
    Thresholds, optimal window, first-order delay and delay bounds for ``gamma``.

    Args:
        gamma: Target ARL (> e)
        info: Information numbers of the true post-change parameter
        max_window: Largest window of a parallel detector; skips the parallel
            fields when None

    Examples:
        >>> from wlcusum.models import ModelSpec, info_numbers
        >>> report = calibrate(1e4, info_numbers(ModelSpec.gaussian(barrier=0.5), [1.0]))
        >>> round(report.threshold, 4), report.optimal_window
        (9.2103, 4)
    """
    raw = optimal_window_raw(gamma, info)
    w_opt = max(1, int(math.floor(raw + 0.5)))
    smallest = min_feasible_window(info)
    bound_window = max(w_opt, smallest)
    parallel_threshold = None
    parallel_bound = None
    if max_window is not None:
        parallel_threshold = threshold_parallel(gamma, max_window)
        if smallest <= max_window:
            parallel_bound = parallel_wadd_upper_bound(gamma, max_window, info)
    return CalibrationReport(
        gamma=float(gamma),
        threshold=threshold_single(gamma),
        optimal_window=w_opt,
        optimal_window_raw=raw,
        predicted_delay=cusum_delay_first_order(gamma, info.I0),
        bound_window=bound_window,
        wadd_upper_bound=wadd_upper_bound(gamma, bound_window, info),
        min_feasible_window=smallest,
        max_window=max_window,
        threshold_parallel=parallel_threshold,
        parallel_wadd_upper_bound=parallel_bound,
    )
