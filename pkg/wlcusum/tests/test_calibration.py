"""Unit tests for calibration.py - thresholds, windows and delay bounds."""

import dataclasses
import math

import pytest
from wlcusum import DomainError, InfeasibleWindowError, UsageError
from wlcusum.calibration import (
    bound_argmin,
    calibrate,
    cusum_delay_first_order,
    glr_min_window,
    min_feasible_window,
    optimal_window,
    optimal_window_raw,
    overshoot_upper_bound,
    parallel_wadd_upper_bound,
    threshold_parallel,
    threshold_single,
    wadd_upper_bound,
)
from wlcusum.models import ModelSpec, info_numbers

INFO = info_numbers(ModelSpec.gaussian(barrier=0.5), [1.0])


def test_threshold_single():
    """Test threshold = log(gamma)."""
    assert threshold_single(1000) == pytest.approx(6.9078, abs=1e-4)
    assert threshold_single(math.e) == pytest.approx(1.0)
    assert threshold_single(1e4) == pytest.approx(9.2103, abs=1e-4)


@pytest.mark.parametrize('gamma', [1.0, 0.5, -3.0])
def test_threshold_single_rejects_small_gamma(gamma):
    """Test gamma <= 1 is a domain error."""
    with pytest.raises(DomainError):
        threshold_single(gamma)


def test_threshold_parallel():
    """Test threshold = log(W * gamma)."""
    assert threshold_parallel(1000, 15) == pytest.approx(9.6158, abs=1e-4)
    assert threshold_parallel(1e4, 10) == pytest.approx(11.5129, abs=1e-4)
    assert threshold_parallel(1000, 1) == threshold_single(1000)


def test_optimal_window_examples():
    """Test rounded optimal windows for the unit Gaussian shift."""
    assert optimal_window(1e4, INFO) == 4
    assert optimal_window(1e8, INFO) == 6


def test_optimal_window_needs_gamma_above_e():
    """Test gamma <= e is rejected."""
    with pytest.raises(DomainError):
        optimal_window(2.0, INFO)


def test_optimal_window_scaling():
    """Test sqrt(log gamma) growth and 1/I0 scaling."""
    assert optimal_window_raw(1e12, INFO) / optimal_window_raw(1e3, INFO) == pytest.approx(2.0)
    stronger = dataclasses.replace(INFO, I0=2 * INFO.I0)
    assert optimal_window_raw(1e4, stronger) == pytest.approx(optimal_window_raw(1e4, INFO) / 2)


def test_wadd_upper_bound_example():
    """Test the bound at gamma=1e4, w=4."""
    assert wadd_upper_bound(1e4, 4, INFO) == pytest.approx(62.39, abs=0.01)


def test_wadd_upper_bound_infeasible():
    """Test windows with Ihat0 <= 0 are rejected."""
    with pytest.raises(InfeasibleWindowError) as exc_info:
        wadd_upper_bound(1e4, 1, INFO)
    assert exc_info.value.window == 1
    assert wadd_upper_bound(1e4, 2, INFO) > 0.0


def test_wadd_upper_bound_exceeds_first_order_delay():
    """Test the bound is above log(gamma) / I0 for every feasible window."""
    for w in range(2, 31):
        assert wadd_upper_bound(1e4, w, INFO) > cusum_delay_first_order(1e4, INFO.I0)


@pytest.mark.parametrize('gamma', [1e3, 1e4, 1e6])
def test_bound_argmin_near_optimal_window(gamma):
    """Test the bound is unimodal and its argmin lies within [w*, 2 w*]."""
    windows = range(2, 41)
    bounds = [wadd_upper_bound(gamma, w, INFO) for w in windows]
    best = bound_argmin(gamma, INFO, windows)
    k = best - 2
    assert all(a > b for a, b in zip(bounds[:k], bounds[1:k + 1]))
    assert all(a < b for a, b in zip(bounds[k:], bounds[k + 1:]))
    w_opt = optimal_window(gamma, INFO)
    assert w_opt <= best <= 2 * w_opt


def test_bound_argmin_skips_infeasible():
    """Test infeasible windows are ignored and an all-infeasible range fails."""
    assert bound_argmin(1e4, INFO, [1, 4]) == 4
    with pytest.raises(UsageError):
        bound_argmin(1e4, INFO, [1])


def test_min_feasible_window():
    """Test the smallest window with Ihat0 > 0."""
    assert min_feasible_window(INFO) == 2
    assert min_feasible_window(info_numbers(ModelSpec.gaussian(barrier=0.5), [2.0])) == 1


def test_cusum_delay_first_order():
    """Test log(gamma) / I0."""
    assert cusum_delay_first_order(1e4, 0.5) == pytest.approx(18.42, abs=0.01)
    assert cusum_delay_first_order(math.e, 1.0) == pytest.approx(1.0)
    assert cusum_delay_first_order(1e3, 0.125) == pytest.approx(55.26, abs=0.01)
    with pytest.raises(DomainError):
        cusum_delay_first_order(1e3, 0.0)


def test_glr_min_window():
    """Test the smallest GLR window above log(gamma) / I0."""
    assert glr_min_window(1e4, 0.5) == 19


def test_overshoot_upper_bound():
    """Test the overshoot bound at w=5, nu=log(1000)."""
    assert overshoot_upper_bound(math.log(1e3), 5, INFO) == pytest.approx(11.108, abs=1e-3)


def test_parallel_bound_is_best_single_bound_at_parallel_threshold():
    """Test the parallel bound is the minimum over windows at gamma * W."""
    bound = parallel_wadd_upper_bound(1e3, 15, INFO)
    assert bound == pytest.approx(min(wadd_upper_bound(15e3, w, INFO) for w in range(2, 16)))
    assert bound > min(wadd_upper_bound(1e3, w, INFO) for w in range(2, 16))


def test_parallel_bound_infeasible():
    """Test a bank with only infeasible windows is rejected."""
    with pytest.raises(InfeasibleWindowError):
        parallel_wadd_upper_bound(1e3, 1, INFO)


def test_calibrate_report():
    """Test the full calibration summary."""
    report = calibrate(1e4, INFO, max_window=15)
    assert report.threshold == pytest.approx(9.2103, abs=1e-4)
    assert report.optimal_window == 4
    assert report.bound_window == 4
    assert report.wadd_upper_bound == pytest.approx(62.39, abs=0.01)
    assert report.predicted_delay == pytest.approx(18.42, abs=0.01)
    assert report.min_feasible_window == 2
    assert report.threshold_parallel == pytest.approx(math.log(15e4))
    assert report.parallel_wadd_upper_bound is not None


def test_calibrate_uses_feasible_window():
    """Test an infeasible optimal window falls back to the smallest feasible one."""
    report = calibrate(3.0, INFO)
    assert report.optimal_window == 1
    assert report.bound_window == 2
    assert report.threshold_parallel is None
