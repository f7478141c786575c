"""Unit tests for estimation.py - sliding windows and the prefix estimate bank."""

import numpy as np
import pytest
from wlcusum import InputError, NotReadyError
from wlcusum.estimation import REFRESH_INTERVAL, PrefixEstimateBank, SlidingWindow
from wlcusum.models import ModelSpec, window_mle


def test_push_evicts_oldest():
    """Test a full window drops its oldest sample."""
    window = SlidingWindow(2).push(1.0).push(2.0).push(3.0)
    np.testing.assert_array_equal(window.samples(), [[2.0], [3.0]])
    assert window.running_sum[0] == 5.0
    assert window.running_sq_sum[0] == 13.0


def test_capacity_one():
    """Test a window of one keeps only the latest sample."""
    window = SlidingWindow(1).push(4.0).push(7.0)
    assert window.running_sum[0] == 7.0
    assert window.full


def test_estimate_not_ready():
    """Test estimating a partially filled window fails."""
    window = SlidingWindow(3).push(1.0)
    with pytest.raises(NotReadyError) as exc_info:
        window.estimate(ModelSpec.gaussian())
    assert exc_info.value.required == 3
    assert exc_info.value.available == 1


def test_estimate_projected_mean():
    """Test the window estimate is the projected sample mean."""
    window = SlidingWindow(2).push(0.2).push(0.4)
    assert window.estimate(ModelSpec.gaussian(barrier=0.5))[0] == pytest.approx(0.5)


def test_estimate_dimension_mismatch():
    """Test a model of another dimension is rejected."""
    window = SlidingWindow(1, dimension=2).push([1.0, 2.0])
    with pytest.raises(InputError):
        window.estimate(ModelSpec.gaussian())


def test_push_dimension_mismatch():
    """Test pushing a vector of the wrong length fails."""
    with pytest.raises(InputError):
        SlidingWindow(2).push([1.0, 2.0])


def test_estimate_matches_window_mle():
    """Test running sums agree with a fresh MLE over the buffered samples."""
    model = ModelSpec.laplace_normal_unknown_var()
    rng = np.random.default_rng(11)
    window = SlidingWindow(5)
    for x in rng.normal(size=200):
        window.push(x)
    np.testing.assert_allclose(window.estimate(model), window_mle(model, window.samples()), atol=1e-12)


def test_reset_clears_window():
    """Test reset empties the buffer and sums."""
    window = SlidingWindow(2).push(1.0).push(2.0)
    window.reset()
    assert window.count == 0
    assert window.running_sum[0] == 0.0
    assert window.samples().shape == (0, 1)


def _assert_no_drift(pushes):
    rng = np.random.default_rng(12)
    window = SlidingWindow(7)
    for x in rng.normal(loc=1000.0, size=pushes):
        window.push_unchecked(np.array([x]))
    live = window.samples()
    assert window.running_sum[0] == pytest.approx(live.sum(), rel=1e-12)
    assert window.running_sq_sum[0] == pytest.approx((live * live).sum(), rel=1e-12)


def test_running_sums_refresh():
    """Test running sums stay exact across a refresh."""
    _assert_no_drift(2 * REFRESH_INTERVAL + 13)


@pytest.mark.slow
def test_running_sums_no_drift_long_run():
    """Test running sums after a million pushes."""
    _assert_no_drift(1_000_000)


def test_bank_example():
    """Test estimates for every window size."""
    bank = PrefixEstimateBank(2).push(1.0).push(3.0)
    estimates = bank.estimates_all(ModelSpec.gaussian(barrier=0.0))
    assert set(estimates) == {1, 2}
    assert estimates[1][0] == 3.0
    assert estimates[2][0] == 2.0


def test_bank_partial():
    """Test only window sizes covered by the data are available."""
    bank = PrefixEstimateBank(5).push(1.0).push(2.0)
    assert bank.available == 2
    assert set(bank.estimates_all(ModelSpec.gaussian())) == {1, 2}
    with pytest.raises(NotReadyError):
        bank.estimate_rows(ModelSpec.gaussian(), 3)


def test_bank_empty():
    """Test an empty bank is not ready."""
    with pytest.raises(NotReadyError):
        PrefixEstimateBank(3).estimates_all(ModelSpec.gaussian())


def test_bank_reset():
    """Test reset empties the bank."""
    bank = PrefixEstimateBank(3).push(1.0)
    bank.reset()
    assert bank.count == 0
    assert bank.available == 0


@pytest.mark.parametrize('model', [
    ModelSpec.gaussian(barrier=0.5),
    ModelSpec.gaussian(dimension=2, barrier=0.5),
    ModelSpec.laplace_normal_unknown_var(),
])
def test_bank_matches_sliding_windows_exactly(model):
    """Test bank estimates are identical to those of separate windows."""
    rng = np.random.default_rng(13)
    max_window = 6
    bank = PrefixEstimateBank(max_window, model.dimension)
    windows = [SlidingWindow(w, model.dimension) for w in range(1, max_window + 1)]
    for x in rng.normal(size=(300, model.dimension)):
        bank.push_unchecked(x)
        for window in windows:
            window.push_unchecked(x)
        estimates = bank.estimates_all(model)
        for w, theta in estimates.items():
            assert np.array_equal(theta, windows[w - 1].estimate(model))


def test_bank_matches_sliding_windows_after_refresh():
    """Test the identity survives the periodic refresh."""
    model = ModelSpec.gaussian(barrier=0.5)
    rng = np.random.default_rng(14)
    bank = PrefixEstimateBank(3)
    windows = [SlidingWindow(w) for w in range(1, 4)]
    for x in rng.normal(loc=2.0, size=(REFRESH_INTERVAL + 50, 1)):
        bank.push_unchecked(x)
        for window in windows:
            window.push_unchecked(x)
    rows = bank.estimate_rows(model)
    for w in range(1, 4):
        assert np.array_equal(rows[w - 1], windows[w - 1].estimate(model))
