"""Tests for montecarlo.py - seeded simulation, aggregation and result files."""

import logging
import math

import numpy as np
import pytest
from wlcusum import DomainError, UsageError
from wlcusum.calibration import cusum_delay_first_order, overshoot_upper_bound
from wlcusum.detectors import StoppingResult
from wlcusum.models import ModelSpec, info_numbers
from wlcusum.montecarlo import (
    CSV_COLUMNS,
    MAX_STEPS_WADD,
    ExperimentConfig,
    MethodSpec,
    MetricsRecord,
    RngStream,
    RunManifest,
    SweepConfig,
    aggregate,
    empirical_argmin,
    estimate_increment_moments,
    read_csv,
    run_trials,
    simulate_arl,
    simulate_async,
    simulate_wadd,
    sweep,
    window_search,
    write_csv,
)
from wlcusum.types import MethodKind, Regime, StopRule

MODEL = ModelSpec.gaussian(barrier=0.5)


def make_config(method='wlcusum(4)', gamma=1000.0, trials=200, regime=Regime.WADD, **kwargs):
    return ExperimentConfig(
        model=MODEL,
        theta=(1.0,),
        method=MethodSpec.parse(method),
        gammas=(gamma,),
        trials=trials,
        seed=kwargs.pop('seed', 7),
        regime=regime,
        **kwargs,
    )


# ---------------------------------------------------------------------------
# Configuration objects
# ---------------------------------------------------------------------------


def test_method_spec_parse():
    """Test method names with and without windows."""
    assert MethodSpec.parse('exact-cusum') == MethodSpec(MethodKind.EXACT_CUSUM)
    assert MethodSpec.parse(' wlcusum( 4 ) ') == MethodSpec(MethodKind.WLCUSUM, 4)
    assert str(MethodSpec.parse('parallel(15)')) == 'parallel(15)'
    assert str(MethodSpec.parse('cusum-min-strength')) == 'cusum-min-strength'


@pytest.mark.parametrize('text', ['foo', 'wlcusum', 'exact-cusum(3)', 'glr(0)', 'wlcusum(-1)'])
def test_method_spec_parse_errors(text):
    """Test malformed method strings are usage errors."""
    with pytest.raises(UsageError):
        MethodSpec.parse(text)


def test_experiment_config_validation():
    """Test trials, gamma and theta are validated."""
    with pytest.raises(UsageError):
        make_config(trials=0)
    with pytest.raises(DomainError):
        make_config(gamma=0.5)
    with pytest.raises(DomainError):
        ExperimentConfig(MODEL, (0.3,), MethodSpec.parse('exact-cusum'), (100.0,), 10, 0, Regime.WADD)


def test_resolve_max_steps():
    """Test default censoring horizons per regime."""
    assert make_config(regime=Regime.ARL).resolve_max_steps(1000.0) == 200_000
    assert make_config().resolve_max_steps(1000.0) == MAX_STEPS_WADD
    assert make_config(max_steps=50).resolve_max_steps(1000.0) == 50


def test_calibrated_threshold():
    """Test the parallel detector gets log(W * gamma)."""
    assert make_config('parallel(15)').calibrated_threshold(1000.0) == pytest.approx(math.log(15000))
    assert make_config('glr(30)').calibrated_threshold(1000.0) == pytest.approx(math.log(1000))


def test_sweep_cells():
    """Test one cell per method and regime."""
    config = SweepConfig(
        model=MODEL, theta=(1.0,),
        methods=(MethodSpec.parse('exact-cusum'), MethodSpec.parse('wlcusum(4)')),
        gammas=(100.0,), trials=5, seed=0, regimes=(Regime.ARL, Regime.WADD),
    )
    assert len(config.cells()) == 4
    with pytest.raises(UsageError):
        SweepConfig(model=MODEL, theta=(1.0,), methods=(), gammas=(100.0,), trials=5, seed=0)


def test_rng_stream_reproducible():
    """Test streams are keyed by (seed, index)."""
    a = RngStream(42, 3).generator().standard_normal(5)
    b = RngStream(42, 3).generator().standard_normal(5)
    c = RngStream(42, 4).generator().standard_normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


def test_simulate_is_deterministic():
    """Test reruns with the same seed give identical records."""
    config = make_config(trials=100)
    assert simulate_wadd(config) == simulate_wadd(config)


def test_seed_changes_results():
    """Test a different seed gives a different mean."""
    assert simulate_wadd(make_config(trials=100)).mean != simulate_wadd(make_config(trials=100, seed=8)).mean


def test_worker_count_does_not_change_results():
    """Test process-pool runs match the serial run."""
    config = make_config(trials=60)
    assert simulate_wadd(config.replace(workers=2)) == simulate_wadd(config)


async def test_simulate_async_matches_serial():
    """Test thread batches match the serial run."""
    config = make_config(trials=60)
    assert await simulate_async(config, batches=3) == simulate_wadd(config)


def test_regime_mismatch():
    """Test simulate_arl and simulate_wadd check the regime."""
    with pytest.raises(UsageError):
        simulate_arl(make_config())
    with pytest.raises(UsageError):
        simulate_wadd(make_config(regime=Regime.ARL))


def test_record_fields():
    """Test the record describes its cell."""
    record = simulate_wadd(make_config('parallel(15)', trials=50))
    assert (record.method, record.window, record.metric, record.trials) == ('parallel', 15, 'wadd', 50)
    assert record.gamma == 1000.0
    assert record.censored == 0
    assert record.stderr > 0.0
    assert record.mean_overshoot >= 0.0


def test_tiny_threshold_stops_right_after_warmup():
    """Test nu -> 0 gives stop times just after the warm-up."""
    w = 3
    results = run_trials(make_config('wlcusum(3)', trials=500, regime=Regime.ARL), threshold=1e-9)
    times = np.array([r.stop_time for r in results])
    assert times.min() >= w + 1
    assert times.mean() < w + 10


def test_censored_runs_are_counted(caplog):
    """Test runs past max_steps are censored and reported."""
    config = make_config('wlcusum(5)', trials=10, max_steps=3)
    with caplog.at_level(logging.WARNING, logger='wlcusum.montecarlo'):
        record = simulate_wadd(config)
    assert record.censored == 10
    assert record.mean == 3.0
    assert math.isnan(record.mean_overshoot)
    assert 'censored' in caplog.text


def test_aggregate_overshoot_skips_censored():
    """Test mean overshoot averages only alarmed runs."""
    config = make_config()
    record = aggregate(config, 1000.0, [
        StoppingResult(10, 1.0, math.nan, True),
        StoppingResult(4, 7.3, 0.4, False),
    ])
    assert record.mean == 7.0
    assert record.censored == 1
    assert record.mean_overshoot == pytest.approx(0.4)


def test_aggregate_single_trial():
    """Test one trial has zero standard error."""
    record = aggregate(make_config(), 1000.0, [StoppingResult(4, 7.3, 0.4, False)])
    assert record.stderr == 0.0


def test_exact_cusum_delay_near_first_order():
    """Test the exact CUSUM delay is within 25% of log(gamma) / I0."""
    record = simulate_wadd(make_config('exact-cusum', gamma=1e4, trials=1000))
    expected = cusum_delay_first_order(1e4, 0.5)
    assert abs(record.mean - expected) <= 0.25 * expected


def test_wlcusum_delay_not_below_exact():
    """Test estimating theta never beats knowing it."""
    exact = simulate_wadd(make_config('exact-cusum', gamma=1e4, trials=1000))
    limited = simulate_wadd(make_config('wlcusum(4)', gamma=1e4, trials=1000))
    assert limited.mean >= exact.mean - 2 * math.hypot(limited.stderr, exact.stderr)


def test_exact_cusum_arl_above_gamma():
    """Test the calibrated exact CUSUM has ARL >= gamma."""
    record = simulate_arl(make_config('exact-cusum', gamma=200.0, trials=300, regime=Regime.ARL))
    assert record.censored == 0
    assert record.mean >= 200.0


def test_wlcusum_arl_above_gamma():
    """Test the calibrated window-limited CUSUM has ARL >= gamma."""
    record = simulate_arl(make_config('wlcusum(5)', gamma=100.0, trials=200, regime=Regime.ARL))
    assert record.mean >= 100.0


@pytest.mark.slow
@pytest.mark.parametrize('method', ['exact-cusum', 'wlcusum(5)', 'parallel(15)'])
def test_arl_above_gamma_full(method):
    """Test ARL >= 200 at the calibrated thresholds with 2000 trials."""
    record = simulate_arl(make_config(method, gamma=200.0, trials=2000, regime=Regime.ARL))
    assert record.mean >= 200.0


@pytest.mark.slow
def test_delay_ordering_across_methods():
    """Test exact <= window-limited and parallel close to the optimal single window."""
    exact = simulate_wadd(make_config('exact-cusum', trials=1000))
    limited = simulate_wadd(make_config('wlcusum(4)', trials=1000))
    parallel = simulate_wadd(make_config('parallel(15)', trials=1000))
    assert exact.mean <= limited.mean
    assert abs(parallel.mean - limited.mean) <= 0.15 * limited.mean


@pytest.mark.slow
def test_empirical_window_argmin_near_optimal():
    """Test the simulated best window is within 3 of the optimal window."""
    records = window_search(make_config(gamma=1e4, trials=1000), 1e4, range(1, 16))
    assert abs(empirical_argmin(records) - 4) <= 3


def test_overshoot_within_bound():
    """Test the mean overshoot of U stays below its bound."""
    config = make_config('wlcusum(5)', trials=2000, stop_on=StopRule.CUMULATIVE)
    threshold = math.log(1e3)
    results = run_trials(config, threshold=threshold)
    overshoots = np.array([r.overshoot for r in results if not r.censored])
    se = overshoots.std(ddof=1) / math.sqrt(overshoots.size)
    bound = overshoot_upper_bound(threshold, 5, info_numbers(MODEL, [1.0]))
    assert overshoots.mean() <= bound + 3 * se


def test_increment_moments_match_leading_order():
    """Test the simulated Ihat0 at w=20 against I0 - K / (2w)."""
    moments = estimate_increment_moments(MODEL, [1.0], 20, 100_000, np.random.default_rng(41))
    assert abs(moments.ihat0 - 0.475) <= max(3 * moments.ihat0_se, 0.02)
    assert moments.draws == 100_000
    assert moments.jhat0 > moments.ihat0 ** 2


def test_sweep_records_sorted():
    """Test one record per (method, gamma), sorted by method then gamma."""
    config = SweepConfig(
        model=MODEL, theta=(1.0,),
        methods=tuple(MethodSpec.parse(m) for m in ('wlcusum(4)', 'glr(30)', 'exact-cusum', 'parallel(15)')),
        gammas=(1e4, 1e2, 1e3), trials=20, seed=3,
    )
    records = sweep(config)
    assert len(records) == 12
    assert [r.sort_key for r in records] == sorted(r.sort_key for r in records)
    assert [r.method for r in records[:3]] == ['exact-cusum'] * 3
    assert [r.gamma for r in records[:3]] == [1e2, 1e3, 1e4]


def test_window_search_single_window():
    """Test a one-window search returns that window."""
    records = window_search(make_config(trials=50), 1000.0, [5])
    assert [r.window for r in records] == [5]
    assert empirical_argmin(records) == 5


def test_window_search_errors():
    """Test non-windowed methods and empty ranges are rejected."""
    with pytest.raises(UsageError):
        window_search(make_config('exact-cusum'), 1000.0, [4])
    with pytest.raises(UsageError):
        window_search(make_config(), 1000.0, [])
    with pytest.raises(UsageError):
        empirical_argmin([])


# ---------------------------------------------------------------------------
# CSV and manifests
# ---------------------------------------------------------------------------


def test_write_csv_header_only(tmp_path):
    """Test an empty sweep writes just the header."""
    path = tmp_path / 'empty.csv'
    write_csv([], path)
    assert path.read_text() == ','.join(CSV_COLUMNS) + '\n'


def test_csv_read_back(tmp_path):
    """Test records survive a write and read, including NaN and empty windows."""
    records = [
        MetricsRecord('exact-cusum', 1000.0, None, 'wadd', 15.25, 0.125, 100, 0, 0.1),
        MetricsRecord('wlcusum', 1e4, 4, 'arl', 1.0 / 3.0, 0.0, 1, 1, math.nan),
    ]
    path = tmp_path / 'results.csv'
    write_csv(records, path)
    back = read_csv(path)
    assert back[0] == records[0]
    assert back[1].mean == records[1].mean
    assert back[1].window == 4
    assert math.isnan(back[1].mean_overshoot)


def test_write_csv_bad_path(tmp_path):
    """Test unwritable destinations name the path."""
    path = tmp_path / 'missing' / 'results.csv'
    with pytest.raises(OSError, match='missing'):
        write_csv([], path)


def test_manifest_write_read(tmp_path):
    """Test manifests are written next to the CSV and read back."""
    manifest = RunManifest(
        config={'model': {'family': 'gaussian', 'theta': [1.0]}},
        command='wlcusum simulate',
        tool_version='0.3.0',
        thresholds={'wlcusum(4)@1000.0': 6.907755278982137},
        output='results.csv',
    )
    path = manifest.write(RunManifest.path_for(tmp_path / 'results.csv'))
    assert path.name == 'results.csv.manifest.json'
    assert RunManifest.read(path) == manifest
