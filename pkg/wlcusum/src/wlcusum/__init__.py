"""
wlcusum - Window-limited CUSUM change detection.

Detects a change from a known pre-change law to a parametric post-change law
whose parameter is unknown. The window-limited CUSUM replaces the unknown
parameter with its MLE over the previous ``w`` samples; the library also ships
the exact CUSUM, a parallel bank of window sizes, and a window-limited GLR.

Built on numpy/scipy, provides:
- Detectors with a common ``step`` / ``reset`` surface and ``run_until_stop``
- Closed-form thresholds, optimal window size and delay bounds
- Seeded Monte Carlo estimation of ARL and worst-case delay, CSV output
- Result stores on SQLAlchemy, both sync and async

Examples:
    Detect a mean shift:
    >>> from wlcusum import ModelSpec, WindowLimitedCusum, run_until_stop, threshold_single
    >>> model = ModelSpec.gaussian(barrier=0.5)
    >>> detector = WindowLimitedCusum(model, window=4, threshold=threshold_single(1e4))
    >>> result = run_until_stop(detector, observations)
    >>> result.stop_time, result.overshoot

    Calibrate:
    >>> from wlcusum import calibrate, info_numbers
    >>> report = calibrate(1e4, info_numbers(model, [1.0]))
    >>> report.threshold, report.optimal_window
    (9.210340371976184, 4)

    Monte Carlo:
    >>> from wlcusum import ExperimentConfig, MethodSpec, Regime, simulate_wadd
    >>> config = ExperimentConfig(model, (1.0,), MethodSpec.parse('wlcusum(4)'),
    ...                           (1e4,), trials=1000, seed=7, regime=Regime.WADD)
    >>> simulate_wadd(config).mean

    Persist results:
    >>> store = await async_open_store('sqlite+aiosqlite:///results.db')
    >>> run_id = await store.save_run(manifest, records)
    >>> await store.close()
"""
from __future__ import annotations

__version__ = "0.3.0"

from .calibration import (
    CalibrationReport,
    calibrate,
    cusum_delay_first_order,
    optimal_window,
    overshoot_upper_bound,
    threshold_parallel,
    threshold_single,
    wadd_upper_bound,
)
from .detectors import (
    DetectorState,
    ExactCusum,
    ParallelWindowLimitedCusum,
    StoppingResult,
    WindowLimitedCusum,
    WindowLimitedGlr,
    cumulative_step,
    cusum_maxform_oracle,
    cusum_min_strength,
    cusum_step,
    glr_window_stat,
    parallel_step,
    run_until_stop,
    sr_step,
    wlcusum_step,
)
from .estimation import PrefixEstimateBank, SlidingWindow
from .exceptions import (
    ConfigError,
    DetectionError,
    DomainError,
    InfeasibleWindowError,
    InputError,
    NotReadyError,
    StoreError,
    UsageError,
)
from .models import (
    InfoNumbers,
    ModelSpec,
    ParameterSet,
    approx_info_numbers,
    info_numbers,
    llr,
    llr_batch,
    project,
    sample_post,
    sample_pre,
    window_mle,
)
from .montecarlo import (
    ExperimentConfig,
    MethodSpec,
    MetricsRecord,
    RngStream,
    RunManifest,
    SweepConfig,
    read_csv,
    simulate_arl,
    simulate_wadd,
    sweep,
    write_csv,
)
from .store import AsyncResultStore, ResultStore
from .types import FamilyKind, MethodKind, ParameterSetKind, Regime, StopRule

__author__ = "Veaceslav Kunitki"


def open_store(url: str, **engine_kwargs) -> ResultStore:
    """
    Open a sync result store.

    Args:
        url: SQLAlchemy URL (e.g., 'sqlite:///results.db')
        **engine_kwargs: Additional arguments for create_engine

    Examples:
        >>> store = open_store('sqlite:///:memory:')
        >>> store.runs()
        []
    """
    return ResultStore.connect(url, **engine_kwargs)


async def async_open_store(url: str, **engine_kwargs) -> AsyncResultStore:
    """
    Open an async result store.

    Args:
        url: SQLAlchemy async URL (e.g., 'sqlite+aiosqlite:///results.db')
        **engine_kwargs: Additional arguments for create_async_engine
    """
    return await AsyncResultStore.connect(url, **engine_kwargs)


__all__ = [
    # Models
    'ModelSpec',
    'ParameterSet',
    'InfoNumbers',
    'info_numbers',
    'approx_info_numbers',
    'llr',
    'llr_batch',
    'project',
    'window_mle',
    'sample_pre',
    'sample_post',
    # Estimation
    'SlidingWindow',
    'PrefixEstimateBank',
    # Detectors
    'DetectorState',
    'StoppingResult',
    'ExactCusum',
    'WindowLimitedCusum',
    'ParallelWindowLimitedCusum',
    'WindowLimitedGlr',
    'cusum_min_strength',
    'cusum_step',
    'cumulative_step',
    'sr_step',
    'wlcusum_step',
    'parallel_step',
    'glr_window_stat',
    'cusum_maxform_oracle',
    'run_until_stop',
    # Calibration
    'CalibrationReport',
    'calibrate',
    'threshold_single',
    'threshold_parallel',
    'optimal_window',
    'wadd_upper_bound',
    'overshoot_upper_bound',
    'cusum_delay_first_order',
    # Monte Carlo
    'ExperimentConfig',
    'SweepConfig',
    'MethodSpec',
    'MetricsRecord',
    'RngStream',
    'RunManifest',
    'simulate_arl',
    'simulate_wadd',
    'sweep',
    'write_csv',
    'read_csv',
    # Stores
    'ResultStore',
    'AsyncResultStore',
    'open_store',
    'async_open_store',
    # Types
    'FamilyKind',
    'ParameterSetKind',
    'MethodKind',
    'Regime',
    'StopRule',
    # Exceptions
    'DetectionError',
    'InputError',
    'DomainError',
    'UsageError',
    'NotReadyError',
    'InfeasibleWindowError',
    'ConfigError',
    'StoreError',
]
