"""
Seeded Monte Carlo estimation of ARL and worst-case delay.

Every trial draws from its own generator keyed by ``(seed, trial_index)``, and
results are aggregated in trial-index order, so serial, process-pool and
asyncio runs of the same config give identical records.

Examples:
    >>> from wlcusum.models import ModelSpec
    >>> config = ExperimentConfig(
    ...     model=ModelSpec.gaussian(barrier=0.5),
    ...     theta=(1.0,),
    ...     method=MethodSpec.parse('wlcusum(4)'),
    ...     gammas=(1000.0,),
    ...     trials=200,
    ...     seed=1,
    ...     regime=Regime.WADD,
    ... )
    >>> record = simulate_wadd(config)
    >>> record.metric, record.window
    ('wadd', 4)
"""
from __future__ import annotations

import asyncio
import csv
import dataclasses
import json
import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterator, Sequence

import numpy as np

from .calibration import threshold_parallel, threshold_single
from .detectors import (
    Detector,
    ExactCusum,
    ParallelWindowLimitedCusum,
    StoppingResult,
    WindowLimitedCusum,
    WindowLimitedGlr,
    cusum_min_strength,
    run_until_stop,
)
from .exceptions import DomainError, UsageError
from .models import (
    ModelSpec,
    llr_pairs,
    mle_from_sums,
    sample_post_block,
    sample_pre_block,
)
from .types import MethodKind, Regime, StopRule, Vector
from .validators import InputValidator

logger = logging.getLogger(__name__)

MAX_STEPS_ARL_FACTOR = 200
MAX_STEPS_WADD = 100_000

CSV_COLUMNS = (
    'method', 'gamma', 'window', 'metric', 'mean',
    'stderr', 'trials', 'censored', 'mean_overshoot',
)

_METHOD_PATTERN = re.compile(r'^\s*([a-z-]+)\s*(?:\(\s*(\d+)\s*\))?\s*$')


@dataclass(frozen=True)
class MethodSpec:
    """
    A detection method with its window argument, e.g. ``wlcusum(4)``.

    Examples:
        >>> MethodSpec.parse('parallel(15)')
        MethodSpec(kind=<MethodKind.PARALLEL: 'parallel'>, window=15)
        >>> str(MethodSpec.parse('exact-cusum'))
        'exact-cusum'
    """

    kind: MethodKind
    window: int | None = None

    def __post_init__(self):
        if self.kind.windowed:
            if self.window is None:
                raise UsageError(f"Method {self.kind.value} needs a window, e.g. {self.kind.value}(4)")
            InputValidator.positive_int('window', self.window)
        elif self.window is not None:
            raise UsageError(f"Method {self.kind.value} takes no window")

    @classmethod
    def parse(cls, text: str) -> 'MethodSpec':
        """
        Raises:
            UsageError: On unknown method names or malformed window arguments
        """
        match = _METHOD_PATTERN.match(str(text))
        if match is None:
            raise UsageError(f"Cannot parse method {text!r}")
        name, window = match.groups()
        try:
            kind = MethodKind(name)
        except ValueError:
            known = ', '.join(k.value for k in MethodKind)
            raise UsageError(f"Unknown method {name!r}; expected one of {known}") from None
        return cls(kind, int(window) if window is not None else None)

    def with_window(self, window: int) -> 'MethodSpec':
        return MethodSpec(self.kind, window)

    def __str__(self) -> str:
        if self.window is None:
            return self.kind.value
        return f"{self.kind.value}({self.window})"


@dataclass(frozen=True)
class ExperimentConfig:
    """
    One method under one regime, over one or more target ARLs.

    ``max_steps`` defaults to ``200 * gamma`` for ARL runs and ``10**5`` for
    delay runs. ``stop_on`` only affects ``wlcusum`` methods.
    """

    model: ModelSpec
    theta: tuple[float, ...]
    method: MethodSpec
    gammas: tuple[float, ...]
    trials: int
    seed: int
    regime: Regime
    max_steps: int | None = None
    workers: int = 1
    stop_on: StopRule = StopRule.CUSUM

    def __post_init__(self):
        object.__setattr__(self, 'theta', tuple(float(v) for v in np.atleast_1d(self.theta)))
        object.__setattr__(self, 'gammas', tuple(InputValidator.gamma(g) for g in self.gammas))
        if not self.gammas:
            raise UsageError("At least one gamma is required")
        InputValidator.positive_int('trials', self.trials)
        InputValidator.positive_int('workers', self.workers)
        if self.max_steps is not None:
            InputValidator.positive_int('max_steps', self.max_steps)
        theta = self.model.check_theta(self.theta)
        if not self.model.parameter_set.contains(theta):
            raise DomainError(f"Parameter {list(self.theta)} is outside the admissible set")

    @property
    def theta_vector(self) -> Vector:
        return np.array(self.theta, dtype=np.float64)

    def resolve_max_steps(self, gamma: float) -> int:
        if self.max_steps is not None:
            return self.max_steps
        if self.regime == Regime.ARL:
            return int(math.ceil(MAX_STEPS_ARL_FACTOR * gamma))
        return MAX_STEPS_WADD

    def calibrated_threshold(self, gamma: float) -> float:
        """``log(W * gamma)`` for the parallel detector, ``log(gamma)`` otherwise."""
        if self.method.kind == MethodKind.PARALLEL:
            return threshold_parallel(gamma, self.method.window)
        return threshold_single(gamma)

    def replace(self, **changes: Any) -> 'ExperimentConfig':
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class SweepConfig:
    """
    Cartesian product of methods, regimes and target ARLs.

    Examples:
        >>> from wlcusum.models import ModelSpec
        >>> sweep_config = SweepConfig(
        ...     model=ModelSpec.gaussian(), theta=(1.0,),
        ...     methods=(MethodSpec.parse('exact-cusum'), MethodSpec.parse('wlcusum(4)')),
        ...     gammas=(100.0, 1000.0), trials=10, seed=0,
        ... )
        >>> len(sweep_config.cells())
        2
    """

    model: ModelSpec
    theta: tuple[float, ...]
    methods: tuple[MethodSpec, ...]
    gammas: tuple[float, ...]
    trials: int
    seed: int
    regimes: tuple[Regime, ...] = (Regime.WADD,)
    max_steps: int | None = None
    workers: int = 1

    def __post_init__(self):
        if not self.methods:
            raise UsageError("At least one method is required")
        if not self.regimes:
            raise UsageError("At least one regime is required")

    def cells(self) -> list[ExperimentConfig]:
        """One ExperimentConfig per (method, regime)."""
        return [
            ExperimentConfig(
                model=self.model,
                theta=self.theta,
                method=method,
                gammas=self.gammas,
                trials=self.trials,
                seed=self.seed,
                regime=regime,
                max_steps=self.max_steps,
                workers=self.workers,
            )
            for method in self.methods
            for regime in self.regimes
        ]


@dataclass(frozen=True)
class MetricsRecord:
    """Aggregate of one (method, gamma, window, metric) cell."""

    method: str
    gamma: float
    window: int | None
    metric: str
    mean: float
    stderr: float
    trials: int
    censored: int
    mean_overshoot: float

    @property
    def sort_key(self) -> tuple[str, int, float, str]:
        return (self.method, self.window or 0, self.gamma, self.metric)


@dataclass(frozen=True)
class RngStream:
    """
    Reproducible generator for one trial.

    Examples:
        >>> a = RngStream(42, 3).generator().standard_normal()
        >>> b = RngStream(42, 3).generator().standard_normal()
        >>> a == b
        True
    """

    root_seed: int
    index: int

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.root_seed, spawn_key=(self.index,))
        return np.random.Generator(np.random.PCG64(seq))


class ObservationSource:
    """
    Endless stream of observations drawn in blocks.

    ``theta=None`` draws pre-change data; otherwise post-change data at ``theta``.
    """

    def __init__(
        self,
        model: ModelSpec,
        rng: np.random.Generator,
        theta: Vector | None = None,
        block_size: int = 256,
    ):
        self.model = model
        self.rng = rng
        self.theta = theta
        self.block_size = block_size

    def __iter__(self) -> Iterator[Vector]:
        while True:
            if self.theta is None:
                block = sample_pre_block(self.model, self.rng, self.block_size)
            else:
                block = sample_post_block(self.model, self.theta, self.rng, self.block_size)
            yield from block


def build_detector(config: ExperimentConfig, threshold: float) -> Detector:
    """Detector for ``config.method`` at the given threshold."""
    model = config.model
    method = config.method
    if method.kind == MethodKind.EXACT_CUSUM:
        return ExactCusum(model, config.theta_vector, threshold)
    if method.kind == MethodKind.CUSUM_MIN_STRENGTH:
        return cusum_min_strength(model, config.theta_vector, threshold)
    if method.kind == MethodKind.WLCUSUM:
        return WindowLimitedCusum(model, method.window, threshold, stop_on=config.stop_on)
    if method.kind == MethodKind.PARALLEL:
        return ParallelWindowLimitedCusum(model, method.window, threshold)
    return WindowLimitedGlr(model, method.window, threshold)


def _simulate_chunk(args: tuple[ExperimentConfig, float, int, int]) -> list[StoppingResult]:
    """
    Run trials ``start..stop-1`` of one cell.

    Module level so ProcessPoolExecutor can pickle it.
    """
    config, threshold, start, stop = args
    detector = build_detector(config, threshold)
    theta = config.theta_vector if config.regime == Regime.WADD else None
    max_steps = config.resolve_max_steps(config.gammas[0])
    block = min(max_steps, 256)
    results = []
    for index in range(start, stop):
        source = ObservationSource(config.model, RngStream(config.seed, index).generator(), theta, block)
        results.append(run_until_stop(detector, source, max_steps=max_steps, validate=False))
    return results


def _chunks(trials: int, parts: int) -> list[tuple[int, int]]:
    bounds = np.linspace(0, trials, parts + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _resolve(config: ExperimentConfig, gamma: float | None, threshold: float | None) -> tuple[ExperimentConfig, float, float]:
    gamma = config.gammas[0] if gamma is None else InputValidator.gamma(gamma)
    threshold = config.calibrated_threshold(gamma) if threshold is None else InputValidator.threshold(threshold)
    # Pin the cell to a single gamma so workers resolve the same horizon.
    return config.replace(gammas=(gamma,)), gamma, threshold


def run_trials(
    config: ExperimentConfig,
    gamma: float | None = None,
    threshold: float | None = None,
) -> list[StoppingResult]:
    """
    Per-trial stopping results in trial-index order.

    Args:
        config: Experiment cell
        gamma: Target ARL; the first of ``config.gammas`` if None
        threshold: Overrides the calibrated threshold
    """
    cell, gamma, threshold = _resolve(config, gamma, threshold)
    if cell.workers == 1:
        return _simulate_chunk((cell, threshold, 0, cell.trials))
    chunks = [(cell, threshold, a, b) for a, b in _chunks(cell.trials, cell.workers)]
    results: list[StoppingResult] = []
    with ProcessPoolExecutor(max_workers=cell.workers) as executor:
        for part in executor.map(_simulate_chunk, chunks):
            results.extend(part)
    return results


def aggregate(config: ExperimentConfig, gamma: float, results: Sequence[StoppingResult]) -> MetricsRecord:
    """
    Mean stop time with its standard error; censored runs count at their stop time.

    Examples:
        >>> from wlcusum.models import ModelSpec
        >>> config = ExperimentConfig(ModelSpec.gaussian(), (1.0,), MethodSpec.parse('exact-cusum'),
        ...                           (100.0,), 2, 0, Regime.WADD)
        >>> aggregate(config, 100.0, [StoppingResult(4, 5.0, 0.4, False),
        ...                           StoppingResult(6, 5.0, 0.6, False)]).mean
        5.0
    """
    times = np.array([r.stop_time for r in results], dtype=np.float64)
    overshoots = np.array([r.overshoot for r in results if not r.censored], dtype=np.float64)
    n = times.size
    stderr = float(times.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return MetricsRecord(
        method=config.method.kind.value,
        gamma=float(gamma),
        window=config.method.window,
        metric=config.regime.value,
        mean=float(times.mean()),
        stderr=stderr,
        trials=n,
        censored=sum(1 for r in results if r.censored),
        mean_overshoot=float(overshoots.mean()) if overshoots.size else math.nan,
    )


def simulate(
    config: ExperimentConfig,
    gamma: float | None = None,
    threshold: float | None = None,
) -> MetricsRecord:
    """Run one cell under its own regime and aggregate."""
    cell, gamma, threshold = _resolve(config, gamma, threshold)
    results = run_trials(cell, gamma, threshold)
    record = aggregate(cell, gamma, results)
    if record.censored:
        logger.warning(
            "%s %s gamma=%g: %d of %d trials censored at %d steps",
            config.method, config.regime.value, gamma, record.censored,
            record.trials, cell.resolve_max_steps(gamma),
        )
    logger.info(
        "%s %s gamma=%g threshold=%.6g: mean=%.6g se=%.3g",
        config.method, config.regime.value, gamma, threshold, record.mean, record.stderr,
    )
    return record


def simulate_arl(
    config: ExperimentConfig,
    gamma: float | None = None,
    threshold: float | None = None,
) -> MetricsRecord:
    """
    Average run length with all data drawn pre-change.

    Raises:
        UsageError: If the config is not an ARL cell
    """
    if config.regime != Regime.ARL:
        raise UsageError("simulate_arl needs regime 'arl'")
    return simulate(config, gamma, threshold)


def simulate_wadd(
    config: ExperimentConfig,
    gamma: float | None = None,
    threshold: float | None = None,
) -> MetricsRecord:
    """
    Worst-case delay with the change at time 0; stop times include warm-up.

    Raises:
        UsageError: If the config is not a WADD cell
    """
    if config.regime != Regime.WADD:
        raise UsageError("simulate_wadd needs regime 'wadd'")
    return simulate(config, gamma, threshold)


async def simulate_async(
    config: ExperimentConfig,
    gamma: float | None = None,
    threshold: float | None = None,
    batches: int = 4,
) -> MetricsRecord:
    """``simulate`` with trial batches run in worker threads."""
    cell, gamma, threshold = _resolve(config, gamma, threshold)
    chunks = [(cell, threshold, a, b) for a, b in _chunks(cell.trials, batches)]
    parts = await asyncio.gather(*(asyncio.to_thread(_simulate_chunk, chunk) for chunk in chunks))
    return aggregate(cell, gamma, [r for part in parts for r in part])


def sweep(sweep_config: SweepConfig) -> list[MetricsRecord]:
    """One record per (method, regime, gamma), sorted by method then gamma."""
    records = []
    cells = sweep_config.cells()
    for i, cell in enumerate(cells, start=1):
        logger.info("Cell %d/%d: %s %s", i, len(cells), cell.method, cell.regime.value)
        for gamma in cell.gammas:
            records.append(simulate(cell, gamma))
    return sorted(records, key=lambda r: r.sort_key)


def window_search(config: ExperimentConfig, gamma: float, windows: Sequence[int]) -> list[MetricsRecord]:
    """
    Worst-case delay of ``config.method`` for each window size.

    Raises:
        UsageError: If ``windows`` is empty or the method takes no window
    """
    if not config.method.kind.windowed:
        raise UsageError(f"Method {config.method} has no window to search")
    windows = [InputValidator.positive_int('window', w) for w in windows]
    if not windows:
        raise UsageError("Window range is empty")
    cell = config.replace(regime=Regime.WADD)
    return [simulate(cell.replace(method=cell.method.with_window(w)), gamma) for w in windows]


def empirical_argmin(records: Sequence[MetricsRecord]) -> int:
    """
    Window of the record with the smallest mean; ties go to the smaller window.

    Raises:
        UsageError: If there are no windowed records
    """
    candidates = [r for r in records if r.window is not None]
    if not candidates:
        raise UsageError("No windowed records to search")
    return min(candidates, key=lambda r: (r.mean, r.window)).window


@dataclass(frozen=True)
class IncrementMoments:
    """Monte Carlo Ihat0 and Jhat0 with standard errors."""

    ihat0: float
    ihat0_se: float
    jhat0: float
    jhat0_se: float
    draws: int


def estimate_increment_moments(
    model: ModelSpec,
    theta: Any,
    w: int,
    n: int,
    rng: np.random.Generator,
) -> IncrementMoments:
    """
    First and second moments of the window-limited increment under post-change
    data: ``llr(x, theta_hat)`` with ``theta_hat`` fitted on ``w`` independent
    post-change samples.
    """
    theta = model.check_theta(theta)
    w = InputValidator.positive_int('w', w)
    n = InputValidator.positive_int('n', n)
    xs = sample_post_block(model, theta, rng, n * (w + 1)).reshape(n, w + 1, model.dimension)
    fit = xs[:, :w]
    thetas = mle_from_sums(model, np.full(n, float(w)), fit.sum(axis=1), (fit * fit).sum(axis=1))
    ell = llr_pairs(model, xs[:, w], thetas)
    ell_sq = ell * ell
    root_n = math.sqrt(n)
    return IncrementMoments(
        ihat0=float(ell.mean()),
        ihat0_se=float(ell.std(ddof=1) / root_n) if n > 1 else 0.0,
        jhat0=float(ell_sq.mean()),
        jhat0_se=float(ell_sq.std(ddof=1) / root_n) if n > 1 else 0.0,
        draws=n,
    )


# ---------------------------------------------------------------------------
# CSV and manifests
# ---------------------------------------------------------------------------


def _format_float(value: float) -> str:
    return repr(float(value))


def write_csv(records: Sequence[MetricsRecord], destination: str | Path) -> None:
    """
    Write records with the fixed column order; floats keep full precision.

    Raises:
        OSError: With the destination path in the message
    """
    path = Path(destination)
    try:
        with path.open('w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(CSV_COLUMNS)
            for r in records:
                writer.writerow([
                    r.method,
                    _format_float(r.gamma),
                    '' if r.window is None else r.window,
                    r.metric,
                    _format_float(r.mean),
                    _format_float(r.stderr),
                    r.trials,
                    r.censored,
                    _format_float(r.mean_overshoot),
                ])
    except OSError as e:
        raise OSError(f"Cannot write results to {path}: {e}") from e


def read_csv(source: str | Path) -> list[MetricsRecord]:
    """Parse a file written by ``write_csv``."""
    path = Path(source)
    try:
        with path.open(newline='', encoding='utf-8') as f:
            rows = list(csv.DictReader(f))
    except OSError as e:
        raise OSError(f"Cannot read results from {path}: {e}") from e
    return [
        MetricsRecord(
            method=row['method'],
            gamma=float(row['gamma']),
            window=int(row['window']) if row['window'] else None,
            metric=row['metric'],
            mean=float(row['mean']),
            stderr=float(row['stderr']),
            trials=int(row['trials']),
            censored=int(row['censored']),
            mean_overshoot=float(row['mean_overshoot']),
        )
        for row in rows
    ]


@dataclass
class RunManifest:
    """
    Everything needed to rerun a CSV: the resolved config plus provenance.

    ``config`` is the mapping accepted by ``config.sweep_config_from_mapping``.
    """

    config: dict[str, Any]
    command: str
    tool_version: str
    created_at: str = field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec='seconds')
    )
    thresholds: dict[str, float] = field(default_factory=dict)
    output: str | None = None

    @staticmethod
    def path_for(csv_path: str | Path) -> Path:
        """Manifest location next to a CSV: ``results.csv`` -> ``results.csv.manifest.json``."""
        csv_path = Path(csv_path)
        return csv_path.with_name(csv_path.name + '.manifest.json')

    def write(self, destination: str | Path) -> Path:
        path = Path(destination)
        try:
            path.write_text(json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + '\n', encoding='utf-8')
        except OSError as e:
            raise OSError(f"Cannot write manifest to {path}: {e}") from e
        return path

    @classmethod
    def read(cls, source: str | Path) -> 'RunManifest':
        path = Path(source)
        try:
            data = json.loads(path.read_text(encoding='utf-8'))
        except OSError as e:
            raise OSError(f"Cannot read manifest {path}: {e}") from e
        return cls(**data)
