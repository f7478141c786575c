"""
Command-line interface.

Subcommands:

- ``calibrate``: thresholds, optimal window and delay bounds for a target ARL
- ``window-opt``: the delay bound as a function of the window size
- ``simulate``: Monte Carlo sweep written to CSV plus a run manifest
- ``window-search``: Monte Carlo delay versus window size, with the argmin
- ``detect``: run a detector over an observation file

Exit codes: 0 success, 2 usage error, 1 runtime error.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
from pathlib import Path
from typing import Any, Iterator, Sequence, TextIO

from . import __version__
from .calibration import (
    bound_argmin,
    calibrate,
    optimal_window,
    wadd_upper_bound,
)
from .config import load_config, model_from_mapping, sweep_config_from_mapping, sweep_config_to_mapping
from .detectors import DetectorState, run_until_stop
from .exceptions import (
    DetectionError,
    DomainError,
    InfeasibleWindowError,
    InputError,
    UsageError,
)
from .models import ModelSpec, approx_info_numbers, info_numbers
from .montecarlo import (
    ExperimentConfig,
    MethodSpec,
    RunManifest,
    SweepConfig,
    build_detector,
    empirical_argmin,
    sweep,
    window_search,
    write_csv,
)
from .types import FamilyKind, MethodKind, Regime
from .validators import InputValidator

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Argument helpers
# ---------------------------------------------------------------------------


def parse_floats(text: str) -> list[float]:
    """Comma-separated reals, e.g. ``0.5,-1``."""
    try:
        return [float(part) for part in text.split(',')]
    except ValueError:
        raise UsageError(f"Expected comma-separated numbers, got {text!r}") from None


def parse_windows(text: str) -> list[int]:
    """
    A window range ``a-b`` (inclusive) or a single window ``a``.

    Examples:
        >>> parse_windows('3-5')
        [3, 4, 5]
        >>> parse_windows('5')
        [5]
    """
    try:
        if '-' in text:
            lo, hi = (int(part) for part in text.split('-', 1))
        else:
            lo = hi = int(text)
    except ValueError:
        raise UsageError(f"Expected a window range like 1-15, got {text!r}") from None
    if lo < 1 or hi < lo:
        raise UsageError(f"Window range {text!r} is empty")
    return list(range(lo, hi + 1))


def _default_theta(family: str, dimension: int) -> list[float]:
    if family == FamilyKind.LAPLACE_NORMAL_UNKNOWN_VAR.value:
        return [1.0, 1.0]
    if family == FamilyKind.GAUSSIAN.value:
        return [1.0] + [0.0] * (dimension - 1)
    return [1.0]


def _model_mapping(args: argparse.Namespace) -> dict[str, Any]:
    dimension = args.dimension if args.dimension is not None else 1
    theta = parse_floats(args.theta) if args.theta else _default_theta(args.model, dimension)
    mapping: dict[str, Any] = {'family': args.model, 'theta': theta}
    if args.model == FamilyKind.GAUSSIAN.value:
        mapping['dimension'] = dimension
        mapping['barrier'] = args.barrier
    elif args.model == FamilyKind.LAPLACE_NORMAL.value:
        mapping['variance'] = args.variance
    return mapping


def _model_from_args(args: argparse.Namespace) -> tuple[ModelSpec, tuple[float, ...]]:
    return model_from_mapping(_model_mapping(args))


def _sweep_from_args(args: argparse.Namespace, default_methods: Sequence[str]) -> SweepConfig:
    """Config from ``--config`` with flag overrides, or from flags alone."""
    if args.config:
        config = load_config(args.config)
        overrides: dict[str, Any] = {}
        if args.method:
            overrides['methods'] = tuple(MethodSpec.parse(m) for m in args.method)
        if args.gamma:
            overrides['gammas'] = tuple(InputValidator.gamma(g) for g in args.gamma)
        if args.trials is not None:
            overrides['trials'] = InputValidator.positive_int('trials', args.trials)
        if args.seed is not None:
            overrides['seed'] = InputValidator.seed(args.seed)
        if args.max_steps is not None:
            overrides['max_steps'] = InputValidator.positive_int('max_steps', args.max_steps)
        if args.workers is not None:
            overrides['workers'] = InputValidator.positive_int('workers', args.workers)
        if args.regime:
            overrides['regimes'] = tuple(dict.fromkeys(Regime(r) for r in args.regime))
        return dataclasses.replace(config, **overrides)

    experiment: dict[str, Any] = {
        'methods': args.method or list(default_methods),
        'gammas': args.gamma or [1000.0],
        'trials': args.trials if args.trials is not None else 1000,
        'seed': InputValidator.seed(args.seed) if args.seed is not None else 0,
        'regimes': args.regime or ['wadd'],
        'workers': args.workers if args.workers is not None else 1,
    }
    if args.max_steps is not None:
        experiment['max_steps'] = args.max_steps
    return sweep_config_from_mapping({'model': _model_mapping(args), 'experiment': experiment})


def _write_outputs(
    args: argparse.Namespace,
    command: str,
    config: SweepConfig,
    records: list,
    out: TextIO,
) -> None:
    thresholds = {
        f"{cell.method}@{gamma:g}": cell.calibrated_threshold(gamma)
        for cell in config.cells()
        for gamma in cell.gammas
    }
    manifest = RunManifest(
        config=sweep_config_to_mapping(config),
        command=command,
        tool_version=__version__,
        thresholds=thresholds,
        output=str(args.out) if args.out else None,
    )
    if args.out:
        write_csv(records, args.out)
        manifest_path = manifest.write(RunManifest.path_for(args.out))
        print(f"wrote {len(records)} records to {args.out} (manifest {manifest_path})", file=out)
    if args.db:
        from .store import ResultStore

        store = ResultStore.connect(args.db)
        try:
            run_id = store.save_run(manifest, records)
        finally:
            store.close()
        print(f"saved run {run_id} to {args.db}", file=out)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_calibrate(args: argparse.Namespace, out: TextIO) -> int:
    """Print thresholds, the optimal window, first-order delay and bounds."""
    gamma = InputValidator.gamma(args.gamma)
    model, theta = _model_from_args(args)
    info = info_numbers(model, theta)
    report = calibrate(gamma, info, args.max_window)
    print(f"gamma={report.gamma:g}", file=out)
    print(f"threshold={report.threshold:.4f}", file=out)
    if report.threshold_parallel is not None:
        print(f"threshold_parallel={report.threshold_parallel:.4f} (W={report.max_window})", file=out)
    print(f"optimal_window={report.optimal_window} (raw {report.optimal_window_raw:.4f})", file=out)
    print(f"min_feasible_window={report.min_feasible_window}", file=out)
    print(f"first_order_delay={report.predicted_delay:.4f}", file=out)
    print(f"wadd_upper_bound={report.wadd_upper_bound:.4f} (w={report.bound_window})", file=out)
    if report.parallel_wadd_upper_bound is not None:
        print(f"parallel_wadd_upper_bound={report.parallel_wadd_upper_bound:.4f}", file=out)
    return 0


def cmd_window_opt(args: argparse.Namespace, out: TextIO) -> int:
    """Print the delay bound for each window and compare its argmin with the formula."""
    gamma = InputValidator.gamma(args.gamma)
    model, theta = _model_from_args(args)
    info = info_numbers(model, theta)
    windows = parse_windows(args.windows)
    for w in windows:
        try:
            print(f"w={w} bound={wadd_upper_bound(gamma, w, info):.4f}", file=out)
        except InfeasibleWindowError as e:
            print(f"w={w} infeasible (Ihat0={e.ihat0:.4g})", file=out)
    print(f"bound_argmin={bound_argmin(gamma, info, windows)}", file=out)
    print(f"optimal_window={optimal_window(gamma, info)}", file=out)
    return 0


def cmd_simulate(args: argparse.Namespace, out: TextIO) -> int:
    """Run a sweep and write its CSV and manifest."""
    if not args.out and not args.db:
        raise UsageError("simulate needs --out and/or --db")
    config = _sweep_from_args(args, default_methods=['exact-cusum', 'wlcusum(4)'])
    records = sweep(config)
    _write_outputs(args, 'simulate', config, records, out)
    return 0


def cmd_window_search(args: argparse.Namespace, out: TextIO) -> int:
    """Monte Carlo delay over a window range, reporting the empirical argmin."""
    windows = parse_windows(args.windows)
    if args.method:
        # The window argument is searched over, so a bare name is enough.
        args.method = [m if '(' in m else f"{m}({windows[0]})" for m in args.method]
    base = _sweep_from_args(args, default_methods=['wlcusum(1)'])
    method = base.methods[0]
    if not method.kind.windowed:
        raise UsageError(f"Method {method} has no window to search")
    gamma = base.gammas[0]
    cell = ExperimentConfig(
        model=base.model,
        theta=base.theta,
        method=method.with_window(windows[0]),
        gammas=(gamma,),
        trials=base.trials,
        seed=base.seed,
        regime=Regime.WADD,
        max_steps=base.max_steps,
        workers=base.workers,
    )
    records = window_search(cell, gamma, windows)

    info = info_numbers(base.model, base.theta)
    for r in records:
        flag = ''
        if method.kind == MethodKind.WLCUSUM and approx_info_numbers(info, r.window).Ihat0 <= 0.0:
            flag = ' infeasible'
        print(f"w={r.window} wadd={r.mean:.4f} se={r.stderr:.4f} censored={r.censored}{flag}", file=out)
    print(f"argmin={empirical_argmin(records)}", file=out)
    if gamma > math.e:
        print(f"predicted={optimal_window(gamma, info)}", file=out)

    searched = dataclasses.replace(
        base,
        methods=tuple(method.with_window(w) for w in windows),
        gammas=(gamma,),
        regimes=(Regime.WADD,),
    )
    _write_outputs(args, 'window-search', searched, records, out)
    return 0


def read_observations(path: str | Path, dimension: int) -> Iterator[Any]:
    """
    Observations from a text file: one per line, comma-separated components,
    ``#`` starts a comment, blank lines are skipped.

    Raises:
        InputError: With the line number of a malformed, mis-sized or undecodable line
    """
    path = Path(path)
    with path.open('rb') as f:
        for line_number, raw in enumerate(f, start=1):
            try:
                line = raw.decode('utf-8')
            except UnicodeDecodeError:
                raise InputError('not valid UTF-8 text', line_number) from None
            content = line.split('#', 1)[0].strip()
            if not content:
                continue
            try:
                values = [float(part) for part in content.split(',')]
            except ValueError:
                raise InputError(f"cannot parse {content!r}", line_number) from None
            try:
                yield InputValidator.observation(values, dimension)
            except InputError as e:
                raise InputError(str(e), line_number) from None


def cmd_detect(args: argparse.Namespace, out: TextIO) -> int:
    """Stream an observation file through a detector."""
    model, theta = _model_from_args(args)
    method = MethodSpec.parse(args.method[0] if args.method else 'wlcusum(4)')
    gamma = args.gamma[0] if args.gamma else None
    config = ExperimentConfig(model, theta, method, (gamma or 1000.0,), 1, 0, Regime.WADD)
    if args.threshold is not None:
        threshold = InputValidator.threshold(args.threshold)
    elif gamma is not None:
        threshold = config.calibrated_threshold(gamma)
    else:
        raise UsageError("detect needs --threshold or --gamma")
    detector = build_detector(config, threshold)

    def show(state: DetectorState) -> None:
        print(f"t={state.t} S={state.stop_statistic!r}", file=out)

    result = run_until_stop(
        detector,
        read_observations(args.data, model.dimension),
        max_steps=args.max_steps,
        on_step=show if args.verbose else None,
        validate=False,
    )
    if result.censored:
        print(f"NO-ALARM t={result.stop_time}", file=out)
    else:
        if result.which_window is not None:
            print(f"which_window={result.which_window}", file=out)
        print(f"ALARM t={result.stop_time} S={result.terminal_statistic!r} overshoot={result.overshoot!r}", file=out)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_model_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group('model')
    group.add_argument('--model', default='gaussian', choices=[f.value for f in FamilyKind])
    group.add_argument('--theta', help='true post-change parameter, comma-separated')
    group.add_argument('--barrier', type=float, default=0.5, help='Gaussian norm barrier (0 for none)')
    group.add_argument('--variance', type=float, default=1.0, help='known post-change variance')
    group.add_argument('--dimension', type=int, help='Gaussian observation dimension')


def _add_experiment_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group('experiment')
    group.add_argument('--config', help='TOML config or JSON run manifest')
    group.add_argument('--method', action='append', help='e.g. wlcusum(4); repeatable')
    group.add_argument('--gamma', type=float, action='append', help='target ARL; repeatable')
    group.add_argument('--regime', action='append', choices=[r.value for r in Regime])
    group.add_argument('--trials', type=int)
    group.add_argument('--seed', type=int)
    group.add_argument('--max-steps', type=int)
    group.add_argument('--workers', type=int)
    group.add_argument('--out', help='CSV destination; a manifest is written next to it')
    group.add_argument('--db', help='SQLAlchemy URL of a result store')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='wlcusum',
        description='Window-limited CUSUM detection, calibration and Monte Carlo experiments.',
    )
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    parser.add_argument('--log-level', default='WARNING', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('calibrate', help='thresholds and optimal window for a target ARL')
    p.add_argument('--gamma', type=float, required=True)
    p.add_argument('--max-window', type=int, help='W of a parallel detector')
    _add_model_args(p)
    p.set_defaults(handler=cmd_calibrate)

    p = sub.add_parser('window-opt', help='delay bound versus window size')
    p.add_argument('--gamma', type=float, required=True)
    p.add_argument('--window', '--windows', dest='windows', default='1-15', help='e.g. 1-15 or 4')
    _add_model_args(p)
    p.set_defaults(handler=cmd_window_opt)

    p = sub.add_parser('simulate', help='Monte Carlo sweep to CSV')
    _add_model_args(p)
    _add_experiment_args(p)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser('window-search', help='Monte Carlo delay versus window size')
    p.add_argument('--window', '--windows', dest='windows', default='1-15', help='e.g. 1-15 or 4')
    _add_model_args(p)
    _add_experiment_args(p)
    p.set_defaults(handler=cmd_window_search)

    p = sub.add_parser('detect', help='run a detector over an observation file')
    p.add_argument('data', help='one observation per line, comma-separated components')
    p.add_argument('--method', action='append', help='e.g. wlcusum(4)')
    p.add_argument('--window', type=int, help='shorthand for --method wlcusum(WINDOW)')
    p.add_argument('--max-window', type=int, help='shorthand for --method parallel(MAX_WINDOW)')
    p.add_argument('--threshold', type=float)
    p.add_argument('--gamma', type=float, action='append')
    p.add_argument('--max-steps', type=int)
    p.add_argument('--verbose', action='store_true', help='print the statistic after every step')
    _add_model_args(p)
    p.set_defaults(handler=cmd_detect)
    return parser


def _apply_shorthands(args: argparse.Namespace) -> None:
    window = getattr(args, 'window', None)
    max_window = getattr(args, 'max_window', None)
    if args.command != 'detect' or args.method:
        return
    if window is not None:
        args.method = [str(MethodSpec(MethodKind.WLCUSUM, window))]
    elif max_window is not None:
        args.method = [str(MethodSpec(MethodKind.PARALLEL, max_window))]


def main(argv: Sequence[str] | None = None, out: TextIO | None = None) -> int:
    """Entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
        stream=sys.stderr,
    )
    out = out or sys.stdout
    try:
        _apply_shorthands(args)
        return args.handler(args, out)
    except (UsageError, DomainError, InputError) as e:
        print(f"wlcusum: error: {e}", file=sys.stderr)
        return 2
    except (DetectionError, OSError) as e:
        logger.debug("Command failed", exc_info=True)
        print(f"wlcusum: error: {e}", file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
