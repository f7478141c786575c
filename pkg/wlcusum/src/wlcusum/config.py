"""
Experiment configuration loading.

A config is a TOML file (or the JSON manifest written next to a results CSV)
with two tables::

    [model]
    family = "gaussian"          # gaussian | laplace-normal | laplace-normal-unknown-var
    dimension = 1                # gaussian only
    barrier = 0.5                # gaussian only; 0 means no barrier
    variance = 1.0               # laplace-normal only
    theta = [1.0]                # true post-change parameter

    [experiment]
    methods = ["exact-cusum", "wlcusum(4)", "parallel(15)", "glr(30)"]
    gammas = [100.0, 1000.0, 10000.0]
    trials = 1000
    seed = 20240917
    regimes = ["wadd"]           # arl and/or wadd
    max_steps = 100000           # optional
    workers = 1                  # optional

Every problem is reported as a ConfigError naming the dotted key.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .exceptions import ConfigError, DetectionError
from .models import ModelSpec
from .montecarlo import MethodSpec, SweepConfig
from .types import FamilyKind, Regime
from .validators import InputValidator

MODEL_KEYS = frozenset({'family', 'dimension', 'barrier', 'variance', 'theta'})
EXPERIMENT_KEYS = frozenset({'methods', 'gammas', 'trials', 'seed', 'regimes', 'max_steps', 'workers'})


def load_config(path: str | Path) -> SweepConfig:
    """
    Load a TOML config, or the ``config`` object of a JSON run manifest.

    Raises:
        ConfigError: If the file cannot be read or parsed, or a key is invalid
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ConfigError(str(path), f"cannot read file: {e}") from e
    if path.suffix.lower() == '.json':
        try:
            data = json.loads(raw.decode('utf-8'))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise ConfigError(str(path), f"invalid JSON: {e}") from e
        if isinstance(data, Mapping) and 'config' in data and 'tool_version' in data:
            data = data['config']
    else:
        try:
            data = tomllib.loads(raw.decode('utf-8'))
        except (UnicodeDecodeError, tomllib.TOMLDecodeError) as e:
            raise ConfigError(str(path), f"invalid TOML: {e}") from e
    return sweep_config_from_mapping(data)


def _section(data: Any, name: str) -> Mapping[str, Any]:
    if not isinstance(data, Mapping):
        raise ConfigError('<root>', "expected a table of tables")
    section = data.get(name)
    if section is None:
        raise ConfigError(name, "missing table")
    if not isinstance(section, Mapping):
        raise ConfigError(name, "expected a table")
    return section


def _reject_unknown(section: Mapping[str, Any], prefix: str, known: frozenset[str]) -> None:
    for key in section:
        if key not in known:
            raise ConfigError(f"{prefix}.{key}", "unknown key")


def _required(section: Mapping[str, Any], prefix: str, key: str) -> Any:
    if key not in section:
        raise ConfigError(f"{prefix}.{key}", "missing")
    return section[key]


def _number(value: Any, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    return float(value)


def _integer(value: Any, key: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(key, f"expected an integer >= {minimum}, got {value!r}")
    return value


def _list(value: Any, key: str) -> list[Any]:
    if isinstance(value, (str, bytes)) or not isinstance(value, (list, tuple)):
        value = [value]
    if not value:
        raise ConfigError(key, "must not be empty")
    return list(value)


def model_from_mapping(section: Mapping[str, Any], prefix: str = 'model') -> tuple[ModelSpec, tuple[float, ...]]:
    """
    Build the model and the true parameter from a ``[model]`` table.

    Examples:
        >>> model, theta = model_from_mapping({'family': 'gaussian', 'theta': [1.0]})
        >>> model.barrier, theta
        (0.5, (1.0,))
    """
    _reject_unknown(section, prefix, MODEL_KEYS)
    family_name = _required(section, prefix, 'family')
    try:
        family = FamilyKind(family_name)
    except ValueError:
        known = ', '.join(f.value for f in FamilyKind)
        raise ConfigError(f"{prefix}.family", f"unknown family {family_name!r}; expected one of {known}") from None

    try:
        if family == FamilyKind.GAUSSIAN:
            dimension = _integer(section.get('dimension', 1), f"{prefix}.dimension")
            barrier = _number(section.get('barrier', 0.5), f"{prefix}.barrier")
            if barrier < 0.0:
                raise ConfigError(f"{prefix}.barrier", f"must be >= 0, got {barrier}")
            model = ModelSpec.gaussian(dimension=dimension, barrier=barrier)
        elif family == FamilyKind.LAPLACE_NORMAL:
            variance = _number(section.get('variance', 1.0), f"{prefix}.variance")
            if variance <= 0.0:
                raise ConfigError(f"{prefix}.variance", f"must be > 0, got {variance}")
            model = ModelSpec.laplace_normal(variance)
        else:
            model = ModelSpec.laplace_normal_unknown_var()
    except ConfigError:
        raise
    except DetectionError as e:
        raise ConfigError(prefix, str(e)) from e

    key = f"{prefix}.theta"
    theta = tuple(_number(v, key) for v in _list(_required(section, prefix, 'theta'), key))
    try:
        checked = model.check_theta(theta)
    except DetectionError as e:
        raise ConfigError(key, str(e)) from e
    if not model.parameter_set.contains(checked):
        raise ConfigError(key, f"parameter {list(theta)} is outside the admissible set")
    return model, theta


def sweep_config_from_mapping(data: Mapping[str, Any]) -> SweepConfig:
    """
    Build a SweepConfig from parsed TOML/JSON data.

    Raises:
        ConfigError: Naming the first offending key
    """
    model, theta = model_from_mapping(_section(data, 'model'))
    section = _section(data, 'experiment')
    prefix = 'experiment'
    _reject_unknown(section, prefix, EXPERIMENT_KEYS)

    methods = []
    for text in _list(_required(section, prefix, 'methods'), f"{prefix}.methods"):
        try:
            methods.append(MethodSpec.parse(text))
        except DetectionError as e:
            raise ConfigError(f"{prefix}.methods", str(e)) from e

    gammas = []
    for value in _list(_required(section, prefix, 'gammas'), f"{prefix}.gammas"):
        try:
            gammas.append(InputValidator.gamma(_number(value, f"{prefix}.gammas")))
        except ConfigError:
            raise
        except DetectionError as e:
            raise ConfigError(f"{prefix}.gammas", str(e)) from e

    regimes = []
    for value in _list(section.get('regimes', ['wadd']), f"{prefix}.regimes"):
        try:
            regimes.append(Regime(value))
        except ValueError:
            raise ConfigError(f"{prefix}.regimes", f"expected 'arl' or 'wadd', got {value!r}") from None

    trials = _integer(_required(section, prefix, 'trials'), f"{prefix}.trials")
    seed = _integer(section.get('seed', 0), f"{prefix}.seed", minimum=0)
    max_steps = section.get('max_steps')
    if max_steps is not None:
        max_steps = _integer(max_steps, f"{prefix}.max_steps")
    workers = _integer(section.get('workers', 1), f"{prefix}.workers")

    return SweepConfig(
        model=model,
        theta=theta,
        methods=tuple(methods),
        gammas=tuple(gammas),
        trials=trials,
        seed=seed,
        regimes=tuple(dict.fromkeys(regimes)),
        max_steps=max_steps,
        workers=workers,
    )


def model_to_mapping(model: ModelSpec, theta: tuple[float, ...]) -> dict[str, Any]:
    """Inverse of ``model_from_mapping``."""
    section: dict[str, Any] = {'family': model.family.value, 'theta': list(theta)}
    if model.family == FamilyKind.GAUSSIAN:
        section['dimension'] = model.dimension
        section['barrier'] = model.barrier
    elif model.family == FamilyKind.LAPLACE_NORMAL:
        section['variance'] = model.variance
    return section


def sweep_config_to_mapping(config: SweepConfig) -> dict[str, Any]:
    """
    Serializable form of a SweepConfig, as stored in run manifests.

    ``workers`` is left out: it does not change results.
    """
    experiment: dict[str, Any] = {
        'methods': [str(m) for m in config.methods],
        'gammas': list(config.gammas),
        'trials': config.trials,
        'seed': config.seed,
        'regimes': [r.value for r in config.regimes],
    }
    if config.max_steps is not None:
        experiment['max_steps'] = config.max_steps
    return {'model': model_to_mapping(config.model, config.theta), 'experiment': experiment}
