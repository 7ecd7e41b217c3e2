"""
Run configuration: preset defaults, YAML config files and command-line overrides.

Values are merged in the order preset defaults <- config file <- CLI flags
<- ``--set key=value``. Every key must be known to the scenario (or be one
of the common keys) and match the type of its default.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple

import yaml

from src.core.errors import ConfigError

logger = logging.getLogger(__name__)

COMMON_DEFAULTS: Dict[str, Any] = {'seed': 0, 'levels': None, 'jobs': 1}


def load_config_file(path: str) -> Dict[str, Any]:
    """
    Read a flat YAML mapping of overrides.

    Raises:
        ConfigError: Missing file, invalid YAML or a document that is not a mapping.
    """
    file_path = Path(path)
    if not file_path.is_file():
        raise ConfigError(f"config file {path} not found")
    try:
        with open(file_path, encoding='utf-8') as handle:
            data = yaml.safe_load(handle)
    except yaml.YAMLError as e:
        raise ConfigError(f"config file {path} is not valid YAML: {e}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a mapping, got {type(data).__name__}")
    return data


def parse_set_option(option: str) -> Tuple[str, Any]:
    """Split ``key=value`` and parse the value as YAML (``dx=0.05``, ``scheme=ugrw``, ``levels=[1,2]``)."""
    key, sep, raw = option.partition('=')
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"--set expects key=value, got '{option}'")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError:
        raise ConfigError(f"cannot parse the value of --set {option}") from None
    return key, value


def coerce_value(key: str, value: Any, default: Any) -> Any:
    """
    Check ``value`` against the type of ``default``.

    A None default accepts anything. Floats accept integers and numeric
    strings (YAML reads ``1e-6`` as a string).

    Raises:
        ConfigError: On a type mismatch.
    """
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
    elif isinstance(default, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
    elif isinstance(default, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                pass
    elif isinstance(default, (list, tuple)):
        if isinstance(value, (list, tuple)):
            return list(value)
    elif isinstance(default, str):
        if isinstance(value, str):
            return value
    else:
        return value
    raise ConfigError(f"'{key}' expects {type(default).__name__}, got {value!r}")


def _merge(config: Dict[str, Any], defaults: Dict[str, Any], updates: Dict[str, Any], origin: str):
    for key, value in updates.items():
        if key == 'preset':
            if value != config['preset']:
                raise ConfigError(f"{origin} sets preset '{value}'; choose the preset with --preset")
            continue
        if key not in defaults:
            raise ConfigError(f"unknown key '{key}' from {origin}; known keys: {sorted(defaults)}")
        config[key] = coerce_value(key, value, defaults[key])
        logger.debug("%s sets %s=%r", origin, key, config[key])


def resolve_config(scenario, preset: str = 'desk', config_file: Optional[str] = None,
                   flags: Optional[Dict[str, Any]] = None,
                   set_values: Optional[Iterable[str]] = None) -> Dict[str, Any]:
    """
    Resolve the run configuration of a scenario.

    Args:
        scenario: Registered scenario.
        preset: ``desk`` or ``paper``.
        config_file: Optional YAML file.
        flags: Values of dedicated CLI flags; None entries are skipped.
        set_values: ``key=value`` strings applied last.

    Returns:
        The merged configuration including ``preset``, ``seed``, ``levels`` and ``jobs``.

    Raises:
        ConfigError: Unknown key, type mismatch or invalid common value.
    """
    defaults = {**COMMON_DEFAULTS, **scenario.defaults(preset)}
    config = dict(defaults, preset=preset)
    if config_file:
        _merge(config, defaults, load_config_file(config_file), f"config file {config_file}")
    if flags:
        _merge(config, defaults, {k: v for k, v in flags.items() if v is not None}, 'command line')
    if set_values:
        _merge(config, defaults, dict(parse_set_option(option) for option in set_values), '--set')

    if not isinstance(config['seed'], int) or config['seed'] < 0:
        raise ConfigError(f"seed must be a nonnegative integer, got {config['seed']!r}")
    if not isinstance(config['jobs'], int) or config['jobs'] < 1:
        raise ConfigError(f"jobs must be a positive integer, got {config['jobs']!r}")
    if config['levels'] is not None and (not isinstance(config['levels'], int) or config['levels'] < 1):
        raise ConfigError(f"levels must be a positive integer, got {config['levels']!r}")
    return config
