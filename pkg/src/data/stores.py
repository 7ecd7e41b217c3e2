"""
Output store definitions for GrwSim runs.

A run directory holds three stores: ``summary.json`` with the resolved
configuration and the scenario results, ``fields/`` with one CSV per
lattice table plus one binary dump per field column, and ``series/`` with
time or iteration series.
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict

import numpy as np
import pandas as pd

from src import __version__
from src.utils.field_io import write_csv, write_field_dumps

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SUMMARY_FILE = 'summary.json'


def create_output_stores(root: Path) -> Dict[str, Path]:
    """
    Create the stores of a run directory.

    Returns:
        Mapping of store names to paths: 'root', 'summary', 'fields', 'series'.
    """
    root = Path(root)
    stores = {
        'root': root,
        'summary': root / SUMMARY_FILE,
        'fields': root / 'fields',
        'series': root / 'series',
    }
    for name in ('fields', 'series'):
        stores[name].mkdir(parents=True, exist_ok=True)
    return stores


def get_initial_summary() -> Dict[str, Any]:
    """
    Get the initial value of every summary entry.

    Returns:
        Dictionary with the summary keys in their written order.
    """
    return {
        'schema_version': SCHEMA_VERSION,
        'scenario': None,
        'preset': None,
        'seed': None,
        'config': {},
        'results': {},
        'converged': True,
        'wall_time_s': None,
        'version': __version__,
    }


def to_jsonable(value: Any) -> Any:
    """Convert numpy and pandas values to plain JSON types; non-finite floats become None."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, pd.DataFrame):
        return to_jsonable(value.to_dict('records'))
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


def build_summary(scenario: str, preset: str, config: Dict[str, Any], result, wall_time: float) -> Dict[str, Any]:
    summary = get_initial_summary()
    summary.update(
        scenario=scenario,
        preset=preset,
        seed=int(config['seed']),
        config=to_jsonable(config),
        results=to_jsonable(result.results),
        converged=bool(result.converged),
        wall_time_s=round(float(wall_time), 3),
    )
    return summary


def write_run(stores: Dict[str, Path], summary: Dict[str, Any], result) -> None:
    """Write the summary and every field and series table of a run."""
    with open(stores['summary'], 'w', encoding='utf-8') as handle:
        json.dump(summary, handle, indent=2, allow_nan=False)
    dumps = 0
    for name, frame in result.fields.items():
        write_csv(frame, stores['fields'] / f'{name}.csv')
        dumps += len(write_field_dumps(frame, stores['fields'], name))
    for name, frame in result.series.items():
        write_csv(frame, stores['series'] / f'{name}.csv')
    logger.info("wrote %s (%d fields, %d binary dumps, %d series)", stores['root'], len(result.fields), dumps,
                len(result.series))


def read_summary(root: Path) -> Dict[str, Any]:
    """
    Load the summary of a run directory.

    Returns:
        Dictionary containing:
        - 'success': Boolean indicating if loading was successful
        - 'data': The summary dictionary, or None
        - 'error': Error message if loading failed
    """
    path = Path(root) / SUMMARY_FILE
    if not path.exists():
        return {'success': False, 'data': None, 'error': f"{path} not found"}
    try:
        with open(path, encoding='utf-8') as handle:
            return {'success': True, 'data': json.load(handle), 'error': None}
    except Exception as e:
        return {'success': False, 'data': None, 'error': str(e)}
