"""
Published reference tables shipped under ``fixtures/``.

Every fixture is a CSV file whose leading ``#`` lines cite the source of the
numbers. Loaders return result dictionaries; a missing optional fixture
(for example digitized profiles of an external solver) is reported, not
raised, so scenarios can skip the comparison.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd

logger = logging.getLogger(__name__)

FIXTURE_DIR = Path(__file__).resolve().parents[2] / 'fixtures'


def fixture_path(name: str, root: Optional[Path] = None) -> Path:
    name = name if name.endswith('.csv') else f'{name}.csv'
    return (root or FIXTURE_DIR) / name


def read_citation(path: Path) -> List[str]:
    lines = []
    with open(path, encoding='utf-8') as handle:
        for line in handle:
            if not line.startswith('#'):
                break
            lines.append(line[1:].strip())
    return lines


def load_fixture(name: str, root: Optional[Path] = None) -> Dict[str, Any]:
    """
    Load a fixture table.

    Args:
        name: File name with or without the ``.csv`` suffix.
        root: Alternative fixture directory.

    Returns:
        Dictionary containing:
        - 'success': Boolean indicating if loading was successful
        - 'data': DataFrame of the table, or None
        - 'citation': The ``#`` header lines
        - 'error': Error message if loading failed
    """
    path = fixture_path(name, root)
    if not path.exists():
        return {'success': False, 'data': None, 'citation': [], 'error': f"fixture {path.name} not found"}
    try:
        data = pd.read_csv(path, comment='#', skipinitialspace=True)
        return {'success': True, 'data': data, 'citation': read_citation(path), 'error': None}
    except Exception as e:
        return {'success': False, 'data': None, 'citation': [], 'error': str(e)}


def fixture_rows(name: str, /, root: Optional[Path] = None, **match) -> Optional[pd.DataFrame]:
    """Rows of a fixture matching ``column=value`` filters; None if the fixture is unavailable."""
    loaded = load_fixture(name, root)
    if not loaded['success']:
        logger.info("reference %s unavailable: %s", name, loaded['error'])
        return None
    data = loaded['data']
    for column, value in match.items():
        data = data[data[column] == value]
    return data.reset_index(drop=True)


def list_fixtures(root: Optional[Path] = None) -> List[str]:
    root = root or FIXTURE_DIR
    return sorted(p.stem for p in root.glob('*.csv')) if root.exists() else []
