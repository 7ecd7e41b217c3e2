"""
Helpers shared by the scenario modules: refinement schedules, reference
lookups and tolerant estimators.
"""

import logging
import math
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from src.core.analysis import RefinementStudy
from src.core.errors import ConfigError, EstimationError
from src.data.fixtures import fixture_rows

logger = logging.getLogger(__name__)


def refinement_spacings(dx0: float, levels: int) -> List[float]:
    if levels < 1:
        raise ConfigError(f"levels must be at least 1, got {levels}")
    return [dx0 / 2 ** level for level in range(levels)]


def estimate(fn: Callable, *args, **kwargs) -> float:
    """Run an estimator, returning NaN when the data do not support it."""
    try:
        return fn(*args, **kwargs)
    except EstimationError as exc:
        logger.info("estimate %s unavailable: %s", getattr(fn, '__name__', fn), exc)
        return math.nan


def study_rows(spacings: Sequence[float], errors: Sequence[float]) -> Dict[str, Any]:
    """Errors and EOC of a refinement study in summary form."""
    study = RefinementStudy(list(spacings), [float(e) for e in errors])
    rows = study.as_rows()
    return {'errors': [r['error'] for r in rows], 'eoc': [r['eoc'] for r in rows[1:]], 'rows': rows}


def reference_errors(name: str, **match) -> Optional[List[float]]:
    """Error column of the matching fixture rows ordered by level."""
    rows = fixture_rows(name, **match)
    if rows is None or rows.empty:
        return None
    return rows.sort_values('level')['error'].astype(float).tolist()


def relative_gap(values: Sequence[float], reference: Optional[Sequence[float]]) -> Optional[List[float]]:
    """(value - reference) / reference over the common prefix."""
    if reference is None:
        return None
    n = min(len(values), len(reference))
    return [float((values[i] - reference[i]) / reference[i]) for i in range(n)]


def front_depth(depth: np.ndarray, theta: np.ndarray, target: float) -> float:
    """
    First depth below the surface where the water content falls to ``target``.

    ``depth`` ascends from the surface. Linear interpolation between the
    bracketing sites; NaN when the profile never reaches the target.
    """
    depth = np.asarray(depth, dtype=float)
    theta = np.asarray(theta, dtype=float)
    below = np.flatnonzero(theta < target)
    if below.size == 0 or below[0] == 0:
        return math.nan
    i = below[0]
    d0, d1, t0, t1 = depth[i - 1], depth[i], theta[i - 1], theta[i]
    return float(d0 + (t0 - target) * (d1 - d0) / (t0 - t1))
