"""
Post-processing: refinement orders, iteration convergence orders, moment
based diffusion estimates, ensemble dispersion and Monte Carlo summaries.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.errors import EstimationError
from src.core.lattice import Grid
from src.core.transport import spatial_moments, support_touches_boundary

logger = logging.getLogger(__name__)

TAIL_FRACTION = 0.25
TAIL_MIN_POINTS = 10


# ---------------------------------------------------------------------------
# Refinement studies
# ---------------------------------------------------------------------------

@dataclass
class RefinementStudy:
    """Errors on successively halved grids."""

    spacings: List[float]
    errors: List[float]

    def __post_init__(self):
        if len(self.spacings) != len(self.errors):
            raise EstimationError("spacings and errors differ in length")
        for coarse, fine in zip(self.spacings, self.spacings[1:]):
            if not math.isclose(coarse / fine, 2.0, rel_tol=1e-6):
                raise EstimationError(f"spacings must halve per level, got {coarse} -> {fine}")

    def eoc(self) -> List[float]:
        return eoc(self.errors)

    def as_rows(self) -> List[Dict[str, float]]:
        orders = [math.nan] + self.eoc() if len(self.errors) > 1 else [math.nan]
        return [{'level': i + 1, 'spacing': h, 'error': e, 'eoc': q}
                for i, (h, e, q) in enumerate(zip(self.spacings, self.errors, orders))]


def eoc(errors: Sequence[float]) -> List[float]:
    """
    Estimated orders of convergence log2(e_l / e_{l+1}).

    Raises:
        EstimationError: Fewer than two levels or a non-positive error.
    """
    errors = [float(e) for e in errors]
    if len(errors) < 2:
        raise EstimationError("EOC needs at least two refinement levels")
    if any(e <= 0 or not math.isfinite(e) for e in errors):
        raise EstimationError("EOC needs positive finite errors (a zero error means the solution is exact)")
    return [math.log(a / b) / math.log(2.0) for a, b in zip(errors, errors[1:])]


# ---------------------------------------------------------------------------
# Iteration convergence orders
# ---------------------------------------------------------------------------

@dataclass
class ConvergenceHistory:
    """Correction norms, one list per time step, each starting at s = 2."""

    norms: List[List[float]] = field(default_factory=list)

    def __post_init__(self):
        if any(value < 0 for step in self.norms for value in step):
            raise EstimationError("correction norms must be nonnegative")

    @property
    def flat(self) -> List[float]:
        return [value for step in self.norms for value in step]

    def longest_step(self) -> List[float]:
        return max(self.norms, key=len) if self.norms else []


def _tail(values: np.ndarray, fraction: float, min_points: int) -> np.ndarray:
    count = max(min_points, int(math.ceil(fraction * len(values))))
    return values[-count:]


def _as_array(history) -> np.ndarray:
    if isinstance(history, ConvergenceHistory):
        history = history.longest_step()
    return np.asarray(history, dtype=float)


def comp_order_q(history, tail_fraction: float = TAIL_FRACTION, min_points: int = TAIL_MIN_POINTS) -> float:
    """
    Computational order of convergence
    Q = lim log(a_{s+1}/a_s) / log(a_s/a_{s-1}) as the median over the tail.

    Raises:
        EstimationError: Fewer than four norms.
    """
    a = _as_array(history)
    if len(a) < 4:
        raise EstimationError("Q needs at least four correction norms")
    with np.errstate(divide='ignore', invalid='ignore'):
        logs = np.log(a[1:] / a[:-1])
        ratios = logs[1:] / logs[:-1]
    ratios = _tail(ratios, tail_fraction, min_points)
    ratios = ratios[np.isfinite(ratios)]
    return float(np.median(ratios)) if ratios.size else math.nan


def comp_order_qq(history, q: float = 1.0, tail_fraction: float = TAIL_FRACTION,
                  min_points: int = TAIL_MIN_POINTS) -> float:
    """
    Semicomputational order Q_q = lim a_{s+1} / a_s^q as the median over the tail.

    Raises:
        EstimationError: Fewer than two norms.
    """
    a = _as_array(history)
    if len(a) < 2:
        raise EstimationError("Q_q needs at least two correction norms")
    with np.errstate(divide='ignore', invalid='ignore'):
        ratios = a[1:] / a[:-1] ** q
    ratios = _tail(ratios, tail_fraction, min_points)
    ratios = ratios[np.isfinite(ratios)]
    return float(np.median(ratios)) if ratios.size else math.nan


def decay_slope(history, tail_fraction: float = 0.5, min_points: int = TAIL_MIN_POINTS) -> float:
    """Least-squares slope of log a_s against log s over the tail; -1 for a_s ~ 1/s."""
    a = _as_array(history)
    s = np.arange(2, len(a) + 2, dtype=float)
    keep = a > 0
    s, a = s[keep], a[keep]
    if len(a) < 3:
        raise EstimationError("decay slope needs at least three positive norms")
    s, a = _tail(s, tail_fraction, min_points), _tail(a, tail_fraction, min_points)
    slope, _ = np.polyfit(np.log(s), np.log(a), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# Moment-based diffusion
# ---------------------------------------------------------------------------

@dataclass
class DiffusionEstimate:
    d_x: float
    d_z: float
    eps_x: float
    eps_z: float
    valid: bool = True

    def as_dict(self) -> Dict[str, float]:
        return {'D_x': self.d_x, 'D_z': self.d_z, 'eps_D_x': self.eps_x, 'eps_D_z': self.eps_z,
                'valid': self.valid}


def _variance_series(snapshots: Dict[float, np.ndarray], grid: Grid) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    times = np.array(sorted(snapshots))
    rows = [spatial_moments(snapshots[t], grid) for t in times]
    axes = ['z'] if grid.ndim == 1 else ['x', 'z']
    return times, {a: np.array([row[f'variance_{a}'] for row in rows]) for a in axes}


def moment_diffusion(snapshots: Dict[float, np.ndarray], grid: Grid, true_d: float) -> DiffusionEstimate:
    """
    Effective diffusion coefficients from the growth of the spatial variances.

    D is half the least-squares slope of the variance over all snapshot
    times; the relative errors are averaged over the pairwise slopes between
    consecutive snapshots.

    Raises:
        EstimationError: Fewer than two snapshots or non-positive ``true_d``.
    """
    if len(snapshots) < 2:
        raise EstimationError("moment diffusion needs at least two snapshots")
    if true_d <= 0:
        raise EstimationError("the reference diffusion coefficient must be positive")
    valid = not any(support_touches_boundary(c, grid) for c in snapshots.values())
    if not valid:
        logger.warning("concentration support reaches the boundary; diffusion estimate is invalid")

    times, variances = _variance_series(snapshots, grid)
    estimates, errors = {}, {}
    for axis, var in variances.items():
        slope, _ = np.polyfit(times, var, 1)
        estimates[axis] = 0.5 * float(slope)
        local = 0.5 * np.diff(var) / np.diff(times)
        errors[axis] = float(np.mean(np.abs(local - true_d) / true_d))
    d_x = estimates.get('x', math.nan)
    return DiffusionEstimate(d_x=d_x, d_z=estimates['z'], eps_x=errors.get('x', math.nan),
                             eps_z=errors['z'], valid=valid)


# ---------------------------------------------------------------------------
# Ensembles
# ---------------------------------------------------------------------------

def ensemble_dispersion(realizations: Sequence[Dict[float, np.ndarray]], grid: Grid,
                        local_d: Optional[float] = None) -> Dict[str, np.ndarray]:
    """
    Ensemble dispersion coefficients D_x(t), D_z(t).

    S(t) = <m2> - <m1>^2 per axis, with m1, m2 the first and second spatial
    moments of each realization; D = dS/dt / 2 by finite differences in time.
    With ``local_d`` the coefficients are returned normalized by it.

    Raises:
        EstimationError: Empty ensemble or realizations with different output times.
    """
    if not realizations:
        raise EstimationError("ensemble dispersion needs at least one realization")
    times = sorted(realizations[0])
    if any(sorted(r) != times for r in realizations[1:]):
        raise EstimationError("realizations have different output times")
    axes = ['z'] if grid.ndim == 1 else ['x', 'z']
    tables = []
    for realization in realizations:
        rows = [spatial_moments(realization[t], grid) for t in times]
        tables.append({key: [row[key] for row in rows]
                       for a in axes for key in (f'center_{a}', f'variance_{a}')})
    return dispersion_from_moments(tables, times, local_d)


def dispersion_from_moments(tables: Sequence[Dict[str, Sequence[float]]], times: Sequence[float],
                            local_d: Optional[float] = None) -> Dict[str, np.ndarray]:
    """
    Ensemble dispersion from per-realization moment series.

    Each table maps ``center_<axis>`` and ``variance_<axis>`` to values at
    ``times``; this lets large ensembles keep moments instead of fields.

    Raises:
        EstimationError: Empty ensemble, fewer than two times or series of the wrong length.
    """
    if not tables:
        raise EstimationError("ensemble dispersion needs at least one realization")
    if len(times) < 2:
        raise EstimationError("ensemble dispersion needs at least two output times")
    axes = [a for a in ('x', 'z') if f'center_{a}' in tables[0]]
    t_arr = np.asarray(times, dtype=float)
    out = {'t': t_arr}
    for a in axes:
        centers = np.array([table[f'center_{a}'] for table in tables], dtype=float)
        variances = np.array([table[f'variance_{a}'] for table in tables], dtype=float)
        if centers.shape[1] != len(t_arr) or variances.shape != centers.shape:
            raise EstimationError("moment series do not match the output times")
        second = (variances + centers ** 2).mean(axis=0)
        spread = second - centers.mean(axis=0) ** 2
        coefficient = 0.5 * np.gradient(spread, t_arr)
        out[f'D_{a}'] = coefficient / local_d if local_d else coefficient
        out[f'S_{a}'] = spread
    return out


@dataclass
class McStats:
    mean: np.ndarray
    variance: np.ndarray
    mean_avg: float
    mean_std: float
    variance_avg: float
    variance_std: float
    center_mean: float
    center_variance: float

    def as_dict(self) -> Dict[str, float]:
        return {'mean_avg': self.mean_avg, 'mean_std': self.mean_std,
                'variance_avg': self.variance_avg, 'variance_std': self.variance_std,
                'center_mean': self.center_mean, 'center_variance': self.center_variance}


def mc_stats(fields: Sequence[np.ndarray], center_index: Optional[Tuple[int, ...]] = None) -> McStats:
    """
    Pointwise Monte Carlo mean and variance and their spatial summaries.

    Raises:
        EstimationError: Fewer than two realizations.
    """
    if len(fields) < 2:
        raise EstimationError("Monte Carlo statistics need at least two realizations")
    stack = np.stack([np.asarray(f, dtype=float) for f in fields])
    mean = stack.mean(axis=0)
    variance = stack.var(axis=0, ddof=1)
    if center_index is None:
        center_index = tuple(n // 2 for n in mean.shape)
    return McStats(mean=mean, variance=variance,
                   mean_avg=float(mean.mean()), mean_std=float(mean.std()),
                   variance_avg=float(variance.mean()), variance_std=float(variance.std()),
                   center_mean=float(mean[center_index]), center_variance=float(variance[center_index]))
