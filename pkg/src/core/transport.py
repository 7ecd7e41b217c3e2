"""
GRW solvers for advection-diffusion-reaction transport.

Two walks are provided:

* the biased GRW (BGRW), where the drift enters the jump fractions
  ``(r +- u) / 2`` of nearest-neighbor jumps. Inside the coupled problem it
  runs as an L-scheme iteration; decoupled it is a single explicit pass per
  time step with L = 1 and theta = 1.
* the unbiased GRW (UGRW), where every site's particle group is first
  translated by an integer number of sites and then spread by unbiased jumps
  of ``d`` sites.

Boundary faces carrying a Dirichlet condition are open (particles leave and
the value is re-imposed); every other face is closed to outward jumps.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.errors import ConfigError, ContractViolation, TimeStepError
from src.core.flow import LSchemeConfig, VelocityField, align_to_breakpoint
from src.core.lattice import (
    BoundaryCondition, BoundarySet, Grid, ParticleField, Redistributor,
    jump_nearest, l2_norm,
)

logger = logging.getLogger(__name__)

CAP_TOL = 1e-12

ReactionFn = Callable[[np.ndarray], np.ndarray]
SourceFn = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


class PecletPolicy(str, Enum):
    STRICT = 'strict'
    AUGMENT = 'augment'

    @classmethod
    def parse(cls, value) -> 'PecletPolicy':
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigError(f"Unknown Peclet policy '{value}'") from None


class TransportScheme(str, Enum):
    BGRW = 'bgrw'
    UGRW = 'ugrw'

    @classmethod
    def parse(cls, value) -> 'TransportScheme':
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigError(f"Unknown transport scheme '{value}'") from None


@dataclass
class TransportProblem:
    """
    Transport of a concentration c on a lattice.

    ``diffusion`` is (D_x, D_z); scalars or per-site arrays. On 1D grids
    only D_z is used. ``source`` is an external source S(t, X, Z) in
    concentration units per time. ``compensate_drift`` adds u^2 to the BGRW
    jump numbers of the decoupled walk; the coupled iteration ignores it.
    """

    grid: Grid
    diffusion: Tuple[Union[float, np.ndarray], Union[float, np.ndarray]]
    velocity: VelocityField
    initial: np.ndarray
    t_end: float
    boundaries: Sequence[BoundaryCondition] = ()
    reaction: Optional[ReactionFn] = None
    source: Optional[SourceFn] = None
    scheme: Union[str, TransportScheme] = TransportScheme.BGRW
    dt: Optional[float] = None
    resolution: int = 1
    peclet_policy: Union[str, PecletPolicy] = PecletPolicy.STRICT
    output_times: Sequence[float] = ()
    t_start: float = 0.0
    compensate_drift: bool = False

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=float)
        if self.initial.shape != self.grid.shape:
            raise ContractViolation(
                f"initial concentration shape {self.initial.shape} does not match grid {self.grid.shape}"
            )
        if np.isscalar(self.diffusion):
            self.diffusion = (float(self.diffusion), float(self.diffusion))
        if any(np.any(np.asarray(d) < 0) for d in self.diffusion):
            raise ContractViolation("diffusion coefficients must be nonnegative")
        if self.resolution < 1:
            raise ContractViolation("UGRW velocity resolution must be at least 1")
        self.scheme = TransportScheme.parse(self.scheme)
        self.peclet_policy = PecletPolicy.parse(self.peclet_policy)


def _axis_coefficients(grid: Grid, diffusion, velocity: VelocityField) -> List[Tuple[int, float, np.ndarray, np.ndarray]]:
    """(axis, spacing, D, U) for every lattice axis, broadcast to the grid."""
    out = []
    for axis, h, vertical in grid.axes():
        d = diffusion[1] if vertical else diffusion[0]
        d = np.broadcast_to(np.asarray(d, dtype=float), grid.shape)
        out.append((axis, h, d, np.broadcast_to(velocity.along(axis, grid), grid.shape)))
    return out


@dataclass
class BgrwParams:
    """
    Per-site BGRW jump numbers.

    ``r[a]`` and ``drift[a]`` hold r and u (or v) along lattice axis ``a``:
    r = 2 D dt / (L h^2) and u = dt U / (L h). With ``compensate`` the
    squared drift is added to r, so the jump variance h^2 (r - u^2) equals
    2 D dt and the explicit walk carries no numerical diffusion. Sites whose
    D was raised by the augment policy are left uncompensated.
    """

    r: Dict[int, np.ndarray]
    drift: Dict[int, np.ndarray]
    l_param: float = 1.0
    augmented_fraction: float = 0.0

    @classmethod
    def build(cls, grid: Grid, diffusion, velocity: VelocityField, dt: float, l_param: float = 1.0,
              policy: Union[str, PecletPolicy] = PecletPolicy.STRICT, compensate: bool = False) -> 'BgrwParams':
        policy = PecletPolicy.parse(policy)
        r, drift = {}, {}
        augmented = np.zeros(grid.shape, dtype=bool)
        for axis, h, d, u in _axis_coefficients(grid, diffusion, velocity):
            raised = np.zeros(grid.shape, dtype=bool)
            if policy is PecletPolicy.AUGMENT:
                needed = 0.5 * np.abs(u) * h
                raised = needed > d * (1.0 + CAP_TOL)
                augmented |= raised
                d = np.maximum(d, needed)
            drift[axis] = dt * u / (l_param * h)
            r[axis] = 2.0 * d * dt / (l_param * h * h)
            if compensate:
                # not on sites where the augment policy raised D
                r[axis] = np.where(raised, r[axis], r[axis] + drift[axis] ** 2)
        fraction = float(np.mean(augmented))
        if fraction > 0:
            logger.warning("diffusion raised to |U| h / 2 on %.1f%% of the sites", 100 * fraction)
        params = cls(r=r, drift=drift, l_param=l_param, augmented_fraction=fraction)
        params.validate()
        return params

    @property
    def r_x(self) -> np.ndarray:
        return self.r[0] if len(self.r) == 2 else np.zeros_like(self.r[0])

    @property
    def r_z(self) -> np.ndarray:
        return self.r[max(self.r)]

    def validate(self):
        """
        Raises:
            TimeStepError: If r_x + r_z > 1 or |u| > r_x somewhere.
        """
        total = sum(self.r.values())
        if np.any(total > 1.0 + CAP_TOL):
            raise TimeStepError(f"BGRW jump numbers sum to {float(np.max(total)):.6g} > 1")
        for axis in self.r:
            excess = np.abs(self.drift[axis]) - self.r[axis]
            if np.any(excess > CAP_TOL * np.maximum(1.0, self.r[axis])):
                raise TimeStepError(
                    f"local Peclet number above 2 along axis {axis} (|u| > r at "
                    f"{int(np.count_nonzero(excess > 0))} sites)"
                )

    def jumps(self) -> List[Tuple[int, np.ndarray, np.ndarray]]:
        return [(axis, 0.5 * (self.r[axis] + self.drift[axis]), 0.5 * (self.r[axis] - self.drift[axis]))
                for axis in sorted(self.r)]

    def max_peclet(self) -> float:
        """Largest local |u| / r * 2 = |U| h / D over all axes."""
        values = []
        for axis in self.r:
            with np.errstate(divide='ignore', invalid='ignore'):
                ratio = np.where(self.r[axis] > 0, 2.0 * np.abs(self.drift[axis]) / self.r[axis],
                                 np.where(self.drift[axis] != 0, np.inf, 0.0))
            values.append(float(np.max(ratio)))
        return max(values)


@dataclass
class UgrwParams:
    """Integer drifts and the common jump amplitude ``d`` of the unbiased walk."""

    d: int
    r: Dict[int, np.ndarray]
    shift: Dict[int, np.ndarray]
    l_param: float = 1.0

    @classmethod
    def build(cls, grid: Grid, diffusion, velocity: VelocityField, dt: float,
              l_param: float = 1.0) -> 'UgrwParams':
        axes = _axis_coefficients(grid, diffusion, velocity)
        rate = sum(2.0 * d * dt / (l_param * h * h) for _, h, d, _ in axes)
        d_amp = max(1, math.ceil(math.sqrt(float(np.max(rate))) - 1e-12))
        while float(np.max(rate)) / (d_amp * d_amp) > 1.0 + CAP_TOL:
            d_amp += 1
        r = {axis: 2.0 * d * dt / (l_param * (d_amp * h) ** 2) for axis, h, d, _ in axes}
        shift = {axis: np.floor(dt * u / (l_param * h) + 0.5).astype(int) for axis, h, _, u in axes}
        params = cls(d=d_amp, r=r, shift=shift, l_param=l_param)
        params.validate()
        return params

    def validate(self):
        if self.d < 1:
            raise ContractViolation("UGRW jump amplitude must be at least 1")
        total = sum(self.r.values())
        if np.any(total > 1.0 + CAP_TOL):
            raise TimeStepError(f"UGRW jump numbers sum to {float(np.max(total)):.6g} > 1")

    def max_shift(self) -> int:
        return int(max(np.max(np.abs(s)) for s in self.shift.values()))


def choose_transport_dt(velocity: VelocityField, diffusion, grid: Grid,
                        scheme: Union[str, TransportScheme] = TransportScheme.BGRW,
                        l_param: float = 1.0, resolution: int = 1,
                        policy: Union[str, PecletPolicy] = PecletPolicy.STRICT,
                        dt: Optional[float] = None, compensate: bool = False):
    """
    Time step and matching jump parameters for a transport scheme.

    BGRW takes the largest dt with r_x + r_z <= 1 (after the Peclet policy
    has adjusted D). UGRW takes the step that resolves the largest velocity
    component with ``resolution`` sites per step, or the diffusion cap when
    the velocity vanishes; ``d`` then follows from r_x + r_z <= 1.
    A drift-compensated BGRW solves a dt + b dt^2 <= 1 per site, with b the
    sum of (U / h)^2.

    Returns:
        (dt, BgrwParams | UgrwParams)

    Raises:
        TimeStepError: When no admissible dt exists.
    """
    scheme = TransportScheme.parse(scheme)
    policy = PecletPolicy.parse(policy)
    axes = _axis_coefficients(grid, diffusion, velocity)
    moving = any(np.any(u != 0) for _, _, _, u in axes)

    if dt is None:
        if scheme is TransportScheme.BGRW:
            rate = np.zeros(grid.shape)
            drift = np.zeros(grid.shape)
            for _, h, d, u in axes:
                squared = (u / h) ** 2
                if policy is PecletPolicy.AUGMENT:
                    needed = 0.5 * np.abs(u) * h
                    squared = np.where(needed > d * (1.0 + CAP_TOL), 0.0, squared)
                    d = np.maximum(d, needed)
                rate = rate + 2.0 * d / (h * h)
                drift = drift + squared
            rate_max = float(np.max(rate))
            if rate_max <= 0:
                raise TimeStepError("no admissible BGRW time step: zero diffusion"
                                    + (" with nonzero velocity" if moving else ""))
            dt = l_param / rate_max
            if compensate and np.any(drift > 0):
                a, b = rate / l_param, drift / l_param ** 2
                with np.errstate(divide='ignore', invalid='ignore'):
                    roots = np.where(b > 0, 2.0 / (a + np.sqrt(a * a + 4.0 * b)), 1.0 / a)
                dt = float(np.min(roots))
        elif moving:
            crossing = min(h / float(np.max(np.abs(u))) for _, h, _, u in axes if np.any(u != 0))
            dt = resolution * l_param * crossing
        else:
            rate_max = float(np.max(sum(2.0 * d / (h * h) for _, h, d, _ in axes)))
            if rate_max <= 0:
                raise TimeStepError("no admissible UGRW time step: zero velocity and zero diffusion")
            dt = l_param / rate_max
    if dt <= 0:
        raise TimeStepError(f"time step must be positive, got {dt}")

    if scheme is TransportScheme.BGRW:
        return dt, BgrwParams.build(grid, diffusion, velocity, dt, l_param, policy, compensate)
    return dt, UgrwParams.build(grid, diffusion, velocity, dt, l_param)


# ---------------------------------------------------------------------------
# Single steps
# ---------------------------------------------------------------------------

@dataclass
class StorageState:
    """theta(psi^s, c^s) and the previous-time theta and c of the L-scheme source."""

    theta_s: np.ndarray
    theta_prev: np.ndarray
    c_prev: np.ndarray


def transport_source(c_s: np.ndarray, dt: float, l_param: float = 1.0,
                     reaction: Optional[ReactionFn] = None, storage: Optional[StorageState] = None,
                     source: Optional[np.ndarray] = None) -> np.ndarray:
    """g^s = R(c^s) dt / L - [theta_s c^s - theta_prev c_prev] / L + dt S / L."""
    g = np.zeros_like(c_s)
    if reaction is not None:
        g += np.asarray(reaction(c_s), dtype=float) * dt / l_param
    if storage is not None:
        g -= (storage.theta_s * c_s - storage.theta_prev * storage.c_prev) / l_param
    if source is not None:
        g += dt * source / l_param
    if not np.all(np.isfinite(g)):
        raise TimeStepError("non-finite transport source; check reaction and water-content callbacks")
    return g


def _close_faces(jumps, grid: Grid, open_mask: Optional[np.ndarray]):
    """Zero outward jump fractions on boundary sites that are not open."""
    closed = []
    for axis, w_plus, w_minus in jumps:
        w_plus, w_minus = w_plus.copy(), w_minus.copy()
        low = [slice(None)] * grid.ndim
        high = [slice(None)] * grid.ndim
        low[axis], high[axis] = 0, -1
        if open_mask is None:
            w_minus[tuple(low)] = 0.0
            w_plus[tuple(high)] = 0.0
        else:
            w_minus[tuple(low)] = np.where(open_mask[tuple(low)], w_minus[tuple(low)], 0.0)
            w_plus[tuple(high)] = np.where(open_mask[tuple(high)], w_plus[tuple(high)], 0.0)
        closed.append((axis, w_plus, w_minus))
    return closed


def bgrw_step(field_s: ParticleField, params: BgrwParams, grid: Grid, dt: float,
              reaction: Optional[ReactionFn] = None, storage: Optional[StorageState] = None,
              source: Optional[np.ndarray] = None, open_mask: Optional[np.ndarray] = None,
              redistributor: Optional[Redistributor] = None) -> ParticleField:
    """
    One BGRW pass: scatter with (r +- u)/2 fractions, then add the source.

    Args:
        field_s: Concentration particles at iteration s (or time k-1 when decoupled).
        params: Jump numbers; validated before any particle moves.
        grid: Lattice.
        dt: Time step.
        reaction: R(c), applied once per call.
        storage: L-scheme storage state; None for the decoupled scheme.
        source: External source values S at the new time level.
        open_mask: Sites whose outward jumps leave the lattice; all other
            boundary sites are closed.
        redistributor: Redistribution state; deterministic if omitted.

    Returns:
        Particle field at s+1 (or k).
    """
    params.validate()
    redistributor = redistributor or Redistributor()
    jumps = _close_faces(params.jumps(), grid, open_mask)
    moved = jump_nearest(field_s.counts, jumps, redistributor, key='bgrw')
    g = transport_source(field_s.values, dt, params.l_param, reaction, storage, source)
    counts = moved + redistributor.source(field_s.to_counts(g), key='bgrw-source')
    return ParticleField(counts, field_s.n_total, field_s.unit_scale)


def ugrw_step(field_k: ParticleField, params: UgrwParams, grid: Grid, dt: float,
              reaction: Optional[ReactionFn] = None, source: Optional[np.ndarray] = None,
              redistributor: Optional[Redistributor] = None) -> ParticleField:
    """
    One UGRW step: translate every group by its integer drift, then spread.

    Groups whose target falls outside the lattice are deposited on the
    nearest boundary site.
    """
    params.validate()
    redistributor = redistributor or Redistributor()
    counts = field_k.counts
    shape = grid.shape
    index = np.indices(shape)
    axes = sorted(params.r)
    landing = [np.clip(index[a] + params.shift[a], 0, shape[a] - 1) for a in axes]

    weights = np.stack([0.5 * params.r[a] * np.ones(shape) for a in axes for _ in (1, -1)])
    moved = redistributor.split(counts, weights, key='ugrw')

    out = np.zeros(shape)
    np.add.at(out, tuple(landing), counts - moved.sum(axis=0))
    for k, (a, sign) in enumerate((a, sign) for a in axes for sign in (1, -1)):
        target = list(landing)
        target[a] = np.clip(landing[a] + sign * params.d, 0, shape[a] - 1)
        np.add.at(out, tuple(target), moved[k])

    g = transport_source(field_k.values, dt, params.l_param, reaction, None, source)
    out = out + redistributor.source(field_k.to_counts(g), key='ugrw-source')
    return ParticleField(out, field_k.n_total, field_k.unit_scale)


# ---------------------------------------------------------------------------
# Moments
# ---------------------------------------------------------------------------

def spatial_moments(values: np.ndarray, grid: Grid) -> Dict[str, float]:
    """Mass, center of mass and variance per axis of a concentration field."""
    values = np.asarray(values, dtype=float)
    mass = float(values.sum())
    out = {'mass': mass * grid.cell_volume}
    X, Z = grid.mesh()
    coords = {'z': Z} if grid.ndim == 1 else {'x': X, 'z': Z}
    for name, coord in coords.items():
        if mass == 0:
            out[f'center_{name}'] = math.nan
            out[f'variance_{name}'] = math.nan
            continue
        center = float((values * coord).sum() / mass)
        out[f'center_{name}'] = center
        out[f'variance_{name}'] = float((values * (coord - center) ** 2).sum() / mass)
    return out


def support_touches_boundary(values: np.ndarray, grid: Grid, threshold: float = 1e-12) -> bool:
    """True if any boundary site carries more than ``threshold`` of the peak value."""
    values = np.abs(np.asarray(values, dtype=float))
    peak = float(values.max()) if values.size else 0.0
    if peak == 0:
        return False
    return bool(np.any(values[grid.boundary_mask()] > threshold * peak))


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------

@dataclass
class TransportSolution:
    grid: Grid
    c: np.ndarray
    times: List[float] = field(default_factory=list)
    dts: List[float] = field(default_factory=list)
    moments: List[Dict[str, float]] = field(default_factory=list)
    snapshots: Dict[float, np.ndarray] = field(default_factory=dict)
    params: Dict[str, float] = field(default_factory=dict)
    converged: bool = True

    def moment_table(self) -> Dict[str, List[float]]:
        """Column-wise moment series with the time column first."""
        table: Dict[str, List[float]] = {'t': list(self.times)}
        for row in self.moments:
            for key, value in row.items():
                table.setdefault(key, []).append(value)
        return table


class TransportSolver:
    """
    Transport on one lattice: decoupled time stepping, or single L-scheme
    iterations driven by the coupled solver.
    """

    def __init__(self, problem: TransportProblem, config: Optional[LSchemeConfig] = None):
        self.problem = problem
        self.config = config or LSchemeConfig(l_param=1.0)
        self.grid = problem.grid
        self.bounds = BoundarySet(self.grid, problem.boundaries)
        self.redistributor = Redistributor(self.config.redistribution, seed=self.config.seed)
        self._mesh = self.grid.mesh()
        self._open = self.bounds.dirichlet_mask.copy()
        for bc, mask in self.bounds.flux_conditions(('free_drainage',)):
            self._open |= mask

    def _source_values(self, t: float) -> Optional[np.ndarray]:
        if self.problem.source is None:
            return None
        return np.broadcast_to(np.asarray(self.problem.source(t, *self._mesh), dtype=float),
                               self.grid.shape)

    def _boundary_flux(self, t: float) -> Optional[np.ndarray]:
        fluxes = self.bounds.flux_conditions(('neumann',))
        if not fluxes:
            return None
        extra = np.zeros(self.grid.shape)
        for bc, mask in fluxes:
            h = self.grid.spacing(self.grid.face_axis(bc.face))
            extra[mask] += self.bounds.inward_flux(bc, mask, t) / h
        return extra

    def _combined_source(self, t: float) -> Optional[np.ndarray]:
        parts = [p for p in (self._source_values(t), self._boundary_flux(t)) if p is not None]
        if not parts:
            return None
        return sum(parts[1:], np.array(parts[0], dtype=float))

    def _particles(self, values: np.ndarray) -> ParticleField:
        return ParticleField.from_values(values, self.config.n_total, self.config.unit_scale)

    def bgrw_params(self, velocity: VelocityField, dt: float, l_param: float) -> BgrwParams:
        return BgrwParams.build(self.grid, self.problem.diffusion, velocity, dt, l_param,
                                self.problem.peclet_policy)

    def iterate(self, c_s: np.ndarray, t: float, dt: float, velocity: VelocityField,
                storage: StorageState) -> np.ndarray:
        """One L-scheme BGRW iteration c^s -> c^{s+1} at time level ``t``."""
        if self.problem.scheme is not TransportScheme.BGRW:
            raise ConfigError("coupled transport iterations need the BGRW scheme")
        l_param = self.config.l_param
        params = self.bgrw_params(velocity, dt, l_param)
        out = bgrw_step(self._particles(c_s), params, self.grid, dt, self.problem.reaction, storage,
                        self._combined_source(t), self._open, self.redistributor)
        return self.bounds.apply_dirichlet(out.values, t)

    def step_decoupled(self, c_prev: np.ndarray, t_new: float, dt: float, params=None) -> np.ndarray:
        """One explicit BGRW (L = 1, theta = 1) or UGRW step."""
        self.redistributor.reset()
        velocity = self.problem.velocity
        if params is None:
            _, params = choose_transport_dt(velocity, self.problem.diffusion, self.grid,
                                            self.problem.scheme, 1.0, self.problem.resolution,
                                            self.problem.peclet_policy, dt, self.problem.compensate_drift)
        source = self._combined_source(t_new)
        particles = self._particles(c_prev)
        if isinstance(params, UgrwParams):
            out = ugrw_step(particles, params, self.grid, dt, self.problem.reaction, source,
                            self.redistributor)
        else:
            out = bgrw_step(particles, params, self.grid, dt, self.problem.reaction, None, source,
                            self._open, self.redistributor)
        return self.bounds.apply_dirichlet(out.values, t_new)

    def solve(self) -> TransportSolution:
        """Decoupled time loop with a moment record at every step."""
        problem = self.problem
        dt, params = choose_transport_dt(problem.velocity, problem.diffusion, self.grid, problem.scheme,
                                         1.0, problem.resolution, problem.peclet_policy, problem.dt,
                                         problem.compensate_drift)
        c = self.bounds.apply_dirichlet(problem.initial.copy(), problem.t_start)
        t = problem.t_start
        pending = sorted(problem.output_times)
        solution = TransportSolution(grid=self.grid, c=c, times=[t], moments=[spatial_moments(c, self.grid)])
        if pending and pending[0] <= t:
            solution.snapshots[pending.pop(0)] = c.copy()

        while t < problem.t_end - 1e-12 * max(1.0, abs(problem.t_end)):
            step = align_to_breakpoint(t, dt, pending, problem.t_end)
            step_params = params if math.isclose(step, dt, rel_tol=1e-12) else None
            c = self.step_decoupled(c, t + step, step, step_params)
            t += step
            solution.times.append(t)
            solution.dts.append(step)
            solution.moments.append(spatial_moments(c, self.grid))
            while pending and pending[0] <= t + 1e-9 * max(1.0, abs(t)):
                solution.snapshots[pending.pop(0)] = c.copy()

        solution.c = c
        solution.params = self._describe_params(dt, params)
        logger.info("%s transport finished: %d steps, dt=%.4g", problem.scheme.value,
                    len(solution.dts), dt)
        return solution

    @staticmethod
    def _describe_params(dt: float, params) -> Dict[str, float]:
        if isinstance(params, UgrwParams):
            return {'dt': dt, 'd': params.d, 'max_shift': params.max_shift(),
                    'r_sum': float(np.max(sum(params.r.values())))}
        return {'dt': dt, 'max_peclet': params.max_peclet(),
                'r_sum': float(np.max(sum(params.r.values()))),
                'augmented_fraction': params.augmented_fraction}

    def correction_norm(self, new: np.ndarray, old: np.ndarray) -> float:
        return l2_norm(new - old, self.grid)
