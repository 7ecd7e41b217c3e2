"""
GRW L-scheme solvers for Richards' equation.

The pressure-form solver moves particle numbers representing the pressure
head psi between neighboring lattice sites, with jump probabilities

    r = K(psi_{i+-1/2}) dt / (L h^2)

and an L-scheme source that carries gravity and the water-content change
since the previous time step. The same kernel handles 1D columns and 2D
vertical cross-sections; gravity acts on the vertical pair only. With a
constant water content the scheme becomes a transient iteration for
saturated flow and is run to steady state.

The module also holds the theta-form biased GRW for 1D infiltration and the
Darcy velocity reconstruction consumed by the transport solvers.
"""

import logging
import math
import weakref
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.constitutive import SoilModel, l_theta
from src.core.errors import ConfigError, ContractViolation, TimeStepError
from src.core.lattice import (
    BoundaryCondition, BoundarySet, Grid, ParticleField, RedistributionMode,
    Redistributor, DEFAULT_N_TOTAL, jump_nearest, l2_norm, midpoint_values, neighbor,
)

logger = logging.getLogger(__name__)

CAP_TOL = 1e-12
# Lower bound of the stability cap on the per-site jump sum.
MIN_STABILITY_CAP = 0.05
MAX_DT_HALVINGS = 30

SourceFn = Callable[[float, np.ndarray, np.ndarray], np.ndarray]

_L_THETA_CACHE: "weakref.WeakKeyDictionary[SoilModel, float]" = weakref.WeakKeyDictionary()


def soil_l_theta(soil: SoilModel) -> float:
    """L_theta of a soil model, computed once per model instance; 0 when unavailable."""
    try:
        return _L_THETA_CACHE[soil]
    except (KeyError, TypeError):
        pass
    try:
        value = l_theta(soil)
    except Exception as exc:  # coupled laws may reject c=None
        logger.debug("L_theta diagnostic unavailable: %s", exc)
        value = 0.0
    try:
        _L_THETA_CACHE[soil] = value
    except TypeError:
        pass
    return value


@dataclass
class LSchemeConfig:
    """
    Linearization and iteration settings.

    ``max_iters`` bounds the iterations of one time step (or of the whole
    steady-state solve). ``stability_cap`` limits the per-site jump sum to
    ``1 - L_theta / (2 L)`` so the linearized iteration stays contractive.
    """

    l_param: float
    eps_a: float = 0.0
    eps_r: float = 1e-9
    r_max: float = 0.5
    max_iters: int = 10000
    record_history: bool = True
    k_average: str = 'arithmetic'
    redistribution: Union[str, RedistributionMode] = RedistributionMode.DETERMINISTIC
    seed: Optional[int] = None
    n_total: float = DEFAULT_N_TOTAL
    unit_scale: float = 1.0
    stability_cap: bool = True

    def __post_init__(self):
        if self.l_param <= 0:
            raise ContractViolation(f"L must be positive, got {self.l_param}")
        if self.eps_a < 0 or self.eps_r < 0 or (self.eps_a == 0 and self.eps_r == 0):
            raise ContractViolation("tolerances must be nonnegative and not both zero")
        if not 0 < self.r_max <= 1:
            raise ContractViolation(f"r_max must lie in (0, 1], got {self.r_max}")
        if self.max_iters < 1:
            raise ContractViolation("max_iters must be at least 1")
        if self.k_average not in ('arithmetic', 'harmonic'):
            raise ContractViolation(f"Unknown k_average '{self.k_average}'")
        self.redistribution = RedistributionMode.parse(self.redistribution)

    def converged(self, correction: float, norm: float) -> bool:
        return correction <= self.eps_a + self.eps_r * norm


@dataclass
class TimeStepPolicy:
    """Fixed ``dt`` or adaptive from r_max; ``breakpoints`` are hit exactly."""

    dt: Optional[float] = None
    dt_max: Optional[float] = None
    breakpoints: Sequence[float] = ()


@dataclass
class FlowProblem:
    grid: Grid
    soil: SoilModel
    initial: np.ndarray
    t_end: float
    boundaries: Sequence[BoundaryCondition] = ()
    source: Optional[SourceFn] = None
    gravity: bool = True
    k_scale: Optional[np.ndarray] = None
    time_step: TimeStepPolicy = field(default_factory=TimeStepPolicy)
    output_times: Sequence[float] = ()
    t_start: float = 0.0
    steady: bool = False

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=float)
        if self.initial.shape != self.grid.shape:
            raise ContractViolation(
                f"initial field shape {self.initial.shape} does not match grid {self.grid.shape}"
            )
        if self.k_scale is not None:
            self.k_scale = np.broadcast_to(np.asarray(self.k_scale, dtype=float), self.grid.shape)
        if not self.steady and self.t_end <= self.t_start:
            raise ContractViolation("t_end must exceed t_start")


class VelocityBoundaryMode(str, Enum):
    ANALYTICAL = 'analytical'
    FORWARD_DIFFERENCE = 'forward_difference'
    EXTEND_INTERIOR = 'extend_interior'

    @classmethod
    def parse(cls, value) -> 'VelocityBoundaryMode':
        if isinstance(value, cls):
            return value
        aliases = {'approximate': 'forward_difference', 'forward': 'forward_difference',
                   'extend': 'extend_interior', 'extended': 'extend_interior'}
        text = str(value).lower().replace('-', '_')
        try:
            return cls(aliases.get(text, text))
        except ValueError:
            raise ConfigError(f"Unknown velocity boundary mode '{value}'") from None


@dataclass
class VelocityField:
    """Site-centered Darcy velocity; ``u`` along x (None in 1D), ``v`` vertical."""

    v: np.ndarray
    u: Optional[np.ndarray] = None
    mode: VelocityBoundaryMode = VelocityBoundaryMode.FORWARD_DIFFERENCE

    def along(self, axis: int, grid: Grid) -> np.ndarray:
        if axis == grid.vertical_axis:
            return self.v
        return self.u if self.u is not None else np.zeros_like(self.v)

    def max_speed(self) -> float:
        speed = np.abs(self.v)
        if self.u is not None:
            speed = np.maximum(speed, np.abs(self.u))
        return float(np.max(speed))

    @classmethod
    def uniform(cls, grid: Grid, u: float = 0.0, v: float = 0.0) -> 'VelocityField':
        return cls(v=np.full(grid.shape, float(v)),
                   u=None if grid.ndim == 1 else np.full(grid.shape, float(u)))


@dataclass
class StepResult:
    psi: np.ndarray
    iterations: int
    history: List[float]
    converged: bool


@dataclass
class FlowSolution:
    grid: Grid
    psi: np.ndarray
    theta: np.ndarray
    velocity: VelocityField
    times: List[float] = field(default_factory=list)
    dts: List[float] = field(default_factory=list)
    iterations: List[int] = field(default_factory=list)
    histories: List[List[float]] = field(default_factory=list)
    converged: bool = True
    snapshots: Dict[float, Dict[str, np.ndarray]] = field(default_factory=dict)
    l_theta: float = 0.0

    @property
    def total_iterations(self) -> int:
        return int(sum(self.iterations))

    @property
    def correction_history(self) -> List[float]:
        """All correction norms, time steps concatenated."""
        return [value for history in self.histories for value in history]

    def summary(self) -> dict:
        return {
            'converged': self.converged,
            'time_steps': len(self.iterations),
            't_final': self.times[-1] if self.times else None,
            'total_iterations': self.total_iterations,
            'max_iterations_per_step': max(self.iterations) if self.iterations else 0,
            'dt_min': min(self.dts) if self.dts else None,
            'dt_max': max(self.dts) if self.dts else None,
            'l_theta': self.l_theta,
        }


# ---------------------------------------------------------------------------
# Jump probabilities and time steps
# ---------------------------------------------------------------------------

def jump_probabilities_1d(k_plus, k_minus, dt: float, dz: float, l_param: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Jump probabilities r = K dt / (L dz^2) towards i+1 and i-1.

    Raises:
        ContractViolation: For negative conductivities.
        TimeStepError: If r_plus + r_minus exceeds one at any site.
    """
    k_plus = np.asarray(k_plus, dtype=float)
    k_minus = np.asarray(k_minus, dtype=float)
    if np.any(k_plus < 0) or np.any(k_minus < 0):
        raise ContractViolation("mid-point conductivities must be nonnegative")
    factor = dt / (l_param * dz * dz)
    r_plus, r_minus = k_plus * factor, k_minus * factor
    if not (np.all(np.isfinite(r_plus)) and np.all(np.isfinite(r_minus))):
        raise TimeStepError("non-finite jump probabilities")
    total = r_plus + r_minus
    if np.any(total > 1.0 + CAP_TOL):
        raise TimeStepError(f"jump probabilities sum to {float(np.max(total)):.6g} > 1")
    return r_plus, r_minus


def adaptive_dt(k_max: float, l_param: float, dz: float, r_max: float) -> float:
    """Time step giving jump probability r_max at conductivity k_max."""
    if k_max <= 0:
        raise TimeStepError("adaptive time step needs a positive maximum conductivity")
    return r_max * l_param * dz * dz / k_max


def align_to_breakpoint(t: float, dt: float, breakpoints: Sequence[float], t_end: float) -> float:
    """Shrink ``dt`` so an integer number of equal steps reaches the next breakpoint."""
    upcoming = [bp for bp in list(breakpoints) + [t_end] if bp > t + 1e-12 * max(1.0, abs(bp))]
    if not upcoming:
        return dt
    target = min(upcoming)
    span = target - t
    steps = max(1, math.ceil(span / dt - 1e-9))
    return span / steps


# ---------------------------------------------------------------------------
# Pressure-form solver
# ---------------------------------------------------------------------------

class FlowSolver:
    """
    GRW L-scheme for the pressure head on a 1D or 2D lattice.

    The solver owns the particle field, the redistribution state and the
    boundary bookkeeping of one problem instance.
    """

    def __init__(self, problem: FlowProblem, config: LSchemeConfig):
        self.problem = problem
        self.config = config
        self.grid = problem.grid
        self.soil = problem.soil
        self.bounds = BoundarySet(self.grid, problem.boundaries)
        self.redistributor = Redistributor(config.redistribution, seed=config.seed)
        self._mesh = self.grid.mesh()
        self._flux_bcs = self.bounds.flux_conditions()
        for bc, _ in self._flux_bcs:
            if bc.kind == 'free_drainage' and bc.face != 'z_low':
                raise ContractViolation("free drainage is only defined on the bottom face")

        self.l_theta = soil_l_theta(self.soil)
        if config.l_param < self.l_theta:
            logger.warning("L = %g is below L_theta = %.4g", config.l_param, self.l_theta)

        self.sum_cap = 1.0
        if config.stability_cap and self.l_theta > 0:
            self.sum_cap = max(MIN_STABILITY_CAP, min(1.0, 1.0 - self.l_theta / (2.0 * config.l_param)))

    # -- coefficients -------------------------------------------------------

    def conductivity(self, psi: np.ndarray, c: Optional[np.ndarray] = None) -> np.ndarray:
        k = np.asarray(self.soil.conductivity(psi, c), dtype=float)
        if self.problem.k_scale is not None:
            k = k * self.problem.k_scale
        return k

    def theta(self, psi: np.ndarray, c: Optional[np.ndarray] = None) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.soil.theta(psi, c), dtype=float), psi.shape).copy()

    def jump_probabilities(self, psi: np.ndarray, dt: float,
                           c: Optional[np.ndarray] = None) -> List[Tuple[int, float, bool, np.ndarray, np.ndarray]]:
        """(axis, spacing, vertical, r_plus, r_minus) per axis, with the per-site sum checked."""
        k = self.conductivity(psi, c)
        jumps = []
        total = np.zeros(self.grid.shape)
        for axis, h, vertical in self.grid.axes():
            k_plus, k_minus = midpoint_values(k, axis, self.config.k_average)
            r_plus, r_minus = jump_probabilities_1d(k_plus, k_minus, dt, h, self.config.l_param)
            total += r_plus + r_minus
            jumps.append((axis, h, vertical, r_plus, r_minus))
        if np.any(total > 1.0 + CAP_TOL):
            raise TimeStepError(f"jump probabilities sum to {float(np.max(total)):.6g} > 1")
        if not np.all(np.isfinite(total)):
            raise TimeStepError("non-finite jump probabilities")
        return jumps

    def choose_dt(self, psi: np.ndarray, c: Optional[np.ndarray] = None, steady: bool = False) -> float:
        """Largest step meeting the per-face cap and the per-site sum cap (stability-capped when transient)."""
        k = self.conductivity(psi, c)
        l_param = self.config.l_param
        dt = math.inf
        rate_sum = np.zeros(self.grid.shape)
        for axis, h, _ in self.grid.axes():
            k_plus, k_minus = midpoint_values(k, axis, self.config.k_average)
            face_max = float(np.max(k_plus))
            if face_max > 0:
                dt = min(dt, adaptive_dt(face_max, l_param, h, self.config.r_max))
            rate_sum += (k_plus + k_minus) / (h * h)
        rate_max = float(np.max(rate_sum))
        if rate_max > 0:
            dt = min(dt, (1.0 if steady else self.sum_cap) * l_param / rate_max)
        policy = self.problem.time_step
        if policy.dt_max is not None:
            dt = min(dt, policy.dt_max)
        if not math.isfinite(dt):
            dt = policy.dt_max if policy.dt_max is not None else self.problem.t_end - self.problem.t_start
        return dt

    def boundary_values(self, psi: np.ndarray, t: float) -> np.ndarray:
        return self.bounds.apply_dirichlet(psi, t)

    # -- one L-scheme iteration ---------------------------------------------

    def source_term(self, psi_s: np.ndarray, theta_prev: Optional[np.ndarray], t: float, dt: float,
                    jumps, c: Optional[np.ndarray] = None, k: Optional[np.ndarray] = None) -> np.ndarray:
        """L-scheme source f^s in field units (gravity, storage change, sources, boundary fluxes)."""
        l_param = self.config.l_param
        f = np.zeros(self.grid.shape)
        if self.problem.gravity:
            for _, h, vertical, r_plus, r_minus in jumps:
                if vertical:
                    f += (r_plus - r_minus) * h
        if theta_prev is not None:
            f -= (self.theta(psi_s, c) - theta_prev) / l_param
        if self.problem.source is not None:
            f += dt * np.asarray(self.problem.source(t, *self._mesh), dtype=float) / l_param
        for bc, mask in self._flux_bcs:
            h = self.grid.spacing(self.grid.face_axis(bc.face))
            if bc.kind == 'neumann':
                inflow = self.bounds.inward_flux(bc, mask, t)
            else:
                inflow = -(k if k is not None else self.conductivity(psi_s, c))[mask]
            f[mask] += inflow * dt / (l_param * h)
        return f

    def iterate(self, psi_s: np.ndarray, theta_prev: Optional[np.ndarray], t: float, dt: float,
                c: Optional[np.ndarray] = None) -> np.ndarray:
        """
        One GRW L-scheme iteration psi^s -> psi^{s+1}.

        Args:
            psi_s: Current iterate.
            theta_prev: Water content at the previous time step; None drops the
                storage term (steady state).
            t: Time level of the step being solved.
            dt: Time step.
            c: Concentration iterate for concentration-dependent laws.

        Returns:
            The next iterate with Dirichlet values imposed.
        """
        jumps = self.jump_probabilities(psi_s, dt, c)
        f = self.source_term(psi_s, theta_prev, t, dt, jumps, c)
        if not np.all(np.isfinite(f)):
            raise TimeStepError("non-finite L-scheme source; check water-content evaluation")

        particles = ParticleField.from_values(psi_s, self.config.n_total, self.config.unit_scale)
        moved = jump_nearest(particles.counts, [(axis, rp, rm) for axis, _, _, rp, rm in jumps],
                             self.redistributor, key='flow')
        particles.counts = moved + self.redistributor.source(particles.to_counts(f), key='flow-source')
        return self.boundary_values(particles.values, t)

    # -- time stepping -------------------------------------------------------

    def time_step(self, psi_prev: np.ndarray, t: float, dt: float,
                  c: Optional[np.ndarray] = None, c_prev: Optional[np.ndarray] = None,
                  steady: bool = False) -> StepResult:
        """Iterate to convergence at time level ``t`` starting from ``psi_prev``."""
        self.redistributor.reset()
        theta_prev = None if steady else self.theta(psi_prev, c_prev if c_prev is not None else c)
        psi_s = self.boundary_values(psi_prev.copy(), t)
        history: List[float] = []
        for s in range(1, self.config.max_iters + 1):
            psi_next = self.iterate(psi_s, theta_prev, t, dt, c)
            correction = l2_norm(psi_next - psi_s, self.grid)
            if self.config.record_history:
                history.append(correction)
            psi_s = psi_next
            if self.config.converged(correction, l2_norm(psi_s, self.grid)):
                return StepResult(psi_s, s, history, True)
        return StepResult(psi_s, self.config.max_iters, history, False)

    def velocity(self, psi: np.ndarray, c: Optional[np.ndarray] = None,
                 mode: Union[str, VelocityBoundaryMode] = VelocityBoundaryMode.FORWARD_DIFFERENCE,
                 analytical=None, t: float = 0.0) -> VelocityField:
        return darcy_velocity(psi, self.soil, self.grid, mode, c=c, k_scale=self.problem.k_scale,
                              gravity=self.problem.gravity, analytical=analytical, t=t)

    def _snapshot(self, psi: np.ndarray) -> Dict[str, np.ndarray]:
        velocity = self.velocity(psi)
        snap = {'psi': psi.copy(), 'theta': self.theta(psi), 'q_z': velocity.v.copy()}
        if velocity.u is not None:
            snap['q_x'] = velocity.u.copy()
        return snap

    def solve_steady(self) -> FlowSolution:
        """
        Iterate without the time loop until the corrections meet the tolerance.

        The storage term is dropped, so the iteration relaxes towards the
        stationary solution for the boundary data at ``t_start``.
        """
        problem = self.problem
        psi = problem.initial.copy()
        t = problem.t_start
        dt = problem.time_step.dt or self.choose_dt(psi, steady=True)
        result, dt = self._step_with_retry(psi, t, dt, steady=True)
        if not result.converged:
            logger.warning("steady solve stopped after %d iterations without convergence",
                           result.iterations)
        else:
            logger.info("steady state reached after %d iterations", result.iterations)
        return self._finish(result.psi, [t], [dt], [result], {})

    def solve(self) -> FlowSolution:
        """Outer time loop; each step iterates from the previous solution."""
        problem = self.problem
        if problem.steady:
            return self.solve_steady()

        psi = self.boundary_values(problem.initial.copy(), problem.t_start)
        t = problem.t_start
        breakpoints = sorted(set(problem.time_step.breakpoints) | set(problem.output_times))
        pending_outputs = sorted(problem.output_times)
        times, dts, results = [], [], []
        snapshots: Dict[float, Dict[str, np.ndarray]] = {}
        if pending_outputs and pending_outputs[0] <= t:
            snapshots[t] = self._snapshot(psi)
            pending_outputs.pop(0)

        while t < problem.t_end - 1e-12 * max(1.0, abs(problem.t_end)):
            dt = problem.time_step.dt or self.choose_dt(psi)
            dt = align_to_breakpoint(t, dt, breakpoints, problem.t_end)
            result, dt = self._step_with_retry(psi, t + dt, dt)
            t = t + dt
            psi = result.psi
            times.append(t)
            dts.append(dt)
            results.append(result)
            logger.debug("t=%.6g dt=%.4g iterations=%d", t, dt, result.iterations)
            while pending_outputs and pending_outputs[0] <= t + 1e-9 * max(1.0, abs(t)):
                snapshots[pending_outputs.pop(0)] = self._snapshot(psi)
            if not result.converged:
                logger.warning("time step at t=%.6g did not converge in %d iterations",
                               t, result.iterations)
                break
        return self._finish(psi, times, dts, results, snapshots)

    def _step_with_retry(self, psi: np.ndarray, t_new: float, dt: float, steady: bool = False):
        """Run a step; with an adaptive policy, halve dt on cap violations."""
        adaptive = self.problem.time_step.dt is None
        for _ in range(MAX_DT_HALVINGS):
            try:
                return self.time_step(psi, t_new, dt, steady=steady), dt
            except TimeStepError:
                if not adaptive:
                    raise
                if not steady:
                    t_new -= dt / 2
                dt /= 2
                logger.debug("jump cap exceeded, retrying with dt=%.4g", dt)
        raise TimeStepError("no admissible time step after repeated halving")

    def _finish(self, psi, times, dts, results, snapshots) -> FlowSolution:
        velocity = self.velocity(psi)
        return FlowSolution(
            grid=self.grid, psi=psi, theta=self.theta(psi), velocity=velocity,
            times=list(times), dts=list(dts),
            iterations=[r.iterations for r in results],
            histories=[r.history for r in results],
            converged=all(r.converged for r in results),
            snapshots=snapshots, l_theta=self.l_theta,
        )


def _check_dimension(problem: FlowProblem, ndim: int):
    if problem.grid.ndim != ndim:
        raise ContractViolation(f"expected a {ndim}D grid, got {problem.grid.ndim}D")


def solve_flow_1d(problem: FlowProblem, config: LSchemeConfig) -> FlowSolution:
    _check_dimension(problem, 1)
    return FlowSolver(problem, config).solve()


def solve_flow_2d(problem: FlowProblem, config: LSchemeConfig) -> FlowSolution:
    _check_dimension(problem, 2)
    return FlowSolver(problem, config).solve()


def grw_flow_step_1d(field_s: ParticleField, theta_prev: Optional[np.ndarray], soil: SoilModel,
                     config: LSchemeConfig, grid: Grid, dt: float, t: float = 0.0,
                     boundaries: Sequence[BoundaryCondition] = (), gravity: bool = True,
                     source: Optional[SourceFn] = None,
                     redistributor: Optional[Redistributor] = None) -> ParticleField:
    """Single iteration of the 1D pressure scheme on a particle field."""
    if grid.ndim != 1:
        raise ContractViolation("grw_flow_step_1d needs a 1D grid")
    return _single_step(field_s, theta_prev, soil, config, grid, dt, t, boundaries,
                        gravity, source, redistributor)


def grw_flow_step_2d(field_s: ParticleField, theta_prev: Optional[np.ndarray], soil: SoilModel,
                     config: LSchemeConfig, grid: Grid, dt: float, t: float = 0.0,
                     boundaries: Sequence[BoundaryCondition] = (), gravity: bool = True,
                     source: Optional[SourceFn] = None,
                     redistributor: Optional[Redistributor] = None) -> ParticleField:
    """Single iteration of the 2D five-point pressure scheme on a particle field."""
    if grid.ndim != 2:
        raise ContractViolation("grw_flow_step_2d needs a 2D grid")
    return _single_step(field_s, theta_prev, soil, config, grid, dt, t, boundaries,
                        gravity, source, redistributor)


def _single_step(field_s, theta_prev, soil, config, grid, dt, t, boundaries, gravity,
                 source, redistributor) -> ParticleField:
    problem = FlowProblem(grid=grid, soil=soil, initial=field_s.values, t_end=t + dt,
                          boundaries=boundaries, source=source, gravity=gravity, t_start=t)
    config = LSchemeConfig(**{**vars(config), 'n_total': field_s.n_total,
                              'unit_scale': field_s.unit_scale})
    solver = FlowSolver(problem, config)
    if redistributor is not None:
        solver.redistributor = redistributor
    psi_next = solver.iterate(field_s.values, theta_prev, t, dt)
    return ParticleField.from_values(psi_next, field_s.n_total, field_s.unit_scale)


# ---------------------------------------------------------------------------
# Darcy velocity
# ---------------------------------------------------------------------------

def _gradient(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Centered differences inside, one-sided differences on the two ends."""
    return np.gradient(values, h, axis=axis, edge_order=1)


def _extend_interior(component: np.ndarray, grid: Grid) -> np.ndarray:
    out = component.copy()
    if grid.ndim == 1:
        out[0], out[-1] = out[1], out[-2]
        return out
    out[0, :], out[-1, :] = out[1, :], out[-2, :]
    out[:, 0], out[:, -1] = out[:, 1], out[:, -2]
    return out


def darcy_velocity(psi: np.ndarray, soil: SoilModel, grid: Grid,
                   boundary_mode: Union[str, VelocityBoundaryMode] = VelocityBoundaryMode.FORWARD_DIFFERENCE,
                   c: Optional[np.ndarray] = None, k_scale: Optional[np.ndarray] = None,
                   gravity: bool = True, analytical: Optional[Callable] = None,
                   t: float = 0.0) -> VelocityField:
    """
    Darcy flux q = -K grad(psi + z) at the lattice sites.

    Args:
        psi: Pressure head on the full grid.
        soil: Soil model giving K(psi, c).
        grid: Lattice.
        boundary_mode: How boundary sites are completed: forward differences,
            copies of the first interior site, or an analytical callback
            ``analytical(t, X, Z) -> (q_x, q_z)`` (``(q_z,)`` in 1D).
        c: Concentration for concentration-dependent conductivities.
        k_scale: Optional multiplicative conductivity field.
        gravity: Whether the elevation gradient contributes.
        analytical: Callback for ANALYTICAL mode.
        t: Time passed to the callback.

    Returns:
        VelocityField with the requested boundary completion.

    Raises:
        ConfigError: ANALYTICAL mode without a callback.
    """
    mode = VelocityBoundaryMode.parse(boundary_mode)
    if mode is VelocityBoundaryMode.ANALYTICAL and analytical is None:
        raise ConfigError("analytical velocity boundary mode needs a callback")

    k = np.asarray(soil.conductivity(psi, c), dtype=float) * np.ones(grid.shape)
    if k_scale is not None:
        k = k * k_scale

    components = []
    for axis, h, vertical in grid.axes():
        grad = _gradient(psi, axis, h)
        if vertical and gravity:
            grad = grad + (1.0 if grid.z_up else -1.0)
        components.append(-k * grad)

    if mode is VelocityBoundaryMode.EXTEND_INTERIOR:
        components = [_extend_interior(comp, grid) for comp in components]
    elif mode is VelocityBoundaryMode.ANALYTICAL:
        boundary = grid.boundary_mask()
        exact = analytical(t, *grid.mesh())
        components = [np.where(boundary, np.broadcast_to(ex, grid.shape), comp)
                      for comp, ex in zip(components, exact)]

    if grid.ndim == 1:
        return VelocityField(v=components[0], u=None, mode=mode)
    return VelocityField(v=components[1], u=components[0], mode=mode)


# ---------------------------------------------------------------------------
# Theta-form biased GRW (1D, z positive downward)
# ---------------------------------------------------------------------------

@dataclass
class ThetaFormProblem:
    """
    Infiltration in normalized water content Theta on a downward column.

    ``influx`` is the prescribed flux through the surface (site 0) in
    Theta units; the bottom is closed.
    """

    grid: Grid
    diffusivity: Callable[[np.ndarray], np.ndarray]
    drift: Callable[[np.ndarray], np.ndarray]
    initial: np.ndarray
    t_end: float
    influx: Union[float, Callable[[float], float]] = 0.0
    r_max: float = 1.0
    output_times: Sequence[float] = ()

    def influx_at(self, t: float) -> float:
        return float(self.influx(t)) if callable(self.influx) else float(self.influx)


@dataclass
class ThetaFormSolution:
    grid: Grid
    saturation: np.ndarray
    times: List[float]
    dts: List[float]
    snapshots: Dict[float, np.ndarray]

    @property
    def steps(self) -> int:
        return len(self.dts)


def bgrw_theta_coefficients(saturation: np.ndarray, diffusivity, drift, dt: float,
                            dz: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Gathering coefficients (stay, from_next, from_prev) of the theta-form BGRW.

    With r = 2 dt D / dz^2 at the half sites and v_i = V(Theta_i) dt / dz,

        stay_i      = 1 - (r_{i+1/2} + r_{i-1/2}) / 2
        from_next_i = (r_{i+1/2} - v_i) / 2      (multiplies n_{i+1})
        from_prev_i = (r_{i-1/2} + v_i) / 2      (multiplies n_{i-1})

    The surface site keeps ``1 - from_prev_1`` of its particles and gathers
    nothing from above; the closed bottom has no face below.

    Raises:
        TimeStepError: If r > 1 or a coefficient leaves [0, 1].
    """
    d = np.asarray(diffusivity(saturation), dtype=float) * np.ones_like(saturation)
    v = np.asarray(drift(saturation), dtype=float) * np.ones_like(saturation) * dt / dz
    d_plus, d_minus = midpoint_values(d, 0)
    r_plus = 2.0 * dt * d_plus / (dz * dz)
    r_minus = 2.0 * dt * d_minus / (dz * dz)
    if not (np.all(np.isfinite(r_plus)) and np.all(np.isfinite(v))):
        raise TimeStepError("non-finite theta-form coefficients")
    if np.any(r_plus > 1.0 + CAP_TOL):
        raise TimeStepError(f"theta-form jump number {float(np.max(r_plus)):.6g} exceeds 1")

    stay = 1.0 - 0.5 * (r_plus + r_minus)
    from_next = 0.5 * (r_plus - v)
    from_prev = 0.5 * (r_minus + v)
    stay[0] = 1.0 - from_prev[1]
    from_prev[0] = 0.0
    from_next[-1] = 0.0

    coefficients = np.stack([stay, from_next, from_prev])
    if np.any(coefficients < -CAP_TOL) or np.any(coefficients > 1.0 + CAP_TOL):
        raise TimeStepError("theta-form coefficients leave [0, 1]; drift too strong for dt")
    coefficients = np.clip(coefficients, 0.0, 1.0)
    return coefficients[0], coefficients[1], coefficients[2]


def theta_form_dt(saturation: np.ndarray, diffusivity, dz: float, r_max: float = 1.0) -> float:
    """dt = r_max dz^2 / (2 D_max), so the largest jump number equals r_max."""
    d_max = float(np.max(np.asarray(diffusivity(saturation), dtype=float)))
    if not math.isfinite(d_max) or d_max <= 0:
        raise TimeStepError(f"theta-form time step needs a finite positive D_max, got {d_max}")
    return r_max * dz * dz / (2.0 * d_max)


def bgrw_theta_step_1d(field_k: ParticleField, diffusivity, drift, dt: float, dz: float,
                       influx: float = 0.0, redistributor: Optional[Redistributor] = None) -> ParticleField:
    """
    One theta-form BGRW step on a downward column.

    Site 0 is the surface and receives ``influx * dt / dz`` in Theta units.
    """
    redistributor = redistributor or Redistributor()
    stay, from_next, from_prev = bgrw_theta_coefficients(field_k.values, diffusivity, drift, dt, dz)
    counts = field_k.counts
    new = (redistributor.scale(counts, stay, 'theta-stay')
           + redistributor.scale(neighbor(counts, 0, 1), from_next, 'theta-next')
           + redistributor.scale(neighbor(counts, 0, -1), from_prev, 'theta-prev'))
    inflow = np.zeros_like(counts)
    inflow[0] = influx * dt / dz
    new = new + redistributor.source(field_k.to_counts(inflow), key='theta-influx')
    return ParticleField(new, field_k.n_total, field_k.unit_scale)


def solve_theta_form_1d(problem: ThetaFormProblem,
                        redistribution: Union[str, RedistributionMode] = RedistributionMode.DETERMINISTIC,
                        seed: Optional[int] = None, n_total: float = DEFAULT_N_TOTAL) -> ThetaFormSolution:
    """Run the theta-form BGRW to ``t_end``; dt is recomputed from D_max every step."""
    grid = problem.grid
    if grid.ndim != 1 or grid.z_up:
        raise ContractViolation("the theta-form solver needs a 1D column with z pointing down")
    redistributor = Redistributor(redistribution, seed=seed)
    particles = ParticleField.from_values(problem.initial, n_total)
    pending = sorted(problem.output_times)
    snapshots: Dict[float, np.ndarray] = {}
    times, dts = [], []
    t = 0.0
    while t < problem.t_end - 1e-12 * max(1.0, problem.t_end):
        dt = theta_form_dt(particles.values, problem.diffusivity, grid.dz, problem.r_max)
        dt = align_to_breakpoint(t, dt, pending, problem.t_end)
        redistributor.reset()
        particles = bgrw_theta_step_1d(particles, problem.diffusivity, problem.drift, dt, grid.dz,
                                       problem.influx_at(t), redistributor)
        t += dt
        times.append(t)
        dts.append(dt)
        while pending and pending[0] <= t + 1e-9 * max(1.0, t):
            snapshots[pending.pop(0)] = particles.values.copy()
    logger.info("theta-form run finished after %d steps (dt %.3g..%.3g)",
                len(dts), min(dts) if dts else 0.0, max(dts) if dts else 0.0)
    return ThetaFormSolution(grid=grid, saturation=particles.values, times=times, dts=dts,
                             snapshots=snapshots)
