"""
Alternating splitting for fully coupled flow and reactive transport.

At every time step the solver alternates pressure iterations, a Darcy
velocity update and concentration iterations until the corrections of both
fields satisfy the same stopping rule. The water content and the
conductivity may depend on the concentration, which couples the two
equations in both directions.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Union

import numpy as np

from src.core.constitutive import SoilModel
from src.core.errors import ContractViolation
from src.core.flow import (
    FlowProblem, FlowSolver, LSchemeConfig, TimeStepPolicy, VelocityBoundaryMode,
    VelocityField, align_to_breakpoint,
)
from src.core.lattice import BoundaryCondition, Grid, RedistributionMode, l2_norm
from src.core.transport import (
    PecletPolicy, StorageState, TransportProblem, TransportScheme, TransportSolver,
    choose_transport_dt,
)

logger = logging.getLogger(__name__)

FieldFn = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


@dataclass
class CoupledConfig:
    """
    Settings of the alternating splitting.

    ``flow_batch`` and ``transport_batch`` set the number of iterations of
    each solver per outer sweep. ``transport_first`` reverses the order.
    """

    l_p: float
    l_c: float
    eps_a: float = 1e-6
    eps_r: float = 0.0
    max_iters: int = 20000
    r_max: float = 0.5
    flow_batch: int = 1
    transport_batch: int = 1
    transport_first: bool = False
    velocity_mode: Union[str, VelocityBoundaryMode] = VelocityBoundaryMode.FORWARD_DIFFERENCE
    analytical_velocity: Optional[Callable] = None
    redistribution: Union[str, RedistributionMode] = RedistributionMode.DETERMINISTIC
    seed: Optional[int] = None
    record_history: bool = True
    k_average: str = 'arithmetic'
    stability_cap: bool = True

    def __post_init__(self):
        if self.l_p <= 0 or self.l_c <= 0:
            raise ContractViolation("L_p and L_c must be positive")
        if self.flow_batch < 1 or self.transport_batch < 1:
            raise ContractViolation("iteration batches must be at least 1")
        self.velocity_mode = VelocityBoundaryMode.parse(self.velocity_mode)

    def flow_config(self) -> LSchemeConfig:
        return LSchemeConfig(l_param=self.l_p, eps_a=self.eps_a, eps_r=self.eps_r, r_max=self.r_max,
                             max_iters=self.max_iters, record_history=self.record_history,
                             k_average=self.k_average, redistribution=self.redistribution,
                             seed=self.seed, stability_cap=self.stability_cap)

    def transport_config(self) -> LSchemeConfig:
        seed = None if self.seed is None else self.seed + 1
        return LSchemeConfig(l_param=self.l_c, eps_a=self.eps_a, eps_r=self.eps_r, r_max=self.r_max,
                             max_iters=self.max_iters, record_history=self.record_history,
                             redistribution=self.redistribution, seed=seed)

    def converged(self, correction: float, norm: float) -> bool:
        return correction <= self.eps_a + self.eps_r * norm


@dataclass
class CoupledProblem:
    """Flow and transport sharing one grid, one time horizon and one time grid."""

    flow: FlowProblem
    transport: TransportProblem

    def __post_init__(self):
        if self.flow.grid != self.transport.grid:
            raise ContractViolation("flow and transport must share the grid")
        if not math.isclose(self.flow.t_end, self.transport.t_end) or \
                not math.isclose(self.flow.t_start, self.transport.t_start):
            raise ContractViolation("flow and transport must share the time horizon")
        if self.transport.scheme is not TransportScheme.BGRW:
            raise ContractViolation("the coupled solver iterates the BGRW transport scheme")

    @property
    def grid(self) -> Grid:
        return self.flow.grid


@dataclass
class CoupledState:
    psi: np.ndarray
    c: np.ndarray
    t: float


@dataclass
class CoupledStepResult:
    psi: np.ndarray
    c: np.ndarray
    velocity: VelocityField
    iterations: int
    psi_history: List[float]
    c_history: List[float]
    converged: bool


@dataclass
class CoupledSolution:
    grid: Grid
    psi: np.ndarray
    theta: np.ndarray
    c: np.ndarray
    velocity: VelocityField
    times: List[float] = field(default_factory=list)
    dts: List[float] = field(default_factory=list)
    iterations: List[int] = field(default_factory=list)
    psi_histories: List[List[float]] = field(default_factory=list)
    c_histories: List[List[float]] = field(default_factory=list)
    converged: bool = True
    snapshots: Dict[float, Dict[str, np.ndarray]] = field(default_factory=dict)

    @property
    def total_iterations(self) -> int:
        return int(sum(self.iterations))

    def summary(self) -> dict:
        return {
            'converged': self.converged,
            'time_steps': len(self.iterations),
            'total_iterations': self.total_iterations,
            'max_iterations_per_step': max(self.iterations) if self.iterations else 0,
            'dt_min': min(self.dts) if self.dts else None,
            'dt_max': max(self.dts) if self.dts else None,
        }


class CoupledSolver:
    """Owns one flow solver and one transport solver for a coupled problem."""

    def __init__(self, problem: CoupledProblem, config: CoupledConfig):
        self.problem = problem
        self.config = config
        self.grid = problem.grid
        self.flow = FlowSolver(problem.flow, config.flow_config())
        self.transport = TransportSolver(problem.transport, config.transport_config())

    def velocity(self, psi: np.ndarray, c: np.ndarray, t: float) -> VelocityField:
        return self.flow.velocity(psi, c, self.config.velocity_mode, self.config.analytical_velocity, t)

    def choose_dt(self, psi: np.ndarray, c: np.ndarray, t: float) -> float:
        """Fixed flow dt if configured, else the smaller of the flow and transport caps."""
        policy = self.problem.flow.time_step
        if policy.dt is not None:
            return policy.dt
        dt = self.flow.choose_dt(psi, c)
        transport = self.problem.transport
        if transport.dt is not None:
            return min(dt, transport.dt)
        try:
            dt_c, _ = choose_transport_dt(self.velocity(psi, c, t), transport.diffusion, self.grid,
                                          TransportScheme.BGRW, self.config.l_c, 1,
                                          transport.peclet_policy)
        except Exception as exc:
            logger.debug("transport time step unavailable (%s); using the flow step", exc)
            return dt
        return min(dt, dt_c)

    def step(self, state: CoupledState, t_new: float, dt: float) -> CoupledStepResult:
        """Alternating iterations at time level ``t_new`` starting from ``state``."""
        self.flow.redistributor.reset()
        self.transport.redistributor.reset()
        config = self.config
        theta_prev = self.flow.theta(state.psi, state.c)
        psi_s = self.flow.boundary_values(state.psi.copy(), t_new)
        c_s = self.transport.bounds.apply_dirichlet(state.c.copy(), t_new)
        velocity = self.velocity(psi_s, c_s, t_new)
        psi_history: List[float] = []
        c_history: List[float] = []

        for s in range(1, config.max_iters + 1):
            psi_old, c_old = psi_s, c_s
            if config.transport_first:
                c_s = self._transport_sweep(psi_s, c_s, state, theta_prev, t_new, dt, velocity)
                psi_s = self._flow_sweep(psi_s, c_s, theta_prev, t_new, dt)
                velocity = self.velocity(psi_s, c_s, t_new)
            else:
                psi_s = self._flow_sweep(psi_s, c_s, theta_prev, t_new, dt)
                velocity = self.velocity(psi_s, c_s, t_new)
                c_s = self._transport_sweep(psi_s, c_s, state, theta_prev, t_new, dt, velocity)

            d_psi = l2_norm(psi_s - psi_old, self.grid)
            d_c = l2_norm(c_s - c_old, self.grid)
            if config.record_history:
                psi_history.append(d_psi)
                c_history.append(d_c)
            if config.converged(d_psi, l2_norm(psi_s, self.grid)) and \
                    config.converged(d_c, l2_norm(c_s, self.grid)):
                return CoupledStepResult(psi_s, c_s, velocity, s, psi_history, c_history, True)

        logger.warning("coupled step at t=%.6g exhausted %d sweeps (last corrections %.3g, %.3g)",
                       t_new, config.max_iters, psi_history[-1] if psi_history else math.nan,
                       c_history[-1] if c_history else math.nan)
        return CoupledStepResult(psi_s, c_s, velocity, config.max_iters, psi_history, c_history, False)

    def _flow_sweep(self, psi_s, c_s, theta_prev, t_new, dt):
        for _ in range(self.config.flow_batch):
            psi_s = self.flow.iterate(psi_s, theta_prev, t_new, dt, c_s)
        return psi_s

    def _transport_sweep(self, psi_s, c_s, state, theta_prev, t_new, dt, velocity):
        for _ in range(self.config.transport_batch):
            storage = StorageState(theta_s=self.flow.theta(psi_s, c_s), theta_prev=theta_prev,
                                   c_prev=state.c)
            c_s = self.transport.iterate(c_s, t_new, dt, velocity, storage)
        return c_s

    def _snapshot(self, psi, c, velocity: VelocityField) -> Dict[str, np.ndarray]:
        snap = {'psi': psi.copy(), 'theta': self.flow.theta(psi, c), 'c': c.copy(), 'q_z': velocity.v.copy()}
        if velocity.u is not None:
            snap['q_x'] = velocity.u.copy()
        return snap

    def solve(self) -> CoupledSolution:
        flow = self.problem.flow
        t = flow.t_start
        state = CoupledState(
            psi=self.flow.boundary_values(flow.initial.copy(), t),
            c=self.transport.bounds.apply_dirichlet(self.problem.transport.initial.copy(), t),
            t=t,
        )
        breakpoints = sorted(set(flow.time_step.breakpoints) | set(flow.output_times))
        pending = sorted(flow.output_times)
        velocity = self.velocity(state.psi, state.c, t)
        solution = CoupledSolution(grid=self.grid, psi=state.psi, theta=self.flow.theta(state.psi, state.c),
                                   c=state.c, velocity=velocity)
        if pending and pending[0] <= t:
            solution.snapshots[pending.pop(0)] = self._snapshot(state.psi, state.c, velocity)

        while t < flow.t_end - 1e-12 * max(1.0, abs(flow.t_end)):
            dt = self.choose_dt(state.psi, state.c, t)
            if flow.time_step.dt_max is not None:
                dt = min(dt, flow.time_step.dt_max)
            dt = align_to_breakpoint(t, dt, breakpoints, flow.t_end)
            result = self.step(state, t + dt, dt)
            t += dt
            state = CoupledState(result.psi, result.c, t)
            velocity = result.velocity
            solution.times.append(t)
            solution.dts.append(dt)
            solution.iterations.append(result.iterations)
            solution.psi_histories.append(result.psi_history)
            solution.c_histories.append(result.c_history)
            logger.debug("t=%.6g dt=%.4g sweeps=%d", t, dt, result.iterations)
            while pending and pending[0] <= t + 1e-9 * max(1.0, abs(t)):
                solution.snapshots[pending.pop(0)] = self._snapshot(state.psi, state.c, velocity)
            if not result.converged:
                solution.converged = False
                break

        solution.psi, solution.c, solution.velocity = state.psi, state.c, velocity
        solution.theta = self.flow.theta(state.psi, state.c)
        logger.info("coupled solve: %d steps, %d sweeps in total%s", len(solution.iterations),
                    solution.total_iterations, '' if solution.converged else ' (not converged)')
        return solution


def alternating_splitting_step(state: CoupledState, problem: CoupledProblem, config: CoupledConfig,
                               dt: float) -> CoupledStepResult:
    """Advance ``state`` by one time step of length ``dt``."""
    return CoupledSolver(problem, config).step(state, state.t + dt, dt)


def solve_coupled(problem: CoupledProblem, config: CoupledConfig) -> CoupledSolution:
    return CoupledSolver(problem, config).solve()


# ---------------------------------------------------------------------------
# Manufactured coupled problems
# ---------------------------------------------------------------------------

@dataclass
class ManufacturedCase:
    """
    Exact pressure and concentration with the sources they induce.

    All callables take (t, X, Z). ``velocity`` returns the exact Darcy flux
    components ((q_z,) in 1D, (q_x, q_z) in 2D). ``two_branch`` marks sources
    with separate unsaturated and saturated expressions.
    """

    soil: SoilModel
    psi: FieldFn
    c: FieldFn
    flow_source: FieldFn
    transport_source: FieldFn
    velocity: Callable
    diffusion: float = 1.0
    two_branch: bool = False


def manufactured_problem(case: ManufacturedCase, grid: Grid, t_end: float = 1.0,
                         dt: Optional[float] = None, output_times=()) -> CoupledProblem:
    """Coupled problem with initial and Dirichlet data taken from the exact fields."""
    X, Z = grid.mesh()
    faces = ('z_low', 'z_high') if grid.ndim == 1 else ('x_low', 'x_high', 'z_low', 'z_high')
    psi_bcs = [BoundaryCondition(face, 'dirichlet', case.psi) for face in faces]
    c_bcs = [BoundaryCondition(face, 'dirichlet', case.c) for face in faces]
    flow = FlowProblem(grid=grid, soil=case.soil, initial=case.psi(0.0, X, Z), t_end=t_end,
                       boundaries=psi_bcs, source=case.flow_source,
                       time_step=TimeStepPolicy(dt=dt), output_times=output_times)
    transport = TransportProblem(grid=grid, diffusion=(case.diffusion, case.diffusion),
                                 velocity=VelocityField(v=np.zeros(grid.shape),
                                                        u=None if grid.ndim == 1 else np.zeros(grid.shape)),
                                 initial=case.c(0.0, X, Z), t_end=t_end, boundaries=c_bcs,
                                 source=case.transport_source, scheme=TransportScheme.BGRW,
                                 peclet_policy=PecletPolicy.STRICT)
    return CoupledProblem(flow=flow, transport=transport)


def manufactured_errors(solution: CoupledSolution, case: ManufacturedCase, t: float) -> Dict[str, float]:
    """L2 distances of the final pressure and concentration to the exact fields."""
    X, Z = solution.grid.mesh()
    return {
        'psi': l2_norm(solution.psi - case.psi(t, X, Z), solution.grid),
        'c': l2_norm(solution.c - case.c(t, X, Z), solution.grid),
    }


def degenerate_coupled_1d(case: ManufacturedCase, dz: float, config: CoupledConfig,
                          t_end: float = 1.0, dt: Optional[float] = None) -> CoupledSolution:
    """
    Coupled 1D problem on [0, 1] whose pressure turns positive during the run.

    Raises:
        ContractViolation: If the case does not carry two-branch sources.
    """
    if not case.two_branch:
        raise ContractViolation("the degenerate problem needs sources with separate psi < 0 and psi >= 0 branches")
    grid = Grid.line(0.0, 1.0, dz)
    if config.velocity_mode is VelocityBoundaryMode.ANALYTICAL and config.analytical_velocity is None:
        config.analytical_velocity = case.velocity
    solution = solve_coupled(manufactured_problem(case, grid, t_end, dt), config)
    saturated = float(np.mean(solution.psi >= 0))
    logger.info("degenerate coupled run: %.0f%% of the column saturated at t=%g", 100 * saturated, t_end)
    return solution
