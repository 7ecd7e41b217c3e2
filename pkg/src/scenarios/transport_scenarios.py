"""
Decoupled transport scenarios: numerical diffusion of the biased and
unbiased walks for a Gaussian pulse in the steady benchmark velocity.
"""

import logging
import math
from typing import Any, Dict, List

import numpy as np
import pandas as pd

from src.core.analysis import moment_diffusion
from src.core.constitutive import VanGenuchtenSoil, VgmParams
from src.core.errors import ConfigError
from src.core.flow import FlowProblem, LSchemeConfig, VelocityField, solve_flow_2d
from src.core.lattice import BoundaryCondition, Grid
from src.core.transport import (
    BgrwParams, TransportProblem, TransportScheme, TransportSolver, choose_transport_dt,
)
from src.data.fixtures import fixture_rows
from src.scenarios.flow_scenarios import TRENCH_SOILS
from src.scenarios.registry import RunContext, ScenarioResult, register_scenario
from src.utils.field_io import field_frame, series_frame

logger = logging.getLogger(__name__)

PUBLISHED_METHOD = {'bgrw': 'BGRW', 'ugrw': 'GRW'}


def steady_column_velocity(dx: float, eps_r: float = 1e-12, max_iters: int = 10000, seed: int = 0) -> float:
    """
    Vertical Darcy velocity of the saturated loam column psi(z=0) = 1, psi(z=3) = 0.

    The steady solve starts from the linear head; the mean of the resulting
    flux field is returned.
    """
    grid = Grid.rectangle((0.0, 2.0), (0.0, 3.0), dx)
    _, Z = grid.mesh()
    soil = VanGenuchtenSoil(VgmParams(**TRENCH_SOILS['loam']['soil']))
    problem = FlowProblem(grid=grid, soil=soil, initial=1.0 - Z / 3.0, t_end=0.0, steady=True,
                          boundaries=[BoundaryCondition('z_low', 'dirichlet', 1.0),
                                      BoundaryCondition('z_high', 'dirichlet', 0.0)])
    solution = solve_flow_2d(problem, LSchemeConfig(l_param=1.0, eps_r=eps_r, max_iters=max_iters,
                                                    seed=seed, record_history=False))
    if not solution.converged:
        logger.warning("steady column did not converge; using the last iterate")
    return float(np.mean(solution.velocity.v))


def gaussian_pulse(grid: Grid, diffusion: float, t: float, center) -> np.ndarray:
    X, Z = grid.mesh()
    spread = 4.0 * diffusion * t
    return np.exp(-((X - center[0]) ** 2 + (Z - center[1]) ** 2) / spread) / (math.pi * spread)


def effective_diffusion(params, grid: Grid, dt: float) -> Dict[str, float]:
    """Diffusion coefficients implied by the jump variance of one step."""
    out = {}
    for axis, h, vertical in grid.axes():
        name = 'z' if vertical else 'x'
        if isinstance(params, BgrwParams):
            variance = (params.r[axis] - params.drift[axis] ** 2) * h * h
        else:
            variance = params.r[axis] * (params.d * h) ** 2
        out[name] = float(np.mean(variance)) / (2.0 * dt)
    return out


def _numdiff_level(args) -> Dict[str, Any]:
    """One (scheme, dx) run; module level so a process pool can run it."""
    scheme, dx, velocity_z, cfg, seed = args
    grid = Grid.rectangle((0.0, 2.0), (0.0, 3.0), dx)
    d = cfg['diffusion']
    t0, t_end = cfg['t_start'], cfg['t_end']
    velocity = VelocityField.uniform(grid, u=0.0, v=velocity_z)
    options = dict(scheme=scheme, resolution=cfg['resolution'], policy=cfg['peclet_policy'],
                   compensate=cfg['compensate_drift'])

    dt0, _ = choose_transport_dt(velocity, (d, d), grid, **options)
    steps = max(1, math.ceil((t_end - t0) / dt0 - 1e-9))
    dt = (t_end - t0) / steps
    if cfg['max_steps'] is not None:
        steps = min(steps, int(cfg['max_steps']))
    _, params = choose_transport_dt(velocity, (d, d), grid, dt=dt, **options)

    center = (cfg['center'][0], cfg['center'][1] + velocity_z * t0)
    problem = TransportProblem(grid=grid, diffusion=(d, d), velocity=velocity,
                               initial=gaussian_pulse(grid, d, t0, center), t_end=t0 + steps * dt,
                               scheme=scheme, dt=dt, resolution=cfg['resolution'],
                               peclet_policy=cfg['peclet_policy'], compensate_drift=cfg['compensate_drift'],
                               output_times=[t0 + k * dt for k in range(steps + 1)], t_start=t0)
    solution = TransportSolver(problem, LSchemeConfig(l_param=1.0, seed=seed)).solve()
    estimate = moment_diffusion(solution.snapshots, grid, d)
    implied = effective_diffusion(params, grid, dt)

    row = {
        'scheme': scheme, 'dx': dx, 'steps': steps, 'dt': dt,
        'peclet': abs(velocity_z) * dx / d,
        **estimate.as_dict(),
        'expected_eps_D_x': abs(implied['x'] - d) / d,
        'expected_eps_D_z': abs(implied['z'] - d) / d,
        'mass_final': solution.moments[-1]['mass'],
    }
    logger.info("numdiff %s dx=%g: %d steps, eps_Dx=%.3e eps_Dz=%.3e", scheme, dx, steps,
                row['eps_D_x'], row['eps_D_z'])
    return {'row': row, 'moments': solution.moment_table(), 'c': solution.c}


def _schemes(value: str) -> List[str]:
    if value == 'all':
        return [s.value for s in TransportScheme]
    return [TransportScheme.parse(value).value]


def _published(row: Dict[str, Any]) -> Dict[str, Any]:
    rows = fixture_rows('numdiff', method=PUBLISHED_METHOD[row['scheme']])
    if rows is None:
        return {}
    match = rows[np.isclose(rows['dx'].astype(float), row['dx'])]
    if match.empty:
        return {}
    first = match.iloc[0]
    return {'published_steps': int(first['steps']), 'published_eps_D_x': float(first['eps_dx']),
            'published_eps_D_z': float(first['eps_dz'])}


@register_scenario(
    'numdiff',
    'Numerical diffusion of BGRW and UGRW for a Gaussian pulse in the steady benchmark velocity',
    'transport',
    desk=dict(scheme='all', dx=None, dx_levels=[0.1, 0.05, 0.01], diffusion=1e-3, center=[1.0, 2.1],
              t_start=1.0, t_end=3.0, peclet_policy='augment', compensate_drift=True, resolution=1,
              max_steps=None),
    paper=dict(dx_levels=[0.1, 0.05, 0.01, 0.005]),
    reference='Published numerical diffusion table (fixture numdiff.csv)',
)
def run_numdiff(cfg: Dict[str, Any], ctx: RunContext) -> ScenarioResult:
    spacings = [cfg['dx']] if cfg['dx'] is not None else list(cfg['dx_levels'])
    if not spacings or min(spacings) <= 0:
        raise ConfigError(f"numdiff needs positive grid spacings, got {spacings}")
    if cfg['t_end'] <= cfg['t_start']:
        raise ConfigError("t_end must exceed t_start")
    velocities = {dx: steady_column_velocity(dx, seed=ctx.seed) for dx in spacings}
    jobs = [(scheme, dx, velocities[dx], cfg, ctx.seed) for scheme in _schemes(cfg['scheme']) for dx in spacings]
    runs = ctx.map(_numdiff_level, jobs)

    rows = [{**run['row'], **_published(run['row'])} for run in runs]
    series = {'numdiff': pd.DataFrame(rows)}
    fields = {}
    for (scheme, dx, *_), run in zip(jobs, runs):
        series[f'moments_{scheme}_dx{dx:g}'] = series_frame(run['moments'])
        if dx == min(spacings):
            fields[f'final_{scheme}'] = field_frame(Grid.rectangle((0.0, 2.0), (0.0, 3.0), dx), {'c': run['c']})
    results = {
        'velocity': {f'{dx:g}': v for dx, v in velocities.items()},
        'levels': rows,
        'max_eps_D': max(max(r['eps_D_x'], r['eps_D_z']) for r in rows),
        'all_valid': all(r['valid'] for r in rows),
    }
    return ScenarioResult(results=results, fields=fields, series=series)
