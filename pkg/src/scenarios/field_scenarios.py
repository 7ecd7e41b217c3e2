"""
Saturated aquifer scenarios on the regional and field scales.

All three solve the stationary head equation div(K grad h) + f = 0 on a
horizontal domain (no gravity), with Dirichlet heads on the left and right
and no-flow above and below. Random conductivities and recharge come from
Kraichnan log-normal fields.

Regional problems can be solved on a domain scaled by the correlation
length: lengths and heads are divided by ``scale`` and sources multiplied
by it, so the scaled head times ``scale`` reproduces the original solution.
"""

import logging
import math
from functools import partial
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from src.core.analysis import dispersion_from_moments, mc_stats
from src.core.constitutive import SaturatedSoil
from src.core.errors import ConfigError
from src.core.flow import FlowProblem, LSchemeConfig, darcy_velocity, solve_flow_2d
from src.core.lattice import BoundaryCondition, Grid, relative_error
from src.core.randfield import RandomFieldSpec, kraichnan_lognormal, kraichnan_velocity_firstorder
from src.core.transport import TransportProblem, TransportSolver
from src.data.fixtures import fixture_rows
from src.scenarios.registry import RunContext, ScenarioResult, register_scenario
from src.utils.field_io import field_frame, series_frame

logger = logging.getLogger(__name__)

SECONDS_PER_YEAR = 365.25 * 86400.0


def field_source(t: float, x, z, values: np.ndarray) -> np.ndarray:
    return values


def _regional_grid(cfg: Dict[str, Any], scale: float) -> Grid:
    return Grid.rectangle((0.0, cfg['lx'] / scale), (0.0, cfg['lz'] / scale), cfg['dx'] / scale)


def _head_conditions(h_left: float, h_right: float) -> List[BoundaryCondition]:
    return [BoundaryCondition('x_low', 'dirichlet', h_left),
            BoundaryCondition('x_high', 'dirichlet', h_right)]


def _log_spec(cfg: Dict[str, Any], mean: float, scale: float, seed: int) -> RandomFieldSpec:
    return RandomFieldSpec(mean=mean, variance=cfg['variance'], corr_len=cfg['corr_len'] / scale,
                           corr_model=cfg['corr_model'], n_modes=cfg['n_modes'], seed=seed)


def solve_head(grid: Grid, k_field: np.ndarray, h_left: float, h_right: float,
               source: Optional[np.ndarray], cfg: Dict[str, Any], seed: int):
    """
    Stationary head for a conductivity field and optional source values.

    The initial head is the plane between the Dirichlet values; particle
    numbers are measured in units of the larger boundary head, so scaled
    and unscaled problems move the same numbers of particles.
    """
    X, _ = grid.mesh()
    length = grid.x[-1] - grid.x[0]
    problem = FlowProblem(grid=grid, soil=SaturatedSoil(theta_value=1.0, k_sat=1.0),
                          initial=h_left + (h_right - h_left) * (X - grid.x[0]) / length, t_end=0.0,
                          boundaries=_head_conditions(h_left, h_right), gravity=False, k_scale=k_field,
                          source=None if source is None else partial(field_source, values=source),
                          steady=True)
    unit = max(abs(h_left), abs(h_right)) or 1.0
    return solve_flow_2d(problem, LSchemeConfig(
        l_param=1.0, eps_a=cfg['eps_a'], eps_r=cfg['eps_r'], r_max=cfg['r_max'],
        max_iters=int(cfg['max_iters']), seed=seed, unit_scale=unit, record_history=False))


def _check_convergence(name: str, converged: List[bool], cfg: Dict[str, Any]) -> bool:
    if all(converged):
        return True
    logger.warning("%s: %d of %d steady solves stopped at the iteration budget",
                   name, converged.count(False), len(converged))
    return not cfg['require_convergence']


# ---------------------------------------------------------------------------
# Regional flow with random conductivity
# ---------------------------------------------------------------------------

def regional_head(cfg: Dict[str, Any], scale: float, seed: int) -> Dict[str, Any]:
    """Head on the domain scaled by ``scale``, returned in original units."""
    grid = _regional_grid(cfg, scale)
    k_field = kraichnan_lognormal(_log_spec(cfg, cfg['mean_k'], scale, seed), grid)
    solution = solve_head(grid, k_field, cfg['h_left'] / scale, cfg['h_right'] / scale, None, cfg, seed)
    return {'grid': grid, 'k': k_field, 'head': scale * solution.psi,
            'iterations': solution.total_iterations, 'converged': solution.converged}


@register_scenario(
    'regional-flow',
    'Regional steady flow in a random log-normal conductivity field; scaled vs unscaled geometry',
    'field',
    desk=dict(lx=4900.0, lz=5000.0, h_left=0.0, h_right=5.0, mean_k=12e-4, variance=0.1, corr_len=500.0,
              corr_model='exponential', n_modes=100, dx=100.0, eps_a=0.0, eps_r=1e-10, r_max=0.5,
              max_iters=100000, scaling_check=True, require_convergence=False),
    paper=dict(max_iters=1000000, require_convergence=True),
    reference='Relative difference of the scaled and unscaled heads near machine precision',
)
def run_regional_flow(cfg: Dict[str, Any], ctx: RunContext) -> ScenarioResult:
    scaled = regional_head(cfg, cfg['corr_len'], ctx.seed)
    grid = scaled['grid']
    results = {
        'scaled_iterations': scaled['iterations'],
        'scaled_converged': scaled['converged'],
        'head_mean': float(np.mean(scaled['head'])),
        'head_max': float(np.max(scaled['head'])),
        'k_log_variance': float(np.var(np.log(scaled['k']))),
    }
    converged = [scaled['converged']]
    fields = {'head': field_frame(grid, {'head': scaled['head'], 'K': scaled['k']})}

    if cfg['scaling_check']:
        plain = regional_head(cfg, 1.0, ctx.seed)
        difference = scaled['head'] - plain['head']
        results['scaling_relative_error'] = relative_error(scaled['head'], plain['head'], plain['grid'])
        results['unscaled_iterations'] = plain['iterations']
        converged.append(plain['converged'])
        fields['scaling_difference'] = field_frame(plain['grid'], {'delta_head': difference})
        logger.info("regional-flow scaling check: relative error %.3e", results['scaling_relative_error'])

    return ScenarioResult(results=results, converged=_check_convergence('regional-flow', converged, cfg),
                          fields=fields)


# ---------------------------------------------------------------------------
# Random recharge
# ---------------------------------------------------------------------------

def sink_field(grid: Grid, rate: float, x: float, z: float, cell: float) -> np.ndarray:
    """Point withdrawal ``rate`` (per unit thickness) at the site nearest to (x, z)."""
    out = np.zeros(grid.shape)
    if rate == 0:
        return out
    i = int(np.argmin(np.abs(grid.x - x)))
    j = int(np.argmin(np.abs(grid.z - z)))
    out[i, j] = -rate / cell
    return out


def recharge_head(cfg: Dict[str, Any], scale: float, seed: int) -> Dict[str, Any]:
    """Head for one recharge realization on the domain scaled by ``scale``."""
    grid = _regional_grid(cfg, scale)
    mean_f = cfg['mean_recharge'] / SECONDS_PER_YEAR
    recharge = kraichnan_lognormal(_log_spec(cfg, mean_f, scale, seed), grid)
    sink_x = cfg['sink_x'] if cfg['sink_x'] is not None else 0.5 * cfg['lx']
    sink_z = cfg['sink_z'] if cfg['sink_z'] is not None else 0.5 * cfg['lz']
    cell = cfg['dx'] * cfg['dx']
    source = scale * (recharge + sink_field(grid, cfg['sink_rate'], sink_x / scale, sink_z / scale, cell))
    k_field = np.full(grid.shape, cfg['k'])
    solution = solve_head(grid, k_field, cfg['h_left'] / scale, cfg['h_right'] / scale, source, cfg, seed)
    return {'grid': grid, 'head': scale * solution.psi, 'recharge': recharge,
            'iterations': solution.total_iterations, 'converged': solution.converged}


def _recharge_realization(args) -> Dict[str, Any]:
    """One Monte Carlo realization; module level so a process pool can run it."""
    cfg, seed = args
    out = recharge_head(cfg, cfg['corr_len'], seed)
    logger.debug("recharge realization seed %d: %d iterations", seed, out['iterations'])
    return {'head': out['head'], 'iterations': out['iterations'], 'converged': out['converged']}


def _published_statistics() -> Dict[str, Dict[str, Any]]:
    rows = fixture_rows('recharge_mc')
    if rows is None:
        return {}
    out: Dict[str, Dict[str, Any]] = {}
    for row in rows.to_dict('records'):
        std = row.get('std')
        out.setdefault(row['method'], {})[row['statistic']] = {
            'value': float(row['value']),
            'std': None if std is None or pd.isna(std) else float(std),
        }
    return out


@register_scenario(
    'regional-recharge',
    'Monte Carlo head statistics for random log-normal recharge at constant conductivity',
    'field',
    desk=dict(lx=4900.0, lz=5000.0, h_left=0.0, h_right=5.0, k=12e-4, mean_recharge=0.362912,
              variance=1.0, corr_len=500.0, corr_model='exponential', n_modes=100, dx=100.0,
              n_realizations=20, eps_a=0.0, eps_r=1e-8, r_max=0.5, max_iters=100000,
              sink_rate=0.0, sink_x=None, sink_z=None, scaling_check=True, require_convergence=False),
    paper=dict(n_realizations=100, eps_r=1e-10, max_iters=1000000, require_convergence=True),
    reference='Published Monte Carlo mean and variance of the head (fixture recharge_mc.csv)',
)
def run_regional_recharge(cfg: Dict[str, Any], ctx: RunContext) -> ScenarioResult:
    if cfg['n_realizations'] < 2:
        raise ConfigError("regional-recharge needs at least two realizations")
    runs = ctx.map(_recharge_realization, [(cfg, ctx.seed + i) for i in range(cfg['n_realizations'])])
    stats = mc_stats([run['head'] for run in runs])
    grid = _regional_grid(cfg, cfg['corr_len'])
    converged = [run['converged'] for run in runs]

    published = _published_statistics()
    computed = stats.as_dict()
    results: Dict[str, Any] = {
        **computed,
        'realizations': len(runs),
        'mean_iterations': float(np.mean([run['iterations'] for run in runs])),
        'published': published,
    }
    grw = published.get('GRW', {})
    if grw:
        gaps = {}
        for key, statistic in (('mean_avg', 'mean'), ('variance_avg', 'variance'),
                               ('center_mean', 'center_mean'), ('center_variance', 'center_variance')):
            if statistic in grw:
                reference = grw[statistic]
                gaps[key] = (computed[key] - reference['value']) / reference['value']
                if reference['std']:
                    results[f'{key}_within_band'] = abs(computed[key] - reference['value']) <= 1.5 * reference['std']
        results['relative_to_published'] = gaps

    if cfg['scaling_check']:
        scaled = recharge_head(cfg, cfg['corr_len'], ctx.seed)
        plain = recharge_head(cfg, 1.0, ctx.seed)
        results['scaling_relative_error'] = relative_error(scaled['head'], plain['head'], plain['grid'])
        converged += [scaled['converged'], plain['converged']]

    return ScenarioResult(
        results=results, converged=_check_convergence('regional-recharge', converged, cfg),
        fields={'statistics': field_frame(grid, {'mean': stats.mean, 'variance': stats.variance})},
        series={'realizations': pd.DataFrame({'seed': [ctx.seed + i for i in range(len(runs))],
                                              'iterations': [run['iterations'] for run in runs],
                                              'converged': converged[:len(runs)]})},
    )


# ---------------------------------------------------------------------------
# Ensemble dispersion in a random aquifer
# ---------------------------------------------------------------------------

AQUIFER_VARIANTS = {
    'standard': dict(lx=20.0, lz=10.0, h_left=1.0, corr_len=1.0, dx=0.1, dt=0.5, t_end=10.0,
                     injection=(2.0, 5.0)),
    'rescaled': dict(lx=2.0, lz=1.0, h_left=0.1, corr_len=0.1, dx=0.01, dt=0.07, t_end=1.0,
                     injection=(0.2, 0.5)),
}


def aquifer_setup(cfg: Dict[str, Any]) -> Dict[str, Any]:
    """Variant geometry with explicit overrides; ``coarsening`` widens the default spacing."""
    if cfg['variant'] not in AQUIFER_VARIANTS:
        raise ConfigError(f"variant must be one of {sorted(AQUIFER_VARIANTS)}, got '{cfg['variant']}'")
    setup = dict(AQUIFER_VARIANTS[cfg['variant']])
    setup['dx'] = setup['dx'] * cfg['coarsening']
    for key in ('dx', 'dt', 't_end', 'injection'):
        if cfg.get(key) is not None:
            setup[key] = tuple(cfg[key]) if key == 'injection' else cfg[key]
    setup['mean_velocity'] = cfg['mean_k'] * setup['h_left'] / setup['lx']
    return setup


def point_injection(grid: Grid, point: Tuple[float, float]) -> np.ndarray:
    c = np.zeros(grid.shape)
    c[int(np.argmin(np.abs(grid.x - point[0]))), int(np.argmin(np.abs(grid.z - point[1])))] = 1.0 / grid.cell_volume
    return c


def plume_moments(grid: Grid, velocity, setup: Dict[str, Any], diffusion: float, seed: int) -> Dict[str, List[float]]:
    """UGRW plume from a point injection; moment series at every step."""
    steps = max(1, int(round(setup['t_end'] / setup['dt'])))
    problem = TransportProblem(grid=grid, diffusion=(diffusion, diffusion), velocity=velocity,
                               initial=point_injection(grid, setup['injection']), t_end=steps * setup['dt'],
                               scheme='ugrw', dt=setup['dt'])
    return TransportSolver(problem, LSchemeConfig(l_param=1.0, seed=seed)).solve().moment_table()


def _aquifer_realization(args) -> Dict[str, Any]:
    """Steady flow and plume for one conductivity realization."""
    cfg, setup, seed = args
    grid = Grid.rectangle((0.0, setup['lx']), (0.0, setup['lz']), setup['dx'])
    spec = RandomFieldSpec(mean=cfg['mean_k'], variance=cfg['variance'], corr_len=setup['corr_len'],
                           corr_model=cfg['corr_model'], n_modes=cfg['n_modes'], seed=seed)
    k_field = kraichnan_lognormal(spec, grid)
    flow = solve_head(grid, k_field, setup['h_left'], 0.0, None,
                      dict(cfg, eps_a=cfg['eps'], eps_r=cfg['eps']), seed)
    velocity = darcy_velocity(flow.psi, SaturatedSoil(1.0, 1.0), grid, 'forward_difference',
                              k_scale=k_field, gravity=False)
    return {'moments': plume_moments(grid, velocity, setup, cfg['diffusion'], seed),
            'mean_velocity': float(np.mean(velocity.u)),
            'iterations': flow.total_iterations, 'converged': flow.converged}


def _reference_realization(args) -> Dict[str, List[float]]:
    """Plume in a first-order Kraichnan velocity realization."""
    cfg, setup, seed = args
    grid = Grid.rectangle((0.0, setup['lx']), (0.0, setup['lz']), setup['dx'])
    spec = RandomFieldSpec(mean=cfg['mean_k'], variance=cfg['variance'], corr_len=setup['corr_len'],
                           corr_model=cfg['corr_model'], n_modes=cfg['reference_modes'], seed=seed)
    velocity = kraichnan_velocity_firstorder(spec, setup['mean_velocity'], grid)
    return plume_moments(grid, velocity, setup, cfg['diffusion'], seed)


def _ensemble(tables: List[Dict[str, List[float]]], diffusion: float) -> Dict[str, np.ndarray]:
    return dispersion_from_moments(tables, tables[0]['t'], local_d=diffusion)


@register_scenario(
    'aquifer-dispersion',
    'Ensemble dispersion of UGRW plumes in random aquifers against a first-order velocity ensemble',
    'field',
    desk=dict(variant='standard', mean_k=15.0, variance=0.1, corr_model='gaussian', n_modes=10,
              reference_modes=100, diffusion=0.01, eps=5e-7, r_max=0.5, max_iters=100000,
              n_realizations=10, n_reference=500, coarsening=2.0, dx=None, dt=None, t_end=None,
              injection=None, reference_band=0.25, require_convergence=True),
    paper=dict(n_realizations=100, n_reference=10000, coarsening=1.0),
    reference='First-order dispersion from Kraichnan velocity ensembles',
)
def run_aquifer_dispersion(cfg: Dict[str, Any], ctx: RunContext) -> ScenarioResult:
    setup = aquifer_setup(cfg)
    if cfg['n_realizations'] < 1 or cfg['n_reference'] < 1:
        raise ConfigError("aquifer-dispersion needs at least one realization per ensemble")
    runs = ctx.map(_aquifer_realization, [(cfg, setup, ctx.seed + i) for i in range(cfg['n_realizations'])])
    offset = ctx.seed + cfg['n_realizations']
    reference_tables = ctx.map(_reference_realization,
                               [(cfg, setup, offset + i) for i in range(cfg['n_reference'])])

    d = cfg['diffusion']
    ensemble = _ensemble([run['moments'] for run in runs], d)
    reference = _ensemble(reference_tables, d)

    late = ensemble['t'] >= 0.5 * ensemble['t'][-1]
    results: Dict[str, Any] = {
        'variant': cfg['variant'],
        'dx': setup['dx'],
        'dt': setup['dt'],
        'mean_velocity': float(np.mean([run['mean_velocity'] for run in runs])),
        'mean_iterations': float(np.mean([run['iterations'] for run in runs])),
        'realizations': len(runs),
        'reference_realizations': len(reference_tables),
    }
    for axis in ('x', 'z'):
        ours, theirs = ensemble[f'D_{axis}'], reference[f'D_{axis}']
        deviation = np.abs(ours[late] - theirs[late]) / np.maximum(np.abs(theirs[late]), math.ulp(1.0))
        results[f'D_{axis}_final'] = float(ours[-1])
        results[f'reference_D_{axis}_final'] = float(theirs[-1])
        results[f'max_relative_deviation_{axis}'] = float(np.max(deviation))
        results[f'within_band_{axis}'] = bool(np.all(deviation <= cfg['reference_band']))

    series = series_frame({
        't': ensemble['t'], 'D_x': ensemble['D_x'], 'D_z': ensemble['D_z'],
        'S_x': ensemble['S_x'], 'S_z': ensemble['S_z'],
        'reference_D_x': reference['D_x'], 'reference_D_z': reference['D_z'],
    })
    converged = _check_convergence('aquifer-dispersion', [run['converged'] for run in runs], cfg)
    return ScenarioResult(results=results, converged=converged, series={'dispersion': series})
