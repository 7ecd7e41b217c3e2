"""
Flow scenarios: 1D columns with the exponential and van Genuchten-Mualem
laws, the theta-form constant-flux column, the 2D manufactured pressure
solution and the 2D drainage trench.
"""

import logging
import math
from functools import partial
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from src.core.analysis import comp_order_q, comp_order_qq, decay_slope
from src.core.constitutive import (
    ExpModelParams, ExponentialSoil, FujitaParams, VanGenuchtenSoil, VgmParams,
    fujita_diffusivity, fujita_drift, psi_vgm,
)
from src.core.errors import ConfigError
from src.core.flow import (
    FlowProblem, FlowSolution, LSchemeConfig, ThetaFormProblem, TimeStepPolicy,
    solve_flow_1d, solve_flow_2d, solve_theta_form_1d,
)
from src.core.lattice import FACES, BoundaryCondition, Grid, l2_norm, relative_error
from src.data.fixtures import fixture_rows
from src.scenarios.common import (
    estimate, front_depth, reference_errors, refinement_spacings, relative_gap, study_rows,
)
from src.scenarios.mms import MmsLibrary
from src.scenarios.registry import RunContext, ScenarioResult, register_scenario
from src.utils.field_io import field_frame, history_frame, profile_frame, series_frame

logger = logging.getLogger(__name__)


def _step_series(solution: FlowSolution) -> pd.DataFrame:
    return series_frame({'t': solution.times, 'dt': solution.dts, 'iterations': solution.iterations})


# ---------------------------------------------------------------------------
# Scenario (1)/(2): sandy column with a gravel layer
# ---------------------------------------------------------------------------

SAND = dict(theta_res=0.06, theta_sat=0.36, k_sat=2.77e-6, alpha=10.0)


def ramped_flux(t: float, x, z, q0: float, q1: float, t1: float):
    """Inward flux rising linearly from q0 to q1 over [0, t1], then held."""
    weight = min(t / t1, 1.0) if t1 > 0 else 1.0
    return q0 + (q1 - q0) * weight


def _column_conditions(cfg: Dict[str, Any]) -> List[BoundaryCondition]:
    t1 = cfg['t_end'] * cfg['ramp_fraction']
    return [
        BoundaryCondition('z_low', 'dirichlet', cfg['psi_bottom']),
        BoundaryCondition('z_high', 'neumann',
                          partial(ramped_flux, q0=cfg['q0'], q1=cfg['q1'], t1=t1)),
    ]


def stationary_column(z: np.ndarray, psi_bottom: float, q0: float, alpha: float, k_sat) -> np.ndarray:
    """
    Stationary head of the exponential law under a constant inward top flux.

    Marches up from the bottom node: linear in the saturated part, and
    exp(alpha psi) relaxing towards q0 / k_sat above it. ``k_sat`` may vary
    per node; each interval takes the value of its lower node.
    """
    k_sat = np.broadcast_to(np.asarray(k_sat, dtype=float), z.shape)
    psi = np.empty(z.shape)
    psi[0] = psi_bottom
    for i in range(len(z) - 1):
        head, span = psi[i], z[i + 1] - z[i]
        ratio = q0 / k_sat[i]
        if head >= 0.0:
            slope = ratio - 1.0
            if slope >= 0.0 or head + slope * span >= 0.0:
                psi[i + 1] = head + slope * span
                continue
            span -= -head / slope
            head = 0.0
        u = ratio + (math.exp(alpha * head) - ratio) * math.exp(-alpha * span)
        psi[i + 1] = math.log(u) / alpha
    return psi


def _profile_errors(case: str, grid: Grid, stage: str, solution: FlowSolution) -> Optional[Dict[str, float]]:
    """Relative errors against digitized profiles of a reference solver, when bundled."""
    rows = fixture_rows(f'scenario1d_{case}_profiles', stage=stage)
    if rows is None or rows.empty:
        return None
    z = rows['z'].to_numpy(dtype=float)
    errors = {}
    for key, values in (('psi', solution.psi), ('theta', solution.theta), ('q', solution.velocity.v)):
        if key in rows:
            errors[key] = relative_error(np.interp(z, grid.z, values), rows[key].to_numpy(dtype=float))
    return errors


@register_scenario(
    'scenario1d',
    'Infiltration into a sandy column (homogeneous or with a gravel layer) with ramped top flux',
    'flow',
    desk=dict(case='homogeneous', dx=0.05, t_end=1e4, ramp_fraction=0.01, q0=2.77e-7, q1=2.5e-6,
              psi_bottom=0.5, layer_z=1.0, layer_factor=500.0,
              steady_initial='stationary', steady_l_param=1.0, steady_eps_r=1e-9, steady_max_iters=2000000,
              l_param=2.0, eps_r=1e-9, r_max=0.8, max_iters=20000, dt_max=None,
              output_times=[0.0, 100.0, 5000.0, 10000.0]),
    paper=dict(dx=0.01, steady_initial='hydrostatic', steady_max_iters=10000000),
    reference='Iteration counts (about 70 / 700 transient), Scenario 1/2 error table; '
              'reference profiles only if scenario1d_<case>_profiles.csv is present',
)
def run_scenario1d(cfg: Dict[str, Any], ctx: RunContext) -> ScenarioResult:
    case = cfg['case']
    if case not in ('homogeneous', 'heterogeneous'):
        raise ConfigError(f"case must be homogeneous or heterogeneous, got '{case}'")
    grid = Grid.line(0.0, 2.0, cfg['dx'])
    soil = ExponentialSoil(ExpModelParams(**SAND))
    k_scale = None
    if case == 'heterogeneous':
        k_scale = np.where(grid.z >= cfg['layer_z'] - 1e-12, cfg['layer_factor'], 1.0)
    conditions = _column_conditions(cfg)
    if cfg['steady_initial'] == 'stationary':
        k_nodes = SAND['k_sat'] * (1.0 if k_scale is None else k_scale)
        initial = stationary_column(grid.z, cfg['psi_bottom'], cfg['q0'], SAND['alpha'], k_nodes)
    elif cfg['steady_initial'] == 'hydrostatic':
        initial = cfg['psi_bottom'] - grid.z
    else:
        raise ConfigError(f"steady_initial must be stationary or hydrostatic, got '{cfg['steady_initial']}'")

    steady = FlowProblem(grid=grid, soil=soil, initial=initial, t_end=cfg['t_end'],
                         boundaries=conditions, k_scale=k_scale, steady=True)
    steady_solution = solve_flow_1d(steady, LSchemeConfig(
        l_param=cfg['steady_l_param'], eps_a=0.0, eps_r=cfg['steady_eps_r'], r_max=cfg['r_max'],
        max_iters=cfg['steady_max_iters'], seed=ctx.seed))
    if not steady_solution.converged:
        logger.warning("initial state not converged within %d iterations; continuing from the last iterate",
                       cfg['steady_max_iters'])

    transient = FlowProblem(grid=grid, soil=soil, initial=steady_solution.psi, t_end=cfg['t_end'],
                            boundaries=conditions, k_scale=k_scale,
                            time_step=TimeStepPolicy(dt_max=cfg['dt_max'],
                                                     breakpoints=[cfg['t_end'] * cfg['ramp_fraction']]),
                            output_times=cfg['output_times'])
    solution = solve_flow_1d(transient, LSchemeConfig(
        l_param=cfg['l_param'], eps_a=0.0, eps_r=cfg['eps_r'], r_max=cfg['r_max'],
        max_iters=cfg['max_iters'], seed=ctx.seed))

    steady_history = steady_solution.correction_history
    longest = max(solution.histories, key=len) if solution.histories else []
    orders = {
        'steady': {'Q': estimate(comp_order_q, steady_history),
                   'Q1': estimate(comp_order_qq, steady_history, 1.0),
                   'decay_slope': estimate(decay_slope, steady_history)},
        'transient': {'Q': estimate(comp_order_q, longest),
                      'Q1': estimate(comp_order_qq, longest, 1.0)},
    }
    published = fixture_rows('scenario1d_errors', case=case)
    results = {
        'case': case,
        'steady': {'iterations': steady_solution.total_iterations, 'converged': steady_solution.converged},
        'transient': solution.summary(),
        'orders': orders,
        'profile_errors': {'initial': _profile_errors(case, grid, 'initial', steady_solution),
                           'final': _profile_errors(case, grid, 'final', solution)},
        'published_errors': None if published is None else published.to_dict('records'),
    }
    return ScenarioResult(
        results=results,
        converged=steady_solution.converged and solution.converged,
        fields={'profiles': profile_frame(grid, solution.snapshots)},
        series={'steady_convergence': history_frame(steady_solution.histories),
                'transient_convergence': history_frame(solution.histories),
                'time_steps': _step_series(solution)},
    )


# ---------------------------------------------------------------------------
# Free drainage of a lysimeter
# ---------------------------------------------------------------------------

LYSIMETER_SOIL = dict(theta_res=0.0, theta_sat=0.331, k_sat=25.0, alpha=0.0143, n=1.5)


@register_scenario(
    'drainage-lysimeter',
    'Free drainage of an initially saturated 600 cm lysimeter (van Genuchten-Mualem)',
    'flow',
    desk=dict(dx=10.0, depth=600.0, psi_initial=0.0, t_end=100.0, l_param=0.5, eps_a=5e-6, eps_r=5e-6,
              r_max=0.5, max_iters=20000, dt_max=0.1, output_times=[0.0, 1.0, 10.0, 50.0, 100.0]),
    paper=dict(dt_max=0.0316),
    reference='Pressure profiles of a reference solver, only if lysimeter_profiles.csv is present',
)
def run_drainage_lysimeter(cfg: Dict[str, Any], ctx: RunContext) -> ScenarioResult:
    grid = Grid.line(0.0, cfg['depth'], cfg['dx'])
    soil = VanGenuchtenSoil(VgmParams(**LYSIMETER_SOIL))
    problem = FlowProblem(grid=grid, soil=soil, initial=np.full(grid.shape, cfg['psi_initial']),
                          t_end=cfg['t_end'], boundaries=[BoundaryCondition('z_low', 'free_drainage')],
                          time_step=TimeStepPolicy(dt_max=cfg['dt_max']), output_times=cfg['output_times'])
    solution = solve_flow_1d(problem, LSchemeConfig(
        l_param=cfg['l_param'], eps_a=cfg['eps_a'], eps_r=cfg['eps_r'], r_max=cfg['r_max'],
        max_iters=cfg['max_iters'], seed=ctx.seed))

    times = sorted(solution.snapshots)
    storage = [float(np.sum(solution.snapshots[t]['theta']) * grid.dz) for t in times]
    outflow = [float(-solution.snapshots[t]['q_z'][0]) for t in times]
    reference = fixture_rows('lysimeter_profiles')
    profile_errors = None
    if reference is not None:
        profile_errors = {}
        for t, rows in reference.groupby('t'):
            if float(t) in solution.snapshots:
                psi = np.interp(rows['z'].to_numpy(dtype=float), grid.z, solution.snapshots[float(t)]['psi'])
                profile_errors[float(t)] = relative_error(psi, rows['psi'].to_numpy(dtype=float))
    results = {
        **solution.summary(),
        'storage': dict(zip(times, storage)),
        'drained_volume': storage[0] - storage[-1] if storage else math.nan,
        'bottom_outflow': dict(zip(times, outflow)),
        'profile_errors': profile_errors,
    }
    return ScenarioResult(
        results=results, converged=solution.converged,
        fields={'profiles': profile_frame(grid, solution.snapshots)},
        series={'outflow': series_frame({'t': times, 'storage': storage, 'outflow': outflow}),
                'time_steps': _step_series(solution)},
    )


# ---------------------------------------------------------------------------
# Infiltration with a saturated surface
# ---------------------------------------------------------------------------

WARRICK_SOIL = dict(theta_res=0.1, theta_sat=0.45, k_sat=2.16, alpha=0.01, n=1.5)


@register_scenario(
    'warrick-infiltration',
    'Infiltration into a dry 100 cm column with ponded surface; wetting-front depths',
    'flow',
    desk=dict(dx=1.0, depth=100.0, theta_initial=0.17, t_end=2.0, l_param=0.2, eps_a=5e-6, eps_r=5e-6,
              r_max=0.5, max_iters=20000, dt_max=2e-3, output_times=[0.5, 1.0, 1.5, 2.0],
              theta_levels=[0.24, 0.31, 0.38]),
    paper=dict(dt_max=1e-3),
    reference='Relative depth errors of the published table; analytic depths only if warrick_depths.csv is present',
)
def run_warrick_infiltration(cfg: Dict[str, Any], ctx: RunContext) -> ScenarioResult:
    params = VgmParams(**WARRICK_SOIL)
    grid = Grid.line(0.0, cfg['depth'], cfg['dx'])
    psi_initial = float(psi_vgm(cfg['theta_initial'], params))
    problem = FlowProblem(
        grid=grid, soil=VanGenuchtenSoil(params), initial=np.full(grid.shape, psi_initial),
        t_end=cfg['t_end'],
        boundaries=[BoundaryCondition('z_high', 'dirichlet', 0.0), BoundaryCondition('z_low', 'free_drainage')],
        time_step=TimeStepPolicy(dt_max=cfg['dt_max']), output_times=cfg['output_times'])
    solution = solve_flow_1d(problem, LSchemeConfig(
        l_param=cfg['l_param'], eps_a=cfg['eps_a'], eps_r=cfg['eps_r'], r_max=cfg['r_max'],
        max_iters=cfg['max_iters'], seed=ctx.seed))

    depth = cfg['depth'] - grid.z[::-1]
    rows = []
    for t in sorted(solution.snapshots):
        theta = solution.snapshots[t]['theta'][::-1]
        for level in cfg['theta_levels']:
            rows.append({'t': t, 'theta': level, 'depth': front_depth(depth, theta, level)})
    depths = pd.DataFrame(rows, columns=['t', 'theta', 'depth'])

    analytic = fixture_rows('warrick_depths')
    if analytic is not None:
        merged = depths.merge(analytic.rename(columns={'depth': 'depth_ref'}), on=['t', 'theta'], how='left')
        depths['relative_error'] = (merged['depth'] - merged['depth_ref']) / merged['depth_ref']
    published = fixture_rows('warrick_errors')
    results = {
        **solution.summary(),
        'psi_initial': psi_initial,
        'front_depths': depths.to_dict('records'),
        'max_abs_relative_error': (float(depths['relative_error'].abs().max())
                                   if 'relative_error' in depths else None),
        'published_errors': None if published is None else published.to_dict('records'),
    }
    return ScenarioResult(
        results=results, converged=solution.converged,
        fields={'profiles': profile_frame(grid, solution.snapshots)},
        series={'front_depths': depths, 'time_steps': _step_series(solution)},
    )


# ---------------------------------------------------------------------------
# Constant-flux infiltration, theta form
# ---------------------------------------------------------------------------

@register_scenario(
    'sander-flux',
    'Constant-flux infiltration with Fujita diffusivity, theta-form biased GRW',
    'flow',
    desk=dict(dx=0.01, depth=5.0, d0=2.75862, v=0.85, k_sat=0.0, flux=0.2759, theta_res=0.06,
              theta_sat=0.35, t_end=0.3625, r_max=1.0),
    reference='Analytic and published GRW water contents (fixture sander_profile.csv)',
)
def run_sander_flux(cfg: Dict[str, Any], ctx: RunContext) -> ScenarioResult:
    grid = Grid.line(0.0, cfg['depth'], cfg['dx'], z_up=False)
    params = FujitaParams(d0=cfg['d0'], v=cfg['v'], k_sat=cfg['k_sat'])
    problem = ThetaFormProblem(grid=grid, diffusivity=partial(fujita_diffusivity, p=params),
                               drift=partial(fujita_drift, p=params), initial=np.zeros(grid.shape),
                               t_end=cfg['t_end'], influx=cfg['flux'], r_max=cfg['r_max'],
                               output_times=[cfg['t_end']])
    solution = solve_theta_form_1d(problem, seed=ctx.seed)
    theta = cfg['theta_res'] + (cfg['theta_sat'] - cfg['theta_res']) * solution.saturation

    results = {'steps': solution.steps, 'theta_surface': float(theta[0])}
    reference = fixture_rows('sander_profile')
    comparison = None
    if reference is not None:
        comparison = reference.copy()
        comparison['theta'] = np.interp(comparison['z'].to_numpy(dtype=float), grid.z, theta)
        comparison['relative_error'] = (comparison['theta'] - comparison['theta_analytic']) / comparison['theta_analytic']
        results['comparison'] = comparison.to_dict('records')
        results['surface_relative_error'] = float(comparison['relative_error'].iloc[0])
    return ScenarioResult(
        results=results,
        fields={'profile': field_frame(grid, {'saturation': solution.saturation, 'theta': theta})},
        series={'comparison': comparison} if comparison is not None else {},
    )


# ---------------------------------------------------------------------------
# 2D manufactured pressure solution
# ---------------------------------------------------------------------------

def _mms_flow_level(args) -> Dict[str, Any]:
    """One refinement level; module level so a process pool can run it."""
    dx, cfg, seed = args
    case = MmsLibrary.flow_2d()
    grid = Grid.rectangle((0.0, 1.0), (0.0, 1.0), dx)
    X, Z = grid.mesh()
    problem = FlowProblem(grid=grid, soil=case.soil, initial=case.psi(0.0, X, Z), t_end=cfg['t_end'],
                          boundaries=[BoundaryCondition(face, 'dirichlet', case.psi) for face in FACES],
                          source=case.flow_source, time_step=TimeStepPolicy(dt=cfg['dt'], dt_max=cfg['dt_max']))
    solution = solve_flow_2d(problem, LSchemeConfig(
        l_param=cfg['l_param'], eps_a=cfg['eps_a'], eps_r=cfg['eps_r'], r_max=cfg['r_max'],
        max_iters=cfg['max_iters'], seed=seed, record_history=False))
    error = l2_norm(solution.psi - case.psi(cfg['t_end'], X, Z), grid)
    logger.info("mms-flow-2d dx=%g: error %.3e after %d steps", dx, error, len(solution.dts))
    return {'dx': dx, 'error': error, **solution.summary()}


@register_scenario(
    'mms-flow-2d',
    'Manufactured 2D pressure solution; errors and EOC over halved grids',
    'flow',
    desk=dict(dx=0.1, levels=3, l_param=1200.0, eps_a=1e-6, eps_r=0.0, r_max=0.5, max_iters=50000,
              dt=None, dt_max=None, t_end=1.0),
    paper=dict(levels=4),
    reference='Published GRW and TPFA error rows (fixture mms_flow_2d.csv)',
)
def run_mms_flow_2d(cfg: Dict[str, Any], ctx: RunContext) -> ScenarioResult:
    spacings = refinement_spacings(cfg['dx'], cfg['levels'])
    levels = ctx.map(_mms_flow_level, [(dx, cfg, ctx.seed) for dx in spacings])
    errors = [level['error'] for level in levels]
    published = reference_errors('mms_flow_2d', method='GRW', l_param=cfg['l_param'])
    results = {
        'levels': levels,
        **({k: v for k, v in study_rows(spacings, errors).items() if k != 'rows'}
           if len(errors) > 1 else {'errors': errors, 'eoc': []}),
        'published_errors': published,
        'relative_to_published': relative_gap(errors, published),
    }
    return ScenarioResult(results=results, converged=all(level['converged'] for level in levels),
                          series={'refinement': pd.DataFrame(levels)})


# ---------------------------------------------------------------------------
# Recharge of a reservoir from a drainage trench
# ---------------------------------------------------------------------------

TRENCH_SOILS = {
    'loam': dict(soil=dict(theta_res=0.131, theta_sat=0.396, k_sat=4.96e-2, alpha=0.423, n=2.06),
                 drain_time=1 / 16, dt=1 / 48, t_end=3 / 16, l_param=0.5),
    'clay': dict(soil=dict(theta_res=0.0, theta_sat=0.446, k_sat=8.2e-4, alpha=0.152, n=1.17),
                 drain_time=1.0, dt=1 / 3, t_end=3.0, l_param=0.12),
}


def trench_head(t: float, x, z, drain_time: float):
    """Trench pressure rising from -2 to 0.2 over the drainage time, then held."""
    if t <= drain_time:
        return -2.0 + 2.2 * t / drain_time
    return 0.2


def on_trench(x, z):
    return x <= 1.0 + 1e-12


def below_water_table(x, z):
    return z <= 1.0 + 1e-12


def water_table(t: float, x, z):
    return 1.0 - z


def trench_setup(cfg: Dict[str, Any]) -> Dict[str, Any]:
    """Soil defaults merged with explicit overrides (None keeps the soil value)."""
    if cfg['soil'] not in TRENCH_SOILS:
        raise ConfigError(f"soil must be one of {sorted(TRENCH_SOILS)}, got '{cfg['soil']}'")
    setup = dict(TRENCH_SOILS[cfg['soil']])
    for key in ('drain_time', 'dt', 't_end', 'l_param'):
        if cfg.get(key) is not None:
            setup[key] = cfg[key]
    return setup


def trench_conditions(drain_time: float, value_top=None, value_side=None) -> List[BoundaryCondition]:
    return [
        BoundaryCondition('z_high', 'dirichlet',
                          partial(trench_head, drain_time=drain_time) if value_top is None else value_top,
                          segment=on_trench),
        BoundaryCondition('x_high', 'dirichlet', water_table if value_side is None else value_side,
                          segment=below_water_table),
    ]


@register_scenario(
    'trench-flow',
    'Recharge of a groundwater reservoir from a drainage trench (loam or clay)',
    'flow',
    desk=dict(soil='loam', dx=0.1, eps_a=5e-6, eps_r=5e-6, r_max=0.5, max_iters=50000,
              drain_time=None, dt=None, t_end=None, l_param=None),
    reference='Published GRW/TPFA relative differences (fixture trench_flow_tpfa.csv)',
)
def run_trench_flow(cfg: Dict[str, Any], ctx: RunContext) -> ScenarioResult:
    setup = trench_setup(cfg)
    grid = Grid.rectangle((0.0, 2.0), (0.0, 3.0), cfg['dx'])
    X, Z = grid.mesh()
    problem = FlowProblem(grid=grid, soil=VanGenuchtenSoil(VgmParams(**setup['soil'])), initial=1.0 - Z,
                          t_end=setup['t_end'], boundaries=trench_conditions(setup['drain_time']),
                          time_step=TimeStepPolicy(dt=setup['dt']), output_times=[setup['t_end']])
    solution = solve_flow_2d(problem, LSchemeConfig(
        l_param=setup['l_param'], eps_a=cfg['eps_a'], eps_r=cfg['eps_r'], r_max=cfg['r_max'],
        max_iters=cfg['max_iters'], seed=ctx.seed))

    published = fixture_rows('trench_flow_tpfa', soil=cfg['soil'])
    results = {
        'soil': cfg['soil'],
        **solution.summary(),
        'water_volume': float(np.sum(solution.theta) * grid.cell_volume),
        'saturated_fraction': float(np.mean(solution.psi >= 0)),
        'published_differences': None if published is None else published.to_dict('records'),
    }
    return ScenarioResult(
        results=results, converged=solution.converged,
        fields={'final': field_frame(grid, {'psi': solution.psi, 'theta': solution.theta,
                                            'q_x': solution.velocity.u, 'q_z': solution.velocity.v})},
        series={'time_steps': _step_series(solution)},
    )
