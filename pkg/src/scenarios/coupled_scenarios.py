"""
Coupled flow and surfactant transport scenarios: manufactured refinement
studies in 1D and 2D, the degenerate 1D column and the drainage trench with
a random saturated conductivity.
"""

import logging
from functools import partial
from typing import Any, Dict, List

import numpy as np
import pandas as pd

from src.core.constitutive import (
    SurfactantParams, SurfactantSoil, VanGenuchtenSoil, VgmParams, reaction_rate,
)
from src.core.coupling import (
    CoupledConfig, CoupledProblem, degenerate_coupled_1d, manufactured_errors, manufactured_problem,
    solve_coupled,
)
from src.core.errors import ConfigError
from src.core.flow import FlowProblem, TimeStepPolicy, VelocityBoundaryMode, VelocityField
from src.core.lattice import BoundaryCondition, Grid
from src.core.randfield import RandomFieldSpec, kraichnan_lognormal
from src.core.transport import PecletPolicy, TransportProblem, TransportScheme
from src.data.fixtures import fixture_rows
from src.scenarios.common import refinement_spacings, relative_gap, study_rows
from src.scenarios.flow_scenarios import (
    TRENCH_SOILS, below_water_table, on_trench, trench_conditions, trench_head,
)
from src.scenarios.mms import MmsLibrary
from src.scenarios.registry import RunContext, ScenarioResult, register_scenario
from src.utils.field_io import field_frame, profile_frame, series_frame

logger = logging.getLogger(__name__)

MODE_LABELS = {
    VelocityBoundaryMode.ANALYTICAL: 'analytical',
    VelocityBoundaryMode.FORWARD_DIFFERENCE: 'approximate',
    VelocityBoundaryMode.EXTEND_INTERIOR: 'extend',
}


def velocity_modes(value: str) -> List[VelocityBoundaryMode]:
    if value == 'all':
        return list(MODE_LABELS)
    return [VelocityBoundaryMode.parse(value)]


# ---------------------------------------------------------------------------
# Manufactured refinement studies
# ---------------------------------------------------------------------------

def _coupled_level(args) -> Dict[str, Any]:
    """One (case, boundary velocity, spacing) run; module level for the process pool."""
    case_name, mode, dx, cfg, seed = args
    case = MmsLibrary.get(case_name)
    config = CoupledConfig(l_p=cfg['l_p'], l_c=cfg['l_c'], eps_a=cfg['eps_a'], eps_r=cfg['eps_r'],
                           max_iters=cfg['max_iters'], r_max=cfg['r_max'], velocity_mode=mode,
                           analytical_velocity=case.velocity, seed=seed, record_history=False)
    if case.two_branch:
        solution = degenerate_coupled_1d(case, dx, config, cfg['t_end'], cfg['dt'])
    else:
        grid = (Grid.line(0.0, 1.0, dx) if case_name.endswith('1d')
                else Grid.rectangle((0.0, 1.0), (0.0, 1.0), dx))
        solution = solve_coupled(manufactured_problem(case, grid, cfg['t_end'], cfg['dt']), config)
    errors = manufactured_errors(solution, case, cfg['t_end'])
    logger.info("%s (%s) dx=%g: errors psi %.3e, c %.3e", case_name, MODE_LABELS[mode], dx,
                errors['psi'], errors['c'])
    return {'velocity_mode': MODE_LABELS[mode], 'dx': dx, 'error_psi': errors['psi'],
            'error_c': errors['c'], **solution.summary()}


def _manufactured_study(case_name: str, fixture: str, cfg: Dict[str, Any], ctx: RunContext) -> ScenarioResult:
    spacings = refinement_spacings(cfg['dx'], cfg['levels'])
    modes = velocity_modes(cfg['velocity_mode'])
    jobs = [(case_name, mode, dx, cfg, ctx.seed) for mode in modes for dx in spacings]
    levels = ctx.map(_coupled_level, jobs)

    studies = {}
    for mode in modes:
        label = MODE_LABELS[mode]
        rows = [level for level in levels if level['velocity_mode'] == label]
        study = {}
        for field_name in ('psi', 'c'):
            errors = [row[f'error_{field_name}'] for row in rows]
            summary = study_rows(spacings, errors) if len(errors) > 1 else {'errors': errors, 'eoc': []}
            published = fixture_rows(fixture, method='GRW', field=field_name, velocity_mode=label)
            reference = None if published is None or published.empty else \
                published.sort_values('level')['error'].astype(float).tolist()
            study[field_name] = {'errors': summary['errors'], 'eoc': summary['eoc'],
                                 'published_errors': reference,
                                 'relative_to_published': relative_gap(summary['errors'], reference)}
        studies[label] = study
    return ScenarioResult(results={'case': case_name, 'studies': studies, 'levels': levels},
                          converged=all(level['converged'] for level in levels),
                          series={'refinement': pd.DataFrame(levels)})


_MMS_COMMON = dict(dx=0.1, eps_a=1e-6, eps_r=0.0, r_max=0.5, max_iters=50000, dt=None, t_end=1.0)


@register_scenario(
    'mms-coupled-2d',
    'Manufactured coupled pressure and concentration on the unit square; errors and EOC',
    'coupled',
    desk=dict(_MMS_COMMON, levels=3, l_p=100.0, l_c=100.0, velocity_mode='approximate'),
    paper=dict(levels=4, velocity_mode='all'),
    reference='Published GRW error rows per boundary velocity (fixture mms_coupled_2d.csv)',
)
def run_mms_coupled_2d(cfg: Dict[str, Any], ctx: RunContext) -> ScenarioResult:
    return _manufactured_study('coupled-2d', 'mms_coupled_2d', cfg, ctx)


@register_scenario(
    'mms-coupled-1d',
    'Manufactured coupled pressure and concentration on the unit interval',
    'coupled',
    desk=dict(_MMS_COMMON, levels=4, l_p=50.0, l_c=50.0, velocity_mode='all'),
    reference='Published GRW error rows per boundary velocity (fixture mms_coupled_1d.csv)',
)
def run_mms_coupled_1d(cfg: Dict[str, Any], ctx: RunContext) -> ScenarioResult:
    return _manufactured_study('coupled-1d', 'mms_coupled_1d', cfg, ctx)


@register_scenario(
    'mms-degenerate-1d',
    'Manufactured coupled solution whose pressure turns positive (unsaturated to saturated)',
    'coupled',
    desk=dict(_MMS_COMMON, levels=4, l_p=100.0, l_c=100.0, velocity_mode='all'),
    reference='Published GRW error rows per boundary velocity (fixture mms_degenerate_1d.csv)',
)
def run_mms_degenerate_1d(cfg: Dict[str, Any], ctx: RunContext) -> ScenarioResult:
    return _manufactured_study('degenerate-1d', 'mms_degenerate_1d', cfg, ctx)


# ---------------------------------------------------------------------------
# Drainage trench with surfactant transport
# ---------------------------------------------------------------------------

COUPLED_TRENCH = {'loam': dict(dt=1 / 48, l_param=20.0), 'clay': dict(dt=1 / 3, l_param=100.0)}


def _trench_setup(cfg: Dict[str, Any]) -> Dict[str, Any]:
    if cfg['soil'] not in COUPLED_TRENCH:
        raise ConfigError(f"soil must be one of {sorted(COUPLED_TRENCH)}, got '{cfg['soil']}'")
    setup = {'soil': TRENCH_SOILS[cfg['soil']]['soil'], **COUPLED_TRENCH[cfg['soil']]}
    for key in ('dt', 'l_param'):
        if cfg.get(key) is not None:
            setup[key] = cfg[key]
    return setup


def _surfactant_soil(params: Dict[str, float], cfg: Dict[str, Any]) -> SurfactantSoil:
    return SurfactantSoil(VanGenuchtenSoil(VgmParams(**params)),
                          SurfactantParams(a_gamma=cfg['a_gamma'], b_gamma=cfg['b_gamma']))


def _coupled_config(setup: Dict[str, Any], cfg: Dict[str, Any], seed: int) -> CoupledConfig:
    return CoupledConfig(l_p=setup['l_param'], l_c=setup['l_param'], eps_a=cfg['eps_a'], eps_r=cfg['eps_r'],
                         max_iters=cfg['max_iters'], r_max=cfg['r_max'],
                         velocity_mode=cfg['velocity_mode'], seed=seed)


def mean_peclet(velocity: VelocityField, theta: np.ndarray, diffusion: float, h: float) -> float:
    """Mean grid Peclet number |q| h / (theta D) over the lattice."""
    speed = np.abs(velocity.v) if velocity.u is None else np.hypot(velocity.u, velocity.v)
    return float(np.mean(speed * h / (np.maximum(theta, 1e-12) * diffusion)))


_TRENCH_COMMON = dict(soil='loam', t_end=3.0, drain_time=1.0, diffusion=1e-3, a_gamma=0.44, b_gamma=0.0046,
                      eps_a=5e-6, eps_r=5e-6, r_max=0.5, max_iters=20000, velocity_mode='approximate',
                      peclet_policy='augment', dt=None, l_param=None)


@register_scenario(
    'trench-coupled',
    'Trench recharge with surfactant transport, reaction and a random saturated conductivity',
    'coupled',
    desk=dict(_TRENCH_COMMON, dx=0.1, variance=0.5, corr_len=[0.1, 0.01], corr_model='gaussian', n_modes=100),
    paper=dict(dx=0.05),
    reference='Published GRW/TPFA relative differences (fixture trench_coupled_tpfa.csv)',
)
def run_trench_coupled(cfg: Dict[str, Any], ctx: RunContext) -> ScenarioResult:
    setup = _trench_setup(cfg)
    grid = Grid.rectangle((0.0, 2.0), (0.0, 3.0), cfg['dx'])
    X, Z = grid.mesh()
    k_scale = kraichnan_lognormal(RandomFieldSpec(mean=1.0, variance=cfg['variance'],
                                                  corr_len=tuple(cfg['corr_len']), corr_model=cfg['corr_model'],
                                                  n_modes=cfg['n_modes'], seed=ctx.seed), grid)
    flow = FlowProblem(grid=grid, soil=_surfactant_soil(setup['soil'], cfg), initial=1.0 - Z,
                       t_end=cfg['t_end'], boundaries=trench_conditions(cfg['drain_time']), k_scale=k_scale,
                       time_step=TimeStepPolicy(dt=setup['dt']), output_times=[cfg['t_end']])
    transport = TransportProblem(
        grid=grid, diffusion=cfg['diffusion'], velocity=VelocityField.uniform(grid), initial=Z / 1.2,
        t_end=cfg['t_end'],
        boundaries=[BoundaryCondition('z_high', 'dirichlet', 1.0, segment=on_trench),
                    BoundaryCondition('x_high', 'dirichlet', 0.0, segment=below_water_table)],
        reaction=reaction_rate, scheme=TransportScheme.BGRW, peclet_policy=PecletPolicy.parse(cfg['peclet_policy']))
    solution = solve_coupled(CoupledProblem(flow, transport), _coupled_config(setup, cfg, ctx.seed))

    published = fixture_rows('trench_coupled_tpfa', soil=cfg['soil'])
    results = {
        'soil': cfg['soil'],
        **solution.summary(),
        'k_scale_mean': float(k_scale.mean()),
        'mean_peclet': mean_peclet(solution.velocity, solution.theta, cfg['diffusion'], cfg['dx']),
        'solute_mass': float(np.sum(solution.theta * solution.c) * grid.cell_volume),
        'published_differences': None if published is None else published.to_dict('records'),
    }
    return ScenarioResult(
        results=results, converged=solution.converged,
        fields={'final': field_frame(grid, {'psi': solution.psi, 'theta': solution.theta, 'c': solution.c,
                                            'q_x': solution.velocity.u, 'q_z': solution.velocity.v,
                                            'k_scale': k_scale})},
        series={'time_steps': series_frame({'t': solution.times, 'dt': solution.dts,
                                            'sweeps': solution.iterations})},
    )


@register_scenario(
    'trench-coupled-1d',
    'Vertical drainage column with surfactant transport crossing into saturation',
    'coupled',
    desk=dict(_TRENCH_COMMON, dx=0.01, output_times=[1.0, 2.0, 3.0]),
    reference='Profiles only; no published numbers',
)
def run_trench_coupled_1d(cfg: Dict[str, Any], ctx: RunContext) -> ScenarioResult:
    setup = _trench_setup(cfg)
    grid = Grid.line(0.0, 3.0, cfg['dx'])
    flow = FlowProblem(
        grid=grid, soil=_surfactant_soil(setup['soil'], cfg), initial=1.0 - grid.z, t_end=cfg['t_end'],
        boundaries=[BoundaryCondition('z_low', 'dirichlet', 1.0),
                    BoundaryCondition('z_high', 'dirichlet', partial(trench_head, drain_time=cfg['drain_time']))],
        time_step=TimeStepPolicy(dt=setup['dt']), output_times=cfg['output_times'])
    transport = TransportProblem(
        grid=grid, diffusion=cfg['diffusion'], velocity=VelocityField.uniform(grid), initial=grid.z / 1.2,
        t_end=cfg['t_end'],
        boundaries=[BoundaryCondition('z_high', 'dirichlet', 1.0), BoundaryCondition('z_low', 'dirichlet', 0.0)],
        reaction=reaction_rate, scheme=TransportScheme.BGRW, peclet_policy=PecletPolicy.parse(cfg['peclet_policy']))
    solution = solve_coupled(CoupledProblem(flow, transport), _coupled_config(setup, cfg, ctx.seed))

    results = {
        'soil': cfg['soil'],
        **solution.summary(),
        'saturated_fraction': float(np.mean(solution.psi >= 0)),
        'mean_peclet': mean_peclet(solution.velocity, solution.theta, cfg['diffusion'], cfg['dx']),
    }
    return ScenarioResult(
        results=results, converged=solution.converged,
        fields={'profiles': profile_frame(grid, solution.snapshots, keys=('psi', 'theta', 'c', 'q_z'))},
        series={'time_steps': series_frame({'t': solution.times, 'dt': solution.dts,
                                            'sweeps': solution.iterations})},
    )
