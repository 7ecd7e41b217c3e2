"""
Scenario registry for GrwSim.

Scenario modules register their entries on import with
``@register_scenario``. A scenario couples a run function with the default
configuration of the ``desk`` and ``paper`` presets and a short note on the
reference data it is checked against.
"""

import logging
import time
from dataclasses import dataclass, field
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional

import pandas as pd

from src.core.errors import ConfigError

logger = logging.getLogger(__name__)

PRESETS = ('desk', 'paper')
SCENARIO_KINDS = ('flow', 'coupled', 'transport', 'field')

_REGISTRY: Dict[str, 'Scenario'] = {}


@dataclass
class RunContext:
    """Run-wide settings shared by every worker of one scenario run."""

    preset: str = 'desk'
    seed: int = 0
    jobs: int = 1

    def map(self, fn: Callable, items: Iterable) -> List[Any]:
        """
        Apply ``fn`` to every item, in a process pool when ``jobs > 1``.

        Results come back in submission order, so summaries do not depend
        on the worker count. ``fn`` must be a module-level function.
        """
        items = list(items)
        if self.jobs > 1 and len(items) > 1:
            with Pool(min(self.jobs, len(items))) as pool:
                return pool.map(fn, items)
        return [fn(item) for item in items]


@dataclass
class ScenarioResult:
    """
    Outcome of one scenario run.

    ``results`` must be JSON-serializable after numpy scalars are converted;
    ``fields`` hold lattice dumps and ``series`` time or iteration series.
    """

    results: Dict[str, Any]
    converged: bool = True
    fields: Dict[str, pd.DataFrame] = field(default_factory=dict)
    series: Dict[str, pd.DataFrame] = field(default_factory=dict)


@dataclass
class Scenario:
    name: str
    summary: str
    kind: str
    run: Callable[[Dict[str, Any], RunContext], ScenarioResult]
    presets: Dict[str, Dict[str, Any]]
    reference: str = ''

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ConfigError(f"Unknown scenario kind '{self.kind}'")
        missing = [p for p in PRESETS if p not in self.presets]
        if missing:
            raise ConfigError(f"Scenario '{self.name}' lacks presets {missing}")

    def defaults(self, preset: str = 'desk') -> Dict[str, Any]:
        if preset not in PRESETS:
            raise ConfigError(f"Unknown preset '{preset}', expected one of {list(PRESETS)}")
        return dict(self.presets[preset])

    def keys(self) -> List[str]:
        return sorted(set(self.presets['desk']) | set(self.presets['paper']))

    def describe(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'kind': self.kind,
            'summary': self.summary,
            'reference': self.reference,
            'desk': self.presets['desk'],
            'paper': self.presets['paper'],
        }


def register_scenario(name: str, summary: str, kind: str, desk: Dict[str, Any],
                      paper: Optional[Dict[str, Any]] = None, reference: str = ''):
    """
    Decorator registering a scenario run function.

    Args:
        name: Unique scenario identifier used on the command line.
        summary: One-line description.
        kind: One of flow, coupled, transport, field.
        desk: Defaults of the reduced desk preset.
        paper: Overrides of the desk defaults for the full-size preset.
        reference: What the results are compared against.

    Raises:
        ConfigError: If the name is already taken.
    """
    def decorator(fn):
        if name in _REGISTRY:
            raise ConfigError(f"Scenario '{name}' registered twice")
        presets = {'desk': dict(desk), 'paper': {**desk, **(paper or {})}}
        _REGISTRY[name] = Scenario(name=name, summary=summary, kind=kind, run=fn,
                                   presets=presets, reference=reference)
        return fn
    return decorator


def get_scenario(name: str) -> Scenario:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise ConfigError(
            f"Unknown scenario '{name}'; run 'grwsim list' to see the registered scenarios"
        ) from None


def list_scenarios() -> List[Scenario]:
    return [_REGISTRY[name] for name in sorted(_REGISTRY)]


def run_scenario(name: str, preset: str = 'desk', config_file: Optional[str] = None,
                 flags: Optional[Dict[str, Any]] = None, set_values: Optional[List[str]] = None,
                 out_dir: Optional[str] = None) -> Dict[str, Any]:
    """
    Resolve the configuration, run a scenario and write its run directory.

    Args:
        name: Registered scenario identifier.
        preset: ``desk`` or ``paper``.
        config_file: Optional YAML file with overrides.
        flags: Values of dedicated CLI flags (None entries are ignored).
        set_values: Repeated ``key=value`` overrides, applied last.
        out_dir: Run directory; nothing is written when omitted.

    Returns:
        The summary dictionary (as written to ``summary.json``).

    Raises:
        ConfigError: Unknown scenario, unknown key or invalid value.
    """
    from src.data.config import resolve_config
    from src.data.stores import build_summary, create_output_stores, write_run

    scenario = get_scenario(name)
    config = resolve_config(scenario, preset, config_file, flags, set_values)
    context = RunContext(preset=preset, seed=int(config['seed']), jobs=int(config['jobs']))

    logger.info("running %s (preset %s, seed %d, jobs %d)", name, preset, context.seed, context.jobs)
    start = time.perf_counter()
    result = scenario.run(config, context)
    wall_time = time.perf_counter() - start
    logger.info("%s finished in %.1f s%s", name, wall_time, '' if result.converged else ' without convergence')

    summary = build_summary(scenario.name, preset, config, result, wall_time)
    if out_dir is not None:
        stores = create_output_stores(Path(out_dir))
        write_run(stores, summary, result)
    return summary
