"""
Benchmark scenarios for GrwSim.

Importing the package registers every scenario with the registry.
"""

from src.scenarios.registry import (
    PRESETS, RunContext, Scenario, ScenarioResult, get_scenario, list_scenarios, register_scenario,
    run_scenario,
)
from src.scenarios import flow_scenarios, coupled_scenarios, transport_scenarios, field_scenarios  # noqa: F401

__all__ = ['PRESETS', 'RunContext', 'Scenario', 'ScenarioResult', 'get_scenario', 'list_scenarios',
           'register_scenario', 'run_scenario']
