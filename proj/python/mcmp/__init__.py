"""Collision-probability estimation and chance-constrained motion planning."""

from ._core import (
    NumericalError,
    Scenario,
    ScenarioError,
    discretize,
    estimate,
    load_scenario,
    parse_scenario,
    plan,
    run_cli,
)

__all__ = [
    "NumericalError",
    "Scenario",
    "ScenarioError",
    "discretize",
    "estimate",
    "load_scenario",
    "parse_scenario",
    "plan",
    "run_cli",
]
