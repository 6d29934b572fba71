"""Needs-driven agent-based simulation of anti-poverty and aporophobic norms."""

from .config import ConfigError, ScenarioConfig, default_scenario, load_scenario, validate_scenario
from .engine import RunResult, run
from .norms import Norm, NormSet, Tag, load_norms, parse_norms

__all__ = [
    "ConfigError",
    "Norm",
    "NormSet",
    "RunResult",
    "ScenarioConfig",
    "Tag",
    "default_scenario",
    "load_norms",
    "load_scenario",
    "parse_norms",
    "run",
    "validate_scenario",
]

__version__ = "0.1.0"
