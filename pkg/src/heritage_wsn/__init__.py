"""Desk-scale emulation of a three-tier heritage-site monitoring network.

Sensor nodes report over simulated BLE and Wi-Fi links to an edge hub that
keeps an event ledger, classifies and purges camera frames, and uploads CSV
batches to a file-backed cloud pipeline. Everything runs on one seeded,
simulated clock.
"""

from .config import ConfigError, NodeSpec, ValidatedConfig, WsnConfig, load_config, parse_config, validate_config
from .hub import Category, EventLedger, Hub
from .kinds import PowerProfile, SensorKind, Transport
from .scenario import RunReport, ScenarioSpec, museum_spec, run_scenario

__version__ = "0.1.0"

__all__ = [
    "Category",
    "ConfigError",
    "EventLedger",
    "Hub",
    "NodeSpec",
    "PowerProfile",
    "RunReport",
    "ScenarioSpec",
    "SensorKind",
    "Transport",
    "ValidatedConfig",
    "WsnConfig",
    "load_config",
    "museum_spec",
    "parse_config",
    "run_scenario",
    "validate_config",
]
