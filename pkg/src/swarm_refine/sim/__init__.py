"""Seeded multi-UAV simulation harness."""

from .config import ConfigError, SwarmConfig, load_config
from .metrics import EpochMetrics, aggregate_runs, recovery_epoch
from .world import (
    WorldState,
    init_world,
    link_observables_from_distance,
    measure_range,
    run_epoch,
    run_simulation,
    sense_local,
    simulate,
    spoof_report,
    step_motion,
)

__all__ = [
    "ConfigError",
    "EpochMetrics",
    "SwarmConfig",
    "WorldState",
    "aggregate_runs",
    "init_world",
    "link_observables_from_distance",
    "load_config",
    "measure_range",
    "recovery_epoch",
    "run_epoch",
    "run_simulation",
    "sense_local",
    "simulate",
    "spoof_report",
    "step_motion",
]
