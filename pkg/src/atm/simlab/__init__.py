"""Simulation lab: worlds, experiment runners, reports, and the CLI."""

from .config import LabConfig, Thresholds, default_config, load_config
from .report import ExperimentReport
from .experiments import (
    run_checkpoint_contraction,
    run_full_agent,
    run_goal_directed,
    run_stationary_regret,
    run_tracking_regret,
)

__all__ = [
    "LabConfig",
    "Thresholds",
    "default_config",
    "load_config",
    "ExperimentReport",
    "run_stationary_regret",
    "run_tracking_regret",
    "run_checkpoint_contraction",
    "run_goal_directed",
    "run_full_agent",
]
