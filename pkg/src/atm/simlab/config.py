"""Experiment configuration.

Config files are JSON with the top-level keys world, selector, tasking,
executor, measurement, patterns, thresholds, and seeds.  Every tunable
threshold — including the acceptance targets each experiment is judged
against — lives here, so runners contain no magic numbers.  default_config
returns the desk-scale setup each experiment is shipped with.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError

__all__ = ["Thresholds", "LabConfig", "load_config", "default_config", "EXPERIMENTS"]

EXPERIMENTS = ("stationary", "tracking", "checkpoint", "goal-directed", "full-agent")

_TOP_LEVEL_KEYS = {
    "world",
    "selector",
    "tasking",
    "executor",
    "measurement",
    "patterns",
    "thresholds",
    "seeds",
}


@dataclass
class Thresholds:
    """Every named decision threshold in one place."""

    theta_e: float = 0.2
    theta_create: float = 0.6
    theta_delete: float = 0.2
    theta_ckpt: float = 0.0
    theta_f: float = 0.2
    theta_s_state: float = 0.5
    theta_contra: float = 0.6
    theta_ind: float = 0.25
    theta_ext: float = 0.5
    theta_sim: float = 0.3
    theta_t: float = 0.5
    theta_s_spatial: float = 0.5
    theta_cooccur: float = 0.5
    theta_eff: float = 1.0

    @classmethod
    def from_dict(cls, raw: dict) -> "Thresholds":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown threshold names: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in raw.items()})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class LabConfig:
    experiment: str
    world: dict = field(default_factory=dict)
    selector: dict = field(default_factory=dict)
    tasking: dict = field(default_factory=dict)
    executor: dict = field(default_factory=dict)
    measurement: dict = field(default_factory=dict)
    patterns: dict = field(default_factory=dict)
    thresholds: Thresholds = field(default_factory=Thresholds)
    seeds: list[int] = field(default_factory=lambda: list(range(20)))

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(
                f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}"
            )
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be unique")

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "world": self.world,
            "selector": self.selector,
            "tasking": self.tasking,
            "executor": self.executor,
            "measurement": self.measurement,
            "patterns": self.patterns,
            "thresholds": self.thresholds.to_dict(),
            "seeds": list(self.seeds),
        }

    def with_seeds(self, seeds: list[int]) -> "LabConfig":
        return dataclasses.replace(self, seeds=list(seeds))


def _normalize_seeds(raw) -> list[int]:
    if isinstance(raw, int):
        if raw < 1:
            raise ConfigError(f"seed count must be >= 1, got {raw}")
        return list(range(raw))
    if isinstance(raw, list) and all(isinstance(s, int) for s in raw):
        return list(raw)
    raise ConfigError("seeds must be an integer count or a list of integers")


def load_config(path: str | Path, experiment: str) -> LabConfig:
    """Parse a JSON config file, overlaying it on the experiment's defaults."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(raw) - _TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
    base = default_config(experiment)
    sections = {}
    for name in ("world", "selector", "tasking", "executor", "measurement", "patterns"):
        section = dict(getattr(base, name))
        override = raw.get(name, {})
        if not isinstance(override, dict):
            raise ConfigError(f"config section {name!r} must be an object")
        section.update(override)
        sections[name] = section
    thresholds = base.thresholds.to_dict()
    thresholds.update(raw.get("thresholds", {}))
    return LabConfig(
        experiment=experiment,
        thresholds=Thresholds.from_dict(thresholds),
        seeds=_normalize_seeds(raw.get("seeds", base.seeds)),
        **sections,
    )


def default_config(experiment: str) -> LabConfig:
    """Shipped desk-scale configuration for each experiment."""
    if experiment == "stationary":
        return LabConfig(
            experiment=experiment,
            world={
                "arm_means": [[0.9, 0.5, 0.5, 0.5, 0.5]],
                "change_points": [],
                "horizon": 50_000,
                "trace_stride": 500,
                "acceptance": {"last_decile_regret_max": 0.02, "half_ratio_max": 0.7},
            },
            selector={"c": 5.0, "optimistic_init": 1.0, "policy": "egreedy"},
            seeds=list(range(20)),
        )
    if experiment == "tracking":
        return LabConfig(
            experiment=experiment,
            world={
                "arm_means": [
                    [0.9, 0.5, 0.5, 0.5, 0.5],
                    [0.5, 0.9, 0.5, 0.5, 0.5],
                    [0.5, 0.5, 0.9, 0.5, 0.5],
                    [0.5, 0.5, 0.5, 0.9, 0.5],
                ],
                "change_points": [10_000, 20_000, 30_000],
                "horizon": 40_000,
                "env_signature_scale": [0.4, 0.1],
                "env_noise": 0.02,
                "trace_stride": 500,
                "acceptance": {"reset_ratio_max": 0.6, "detection_latency_max": 200},
            },
            selector={"c": 5.0, "optimistic_init": 1.0, "policy": "egreedy"},
            thresholds=Thresholds(theta_e=0.2),
            seeds=list(range(20)),
        )
    if experiment == "checkpoint":
        return LabConfig(
            experiment=experiment,
            executor={
                "l_f": 0.9,
                "rho": 0.5,
                "rho_grid": [0.0, 0.25, 0.5, 0.75],
                "sigma": 0.1,
                "dim": 2,
                "steps": 20_000,
                "tail": 5_000,
                "checkpoint_every": 1,
                "trace_stride": 200,
                "acceptance": {"bound_slack": 1.10, "free_ratio_max": 0.35},
            },
            thresholds=Thresholds(theta_ckpt=0.0),
            seeds=list(range(20)),
        )
    if experiment == "goal-directed":
        return LabConfig(
            experiment=experiment,
            world={
                "dim": 4,
                "eta": 0.05,
                "steps": 150,
                "lambda_g": 1.0,
                "fit_through": 100,
                "trace_stride": 1,
                "acceptance": {"t_check": 100, "guided_ratio_max": 0.5, "rate_rel_tol": 0.2},
            },
            seeds=list(range(20)),
        )
    if experiment == "full-agent":
        return LabConfig(
            experiment=experiment,
            world={
                "horizon": 5_000,
                "change_step": 1_500,
                "env_bases": [0.5, 4.5],
                "start_position": -0.5,
                "move_delta": 1.0,
                "env_noise": 0.02,
                "goal_targets": [1.5, -1.5],
                "goal_tolerance": 0.3,
                "bucket_width": 1.0,
                "plan_hold_length": 600,
                "trace_stride": 50,
                "acceptance": {
                    "window": 1_000,
                    "dip_allowance": 0.02,
                    "churn_within": 500,
                },
            },
            selector={"c": 5.0, "optimistic_init": 1.0},
            tasking={
                "max_active": 2,
                "compliance_window": 20,
                "candidate_optimism": 3,
                "spare_time_every": 250,
                "spare_time_budget": 100,
            },
            measurement={"channel_weights": None},
            patterns={"mine_window": 1},
            thresholds=Thresholds(
                theta_e=2.0,
                theta_create=0.45,
                theta_delete=0.35,
                theta_f=0.6,
                theta_s_state=0.5,
                theta_sim=0.3,
                theta_cooccur=0.8,
            ),
            seeds=list(range(20)),
        )
    raise ConfigError(f"unknown experiment {experiment!r}; expected one of {EXPERIMENTS}")
