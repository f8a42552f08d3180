"""Environment/system state representation, state differences, change detection.

States are opaque fixed-dimension real feature vectors. A scenario key is the
quantized concatenation of (environment, system) features and serves as the
index into scenario-separated memory. Change detection is a single-lag
comparison of consecutive environment snapshots against a fixed threshold;
a windowed-mean variant exists for noisy streams but is off by default.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation

__all__ = [
    "EnvState",
    "SysState",
    "ScenarioKey",
    "ChangeDetector",
    "WorldConfig",
    "env_difference",
    "scenario_key",
    "concat_state",
]


def _as_feature_array(features) -> np.ndarray:
    arr = np.asarray(features, dtype=float)
    if arr.ndim != 1:
        raise ContractViolation(f"feature vector must be 1-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ContractViolation("feature vector contains non-finite entries")
    return arr


@dataclass
class EnvState:
    """Environment snapshot: feature vector plus the step it was observed at."""

    features: np.ndarray
    timestamp: int = 0

    def __post_init__(self):
        self.features = _as_feature_array(self.features)
        if self.timestamp < 0:
            raise ContractViolation("timestamp must be a step index >= 0")

    @property
    def dim(self) -> int:
        return self.features.shape[0]


@dataclass
class SysState:
    """Internal system snapshot; same layout as EnvState, separate meaning."""

    features: np.ndarray
    timestamp: int = 0

    def __post_init__(self):
        self.features = _as_feature_array(self.features)
        if self.timestamp < 0:
            raise ContractViolation("timestamp must be a step index >= 0")

    @property
    def dim(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class ScenarioKey:
    """Quantized (env, sys) snapshot; equality/hash are exact on the buckets."""

    buckets: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.buckets)


@dataclass
class WorldConfig:
    """Per-run world parameters.

    norm_ord selects the vector norm used for every state difference in this
    world: 2 (default), 1, or math.inf.
    """

    norm_ord: float = 2
    bucket_width: float = 1.0
    theta_e: float = 0.5
    detector_window: int = 1

    def __post_init__(self):
        if self.norm_ord not in (1, 2, math.inf):
            raise ContractViolation(f"norm_ord must be 1, 2 or inf, got {self.norm_ord}")
        if self.bucket_width <= 0:
            raise ContractViolation("bucket_width must be > 0")
        if self.theta_e <= 0:
            raise ContractViolation("theta_e must be > 0")
        if self.detector_window < 1:
            raise ContractViolation("detector_window must be >= 1")


def _norm(vec: np.ndarray, ord: float) -> float:
    # hot path: L2 via dot is measurably faster than np.linalg.norm
    if ord == 2:
        return math.sqrt(float(np.dot(vec, vec)))
    if ord == 1:
        return float(np.abs(vec).sum())
    return float(np.abs(vec).max()) if vec.size else 0.0


def env_difference(a: EnvState, b: EnvState, ord: float = 2) -> float:
    """Norm of the feature difference between two equal-dimension snapshots."""
    if a.dim != b.dim:
        raise ContractViolation(f"dimension mismatch: {a.dim} vs {b.dim}")
    return _norm(a.features - b.features, ord)


def concat_state(e: EnvState, s: SysState) -> np.ndarray:
    """Joint feature vector [env | sys] used for scenario keys and compliance."""
    return np.concatenate([e.features, s.features])


def scenario_key(e: EnvState, s: SysState, bucket_width: float) -> ScenarioKey:
    """Quantize the joint (env, sys) features into integer buckets.

    bucket i of value x is floor(x / bucket_width); deterministic, and any two
    states strictly within bucket_width/2 of a bucket center share a key.
    """
    if bucket_width <= 0:
        raise ContractViolation("bucket_width must be > 0")
    joint = concat_state(e, s)
    return ScenarioKey(tuple(int(math.floor(x / bucket_width)) for x in joint))


@dataclass
class ChangeDetector:
    """Streaming environmental change detector.

    Compares each new snapshot against the previous one (window=1, the
    default) or against the mean of the last `window` snapshots, and fires
    when the difference strictly exceeds theta_e. The detector is owned by a
    single agent loop; it mutates its own state on every observation.
    """

    last_env: EnvState
    theta_e: float
    window: int = 1
    norm_ord: float = 2
    last_trigger_step: int = -1
    _history: deque = field(init=False, repr=False)

    def __post_init__(self):
        if self.theta_e <= 0:
            raise ContractViolation("theta_e must be > 0")
        if self.window < 1:
            raise ContractViolation("window must be >= 1")
        self._history = deque(maxlen=self.window)
        self._history.append(self.last_env.features)

    def observe(self, e: EnvState) -> tuple[bool, float]:
        """Process one snapshot; returns (changed, delta).

        changed is strict: delta must exceed theta_e, equality does not fire.
        """
        if e.dim != self.last_env.dim:
            raise ContractViolation(
                f"dimension mismatch: detector d={self.last_env.dim}, state d={e.dim}"
            )
        if self.window == 1:
            reference = self._history[-1]
        else:
            reference = np.mean(np.stack(self._history), axis=0)
        delta = _norm(e.features - reference, self.norm_ord)
        changed = delta > self.theta_e
        self._history.append(e.features)
        self.last_env = e
        if changed:
            self.last_trigger_step = e.timestamp
        return changed, delta


def detect_change(det: ChangeDetector, e: EnvState) -> tuple[bool, float]:
    """Functional alias for ChangeDetector.observe."""
    return det.observe(e)
