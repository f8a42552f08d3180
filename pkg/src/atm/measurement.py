"""Active measurement and indirect evaluation.

Six independent evaluation channels, each a pure function with a strict
threshold:

* flag deviation         |observed - expected| > theta_f
* state difference       ||after - before||_2 > theta_s_state
* contradiction          shifted cosine (1+cos)/2 < theta_contra, per aspect
* indirect indicators    sum_i w_i |I_i - I_i_exp| > theta_ind
* external feedback      mean(signals) < theta_ext
* simulation comparison  ||observed - simulated||_2 > theta_sim

aggregate_reward folds the available channels into a single internal reward
r in [0, 1] under a simplex weight vector; channels without data are dropped
and the remaining weights renormalized.  The reward is monotone: worsening
any channel never increases r.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .errors import ContractViolation, NotFound
from .world import EnvState, SysState

__all__ = [
    "Flag",
    "IndirectIndicator",
    "MeasurementReport",
    "StateDiff",
    "SimulatorPort",
    "ChannelThresholds",
    "CHANNELS",
    "flag_deviation",
    "state_difference",
    "cosine_similarity01",
    "contradiction_check",
    "indirect_score",
    "external_feedback",
    "simulate_compare",
    "aggregate_reward",
    "build_report",
]

log = logging.getLogger(__name__)

CHANNELS = ("flags", "state", "contradiction", "indirect", "external", "simulation")


def _finite(x: float, name: str) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ContractViolation(f"{name} must be finite, got {x}")
    return x


@dataclass
class Flag:
    """A monitored quantity with an expected value and a normal range."""

    flag_id: str
    expected: float
    min: float
    max: float
    theta_f: float

    def __post_init__(self):
        if self.theta_f <= 0.0:
            raise ContractViolation(f"theta_f must be positive, got {self.theta_f}")
        if not self.min <= self.expected <= self.max:
            raise ContractViolation(
                f"flag {self.flag_id!r}: expected {self.expected} outside [{self.min}, {self.max}]"
            )


@dataclass
class IndirectIndicator:
    indicator_id: str
    expected: float
    weight: float

    def __post_init__(self):
        if self.weight < 0.0:
            raise ContractViolation(f"indicator weight must be >= 0, got {self.weight}")


@dataclass
class StateDiff:
    delta: np.ndarray
    norm: float
    material: bool


def flag_deviation(flag: Flag, observed: float) -> tuple[float, bool]:
    """Absolute deviation from the expectation; violated only strictly above theta_f."""
    delta = abs(_finite(observed, "observed") - flag.expected)
    return delta, delta > flag.theta_f


def state_difference(before: np.ndarray, after: np.ndarray, theta_s_state: float) -> StateDiff:
    """Element-wise after-minus-before with its L2 norm; material above the threshold."""
    before = np.asarray(before, dtype=float)
    after = np.asarray(after, dtype=float)
    if before.shape != after.shape:
        raise ContractViolation(
            f"state dimensions differ: {before.shape} vs {after.shape}"
        )
    delta = after - before
    norm = float(np.linalg.norm(delta))
    return StateDiff(delta, norm, norm > theta_s_state)


def cosine_similarity01(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity shifted to [0, 1]: identical 1, orthogonal 0.5, opposite 0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ContractViolation("cosine similarity is undefined for zero vectors")
    if np.array_equal(a, b):
        return 1.0  # exact, avoiding sqrt round-off that would land at 1 - ulp
    cos = float(np.dot(a, b)) / (na * nb)
    return (1.0 + max(-1.0, min(1.0, cos))) / 2.0


def contradiction_check(
    goal_outcome: np.ndarray,
    observed_outcome: np.ndarray,
    theta_contra: float,
    aspects: Sequence[Sequence[int]] | None = None,
) -> bool:
    """True when the observation points away from what the goal intended.

    aspects are index subsets checked independently (e.g. position vs
    velocity components); any one falling below theta_contra contradicts.
    """
    if not 0.0 < theta_contra <= 1.0:
        raise ContractViolation(f"theta_contra must lie in (0, 1], got {theta_contra}")
    goal_outcome = np.asarray(goal_outcome, dtype=float)
    observed_outcome = np.asarray(observed_outcome, dtype=float)
    if goal_outcome.shape != observed_outcome.shape:
        raise ContractViolation("outcome vectors must share a shape")
    if aspects is None:
        aspects = [range(goal_outcome.shape[0])]
    for aspect in aspects:
        idx = list(aspect)
        if cosine_similarity01(goal_outcome[idx], observed_outcome[idx]) < theta_contra:
            return True
    return False


def indirect_score(
    indicators: Sequence[IndirectIndicator], observed: Sequence[float], theta_ind: float
) -> tuple[float, bool]:
    """Weighted L1 deviation of indirect indicators from their expectations."""
    if len(indicators) != len(observed):
        raise ContractViolation(
            f"{len(indicators)} indicators but {len(observed)} observations"
        )
    d_ind = 0.0
    for ind, obs in zip(indicators, observed):
        d_ind += ind.weight * abs(_finite(obs, ind.indicator_id) - ind.expected)
    return d_ind, d_ind > theta_ind


def external_feedback(signals: Sequence[float], theta_ext: float) -> tuple[float, bool]:
    """Mean external satisfaction; unacceptable strictly below theta_ext."""
    if len(signals) == 0:
        raise NotFound("no external feedback available")
    for s in signals:
        if not 0.0 <= s <= 1.0:
            raise ContractViolation(f"external signals must lie in [0, 1], got {s}")
    s_ext = float(sum(signals)) / len(signals)
    return s_ext, s_ext < theta_ext


class SimulatorPort(Protocol):
    def simulate(self, env: EnvState, sys: SysState, actions: Sequence[str]) -> np.ndarray: ...


def simulate_compare(
    env: EnvState,
    sys: SysState,
    actions: Sequence[str],
    observed_outcome: np.ndarray,
    sim: SimulatorPort,
    theta_sim: float,
) -> tuple[float, bool]:
    """Replay the actions through the simulator and compare outcomes by L2.

    A simulator failure is never swallowed into a silent pass: it logs the
    diagnostic and reports the step as inconsistent with infinite deviation.
    """
    observed_outcome = np.asarray(observed_outcome, dtype=float)
    try:
        predicted = np.asarray(sim.simulate(env, sys, list(actions)), dtype=float)
    except Exception as exc:  # noqa: BLE001 - deliberate fail-loud conversion
        log.warning("simulator failed during comparison: %s", exc)
        return math.inf, True
    if predicted.shape != observed_outcome.shape:
        log.warning(
            "simulator returned shape %s, observed %s", predicted.shape, observed_outcome.shape
        )
        return math.inf, True
    delta = float(np.linalg.norm(observed_outcome - predicted))
    return delta, delta > theta_sim


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------


@dataclass
class ChannelThresholds:
    """Deviation scales used to map raw channel deviations onto [0, 1].

    A deviation of 2x the threshold (the point where the channel is
    unambiguously broken) scores zero; zero deviation scores one.
    """

    theta_f: float = 0.2
    theta_s_state: float = 0.5
    theta_contra: float = 0.6
    theta_ind: float = 0.25
    theta_ext: float = 0.5
    theta_sim: float = 0.3

    def __post_init__(self):
        for name in ("theta_f", "theta_s_state", "theta_ind", "theta_sim"):
            if getattr(self, name) <= 0.0:
                raise ContractViolation(f"{name} must be positive")
        if not 0.0 < self.theta_contra <= 1.0:
            raise ContractViolation("theta_contra must lie in (0, 1]")
        if not 0.0 <= self.theta_ext <= 1.0:
            raise ContractViolation("theta_ext must lie in [0, 1]")


def _deviation_score(d: float, theta: float) -> float:
    return max(0.0, 1.0 - d / (2.0 * theta))


def aggregate_reward(
    thresholds: ChannelThresholds,
    flag_deviations: Sequence[float] | None = None,
    state_diff_norm: float | None = None,
    contradiction: bool | None = None,
    d_ind: float | None = None,
    s_ext: float | None = None,
    sim_deviation: float | None = None,
    weights: dict[str, float] | None = None,
) -> float:
    """Fold channel observations into r in [0, 1].

    weights is a full simplex vector over CHANNELS (uniform by default);
    channels passed as None are excluded and the rest renormalized.
    """
    if weights is None:
        weights = {name: 1.0 / len(CHANNELS) for name in CHANNELS}
    if set(weights) != set(CHANNELS):
        raise ContractViolation(f"weights must cover exactly the channels {CHANNELS}")
    if any(w < 0.0 for w in weights.values()):
        raise ContractViolation("channel weights must be non-negative")
    if abs(sum(weights.values()) - 1.0) > 1e-9:
        raise ContractViolation(f"channel weights must sum to 1, got {sum(weights.values())}")

    scores: dict[str, float] = {}
    if flag_deviations is not None:
        per_flag = [_deviation_score(d, thresholds.theta_f) for d in flag_deviations]
        scores["flags"] = sum(per_flag) / len(per_flag) if per_flag else 1.0
    if state_diff_norm is not None:
        scores["state"] = _deviation_score(state_diff_norm, thresholds.theta_s_state)
    if contradiction is not None:
        scores["contradiction"] = 0.0 if contradiction else 1.0
    if d_ind is not None:
        scores["indirect"] = _deviation_score(d_ind, thresholds.theta_ind)
    if s_ext is not None:
        if not 0.0 <= s_ext <= 1.0:
            raise ContractViolation(f"s_ext must lie in [0, 1], got {s_ext}")
        scores["external"] = float(s_ext)
    if sim_deviation is not None:
        scores["simulation"] = _deviation_score(sim_deviation, thresholds.theta_sim)

    total_w = sum(weights[name] for name in scores)
    if total_w <= 0.0:
        raise ContractViolation("no measurement channel with positive weight has data")
    return sum(weights[name] * scores[name] for name in scores) / total_w


@dataclass
class MeasurementReport:
    """One step's evaluation across every channel that produced data."""

    flag_deviations: list[float] = field(default_factory=list)
    state_diff_norm: float | None = None
    contradiction: bool | None = None
    d_ind: float | None = None
    s_ext: float | None = None
    sim_deviation: float | None = None
    reward: float = 1.0

    def __post_init__(self):
        for d in self.flag_deviations:
            _finite(d, "flag deviation")
        for name in ("state_diff_norm", "d_ind", "s_ext"):
            value = getattr(self, name)
            if value is not None:
                _finite(value, name)
        if not 0.0 <= self.reward <= 1.0:
            raise ContractViolation(f"reward must lie in [0, 1], got {self.reward}")


def build_report(
    thresholds: ChannelThresholds,
    flag_deviations: Sequence[float] | None = None,
    state_diff_norm: float | None = None,
    contradiction: bool | None = None,
    d_ind: float | None = None,
    s_ext: float | None = None,
    sim_deviation: float | None = None,
    weights: dict[str, float] | None = None,
) -> MeasurementReport:
    """Assemble a MeasurementReport with its aggregated reward."""
    reward = aggregate_reward(
        thresholds,
        flag_deviations=flag_deviations,
        state_diff_norm=state_diff_norm,
        contradiction=contradiction,
        d_ind=d_ind,
        s_ext=s_ext,
        sim_deviation=sim_deviation,
        weights=weights,
    )
    return MeasurementReport(
        flag_deviations=list(flag_deviations or []),
        state_diff_norm=state_diff_norm,
        contradiction=contradiction,
        d_ind=d_ind,
        s_ext=s_ext,
        sim_deviation=None if sim_deviation is None or math.isinf(sim_deviation) else sim_deviation,
        reward=reward,
    )
