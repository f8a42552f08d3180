"""Exploratory method selection.

Epsilon-greedy over a fixed roster of method ids with the schedule
eps_t = min(1, c / t) and per-method sample-mean value estimates
(eta = 1 / pulls).  Estimates start optimistic so an untried method is
preferred over a disappointing one.  After an environment change is
detected the selector is reset: estimates back to the optimistic init,
pull counts to zero, and the epsilon clock restarted so the agent
re-explores the changed world; see paired runs in the simulation lab for
the measured effect on tracking regret.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np

from .errors import ContractViolation, NotFound

if TYPE_CHECKING:  # circular at runtime: planner imports world, world is fine,
    # but keeping the import type-only avoids a hard dependency here
    from .planner import PlannerPort
    from .world import ScenarioKey

__all__ = [
    "SelectionConfig",
    "MethodSelector",
    "Method",
    "Evaluator",
    "epsilon_schedule",
    "eta_schedule",
    "update_estimate",
    "select_method",
    "reset_exploration",
    "reuse_similar",
    "default_similarity",
    "intuition_fallback",
    "blend_evaluator",
]

ORIGINS = ("learned", "reused", "intuition")


@dataclass
class Method:
    """A named strategy with a running performance estimate."""

    method_id: str
    estimate: float = 1.0
    pulls: int = 0
    origin: str = "learned"

    def __post_init__(self):
        if self.pulls < 0:
            raise ContractViolation(f"pulls must be >= 0, got {self.pulls}")
        if not np.isfinite(self.estimate):
            raise ContractViolation(f"estimate must be finite, got {self.estimate}")
        if self.origin not in ORIGINS:
            raise ContractViolation(f"origin must be one of {ORIGINS}, got {self.origin!r}")


def epsilon_schedule(t: int, c: float = 5.0) -> float:
    """Exploration probability at (1-based) decision step t: min(1, c/t)."""
    if t < 1:
        raise ContractViolation(f"epsilon schedule is defined for t >= 1, got {t}")
    if c <= 0.0:
        raise ContractViolation(f"exploration constant c must be positive, got {c}")
    return min(1.0, c / t)


def eta_schedule(pulls: int) -> float:
    """Sample-mean learning rate after the method's pulls-th reward."""
    if pulls < 1:
        raise ContractViolation(f"eta schedule needs pulls >= 1, got {pulls}")
    return 1.0 / pulls


def update_estimate(q: float, r: float, eta: float) -> float:
    if not 0.0 < eta <= 1.0:
        raise ContractViolation(f"eta must lie in (0, 1], got {eta}")
    return q + eta * (r - q)


def select_method(estimates: Sequence[float], t: int, rng: np.random.Generator, c: float = 5.0) -> int:
    """Pick a method index: explore uniformly with prob eps_t, else take the
    greedy index (first maximum wins a tie)."""
    n = len(estimates)
    if n == 0:
        raise NotFound("cannot select from an empty method roster")
    if rng.random() < epsilon_schedule(t, c):
        return int(rng.integers(n))
    best, best_q = 0, estimates[0]
    for i in range(1, n):
        q = estimates[i]
        if q > best_q:
            best, best_q = i, q
    return best


@dataclass
class SelectionConfig:
    c: float = 5.0
    optimistic_init: float = 1.0

    def __post_init__(self):
        if self.c <= 0.0:
            raise ContractViolation(f"exploration constant c must be positive, got {self.c}")


@dataclass
class MethodSelector:
    """Stateful eps-greedy selector over named methods."""

    method_ids: Sequence[str]
    config: SelectionConfig = field(default_factory=SelectionConfig)
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    def __post_init__(self):
        self.method_ids = list(self.method_ids)
        if not self.method_ids:
            raise ContractViolation("selector needs at least one method")
        if len(set(self.method_ids)) != len(self.method_ids):
            raise ContractViolation("method ids must be unique")
        self.reset()

    # reset() doubles as the initializer so both paths share one definition
    def reset(self) -> None:
        """Forget everything learned: optimistic estimates, zero pulls,
        epsilon clock back to the start."""
        self.estimates = [self.config.optimistic_init] * len(self.method_ids)
        self.pulls = [0] * len(self.method_ids)
        self._clock = 0

    @property
    def t(self) -> int:
        """Decision steps taken since the last reset."""
        return self._clock

    def select(self) -> int:
        self._clock += 1
        return select_method(self.estimates, self._clock, self.rng, self.config.c)

    def select_id(self) -> str:
        return self.method_ids[self.select()]

    def update(self, index: int, reward: float) -> float:
        """Record a reward for the chosen method; returns the new estimate."""
        if not 0 <= index < len(self.method_ids):
            raise ContractViolation(f"method index {index} out of range")
        self.pulls[index] += 1
        q = update_estimate(self.estimates[index], reward, eta_schedule(self.pulls[index]))
        self.estimates[index] = q
        return q


def reset_exploration(selector: MethodSelector) -> None:
    """Functional alias for MethodSelector.reset()."""
    selector.reset()


def default_similarity(a: str, b: str) -> float:
    """Jaccard overlap of whitespace/underscore-separated tokens."""
    ta = set(a.replace("_", " ").split())
    tb = set(b.replace("_", " ").split())
    if not ta and not tb:
        return 1.0
    union = ta | tb
    return len(ta & tb) / len(union)


def reuse_similar(
    q_unknown: str,
    known: Sequence[tuple[str, str]],
    sim: Callable[[str, str], float] | None = None,
) -> Method:
    """Borrow the method of the most similar previously-solved question.

    known is a list of (question_id, method_id) in insertion order; ties on
    similarity keep the earliest entry. The returned Method is tagged
    origin="reused" so callers can track borrowed strategies.
    """
    if not known:
        raise NotFound("no known questions to reuse from")
    score = sim if sim is not None else default_similarity
    best_idx, best_sim = 0, score(q_unknown, known[0][0])
    for i in range(1, len(known)):
        s = score(q_unknown, known[i][0])
        if s > best_sim:
            best_idx, best_sim = i, s
    return Method(method_id=known[best_idx][1], origin="reused")


def intuition_fallback(scenario: "ScenarioKey", planner: "PlannerPort", urgency: bool = False) -> str:
    """Single no-deliberation planner call for time-critical situations.

    Callers must set urgency explicitly; this guards against the fallback
    silently replacing deliberate planning. Exactly one planner call is made
    and its first action returned; planner failures propagate.
    """
    from .planner import PlanRequest  # local import to avoid a cycle

    if not urgency:
        raise ContractViolation("intuition fallback requires the urgency flag")
    resp = planner.respond(
        PlanRequest(env=None, sys=None, goal=None, kind="intuition", context={"scenario": scenario})
    )
    if not resp.actions:
        raise NotFound("planner returned no intuitive action")
    return resp.actions[0]


@dataclass
class Evaluator:
    """Weights mapping measurement signals to the scalar performance score."""

    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.ndim != 1:
            raise ContractViolation("evaluator weights must be a 1-D vector")
        if not np.all(np.isfinite(self.weights)):
            raise ContractViolation("evaluator weights must be finite")


def blend_evaluator(current: Evaluator, candidate: Evaluator, beta: float) -> Evaluator:
    """Element-wise convex move of the evaluator toward a candidate:
    w <- (1 - beta) * w + beta * w'. beta is confined to the open interval
    (0, 1) so neither evaluator is ever discarded outright."""
    if not 0.0 < beta < 1.0:
        raise ContractViolation(f"beta must lie strictly inside (0, 1), got {beta}")
    if current.weights.shape != candidate.weights.shape:
        raise ContractViolation(
            f"evaluator dimension mismatch: {current.weights.shape} vs {candidate.weights.shape}"
        )
    return Evaluator((1.0 - beta) * current.weights + beta * candidate.weights)
