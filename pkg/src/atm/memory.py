"""Scenario-separated agent memory.

Three associative stores, all keyed by discretized scenario so that learning
in one context never bleeds into another:

* goal relevance:   scenario -> {goal_id: weight}
* action outcomes:  scenario -> {(action_id, outcome_id): weight}
* solved questions: (question_id, scenario) -> solution summary

plus an append-only chronological history whose entries are stored as deltas
against a norm state (the agent's notion of "typical"), recalled newest
first.  Missing intermediate steps are filled in predictively by asking the
planner to interpolate between the nearest recorded anchors.

Weights follow the exponential trace w <- (1 - eta) * w + eta * phi(r) with
phi the identity unless configured otherwise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ContractViolation, NotFound
from .planner import PlannerPort, PlanRequest
from .world import EnvState, ScenarioKey, SysState, scenario_key

__all__ = [
    "MemoryConfig",
    "HistoryEntry",
    "SolutionEntry",
    "SolutionHit",
    "ScenarioMemory",
    "update_weight",
    "SNAPSHOT_VERSION",
]

SNAPSHOT_VERSION = 1


def update_weight(w: float, r: float, eta: float, phi: Callable[[float], float] | None = None) -> float:
    """Exponential-trace update w <- (1-eta)*w + eta*phi(r)."""
    if not 0.0 < eta <= 1.0:
        raise ContractViolation(f"eta must lie in (0, 1], got {eta}")
    shaped = r if phi is None else phi(r)
    return (1.0 - eta) * w + eta * float(shaped)


@dataclass
class MemoryConfig:
    default_eta: float = 0.1
    bucket_width: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.default_eta <= 1.0:
            raise ContractViolation(f"default_eta must lie in (0, 1], got {self.default_eta}")
        if self.bucket_width <= 0.0:
            raise ContractViolation(f"bucket_width must be positive, got {self.bucket_width}")


@dataclass
class HistoryEntry:
    """One remembered step, stored relative to the norm state.

    is_key_state marks anchor entries worth keeping verbatim; non-key steps
    can be served by predictive interpolation instead of storage.
    """

    step: int
    delta_env: np.ndarray
    delta_sys: np.ndarray
    action_id: str | None = None
    outcome_id: str | None = None
    scenario: ScenarioKey | None = None
    is_key_state: bool = True


@dataclass
class SolutionEntry:
    question_id: str
    buckets: tuple[int, ...]
    summary_id: str
    payload: dict = field(default_factory=dict)
    quality: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.quality <= 1.0:
            raise ContractViolation(f"solution quality must lie in [0, 1], got {self.quality}")


@dataclass
class SolutionHit:
    entry: SolutionEntry
    cross_scenario: bool


class ScenarioMemory:
    """All four stores behind one object; see module docstring."""

    def __init__(
        self,
        norm_env: np.ndarray,
        norm_sys: np.ndarray,
        config: MemoryConfig | None = None,
        phi: Callable[[float], float] | None = None,
    ):
        self.config = config or MemoryConfig()
        self.norm_env = np.asarray(norm_env, dtype=float)
        self.norm_sys = np.asarray(norm_sys, dtype=float)
        if self.norm_env.ndim != 1 or self.norm_sys.ndim != 1:
            raise ContractViolation("norm states must be 1-D feature vectors")
        self.phi = phi
        self._goals: dict[ScenarioKey, dict[str, float]] = {}
        self._outcomes: dict[ScenarioKey, dict[tuple[str, str], float]] = {}
        self._solutions: dict[str, dict[ScenarioKey, SolutionEntry]] = {}
        self._history: list[HistoryEntry] = []
        self.analyzed_through_step: int = -1

    # -- weighted scenario maps ----------------------------------------

    def reinforce_goal(self, scenario: ScenarioKey, goal_id: str, reward: float, eta: float | None = None) -> float:
        """Pull the goal's weight toward phi(reward); returns the new weight."""
        table = self._goals.setdefault(scenario, {})
        w = update_weight(table.get(goal_id, 0.0), reward, eta or self.config.default_eta, self.phi)
        table[goal_id] = w
        return w

    def goal_weights(self, scenario: ScenarioKey) -> dict[str, float]:
        return dict(self._goals.get(scenario, {}))

    def retrieve_goal(
        self,
        scenario: ScenarioKey,
        mode: str = "max",
        rng: np.random.Generator | int | None = None,
    ) -> str:
        """Pick a goal for the scenario: "max" takes the highest weight
        (insertion-order tie-break); "sample" draws from the weights
        normalized on the fly."""
        table = self._goals.get(scenario)
        if not table:
            raise NotFound(f"scenario {scenario.buckets} has no goal records")
        if mode == "max":
            return max(table, key=table.__getitem__)
        if mode == "sample":
            gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
            goals = list(table)
            weights = np.array([table[g] for g in goals], dtype=float)
            total = weights.sum()
            if total <= 0.0:
                raise ContractViolation("cannot sample from all-zero goal weights")
            return goals[int(gen.choice(len(goals), p=weights / total))]
        raise ContractViolation(f"unknown retrieval mode {mode!r}")

    def top_goal(self, scenario: ScenarioKey) -> str | None:
        """retrieve_goal(max) that returns None instead of raising when the
        scenario is unknown; convenient inside agent loops."""
        table = self._goals.get(scenario)
        if not table:
            return None
        return max(table, key=table.__getitem__)

    def reinforce_action_outcome(
        self,
        scenario: ScenarioKey,
        action_id: str,
        outcome_id: str,
        reward: float,
        eta: float | None = None,
    ) -> float:
        table = self._outcomes.setdefault(scenario, {})
        key = (action_id, outcome_id)
        w = update_weight(table.get(key, 0.0), reward, eta or self.config.default_eta, self.phi)
        table[key] = w
        return w

    def action_outcome_weights(self, scenario: ScenarioKey) -> dict[tuple[str, str], float]:
        return dict(self._outcomes.get(scenario, {}))

    def retrieve_action_outcome(self, scenario: ScenarioKey) -> tuple[str, str]:
        """Maximum-weight (action, outcome) pair; insertion-order tie-break."""
        table = self._outcomes.get(scenario)
        if not table:
            raise NotFound(f"scenario {scenario.buckets} has no action-outcome records")
        return max(table, key=table.__getitem__)

    # -- solved questions ------------------------------------------------

    def store_solution(
        self,
        question_id: str,
        scenario: ScenarioKey,
        summary_id: str,
        payload: dict | None = None,
        quality: float = 1.0,
    ) -> SolutionEntry:
        entry = SolutionEntry(question_id, scenario.buckets, summary_id, dict(payload or {}), quality)
        self._solutions.setdefault(question_id, {})[scenario] = entry
        return entry

    def lookup_solution(self, question_id: str, scenario: ScenarioKey) -> SolutionHit | None:
        """Exact (question, scenario) match first, then the highest-quality
        entry for the question under any other scenario (flagged
        cross_scenario, insertion-order tie-break), else None."""
        per_scenario = self._solutions.get(question_id)
        if not per_scenario:
            return None
        exact = per_scenario.get(scenario)
        if exact is not None:
            return SolutionHit(exact, cross_scenario=False)
        fallback = max(per_scenario.values(), key=lambda e: e.quality)
        return SolutionHit(fallback, cross_scenario=True)

    # -- chronological history -------------------------------------------

    def record_history(
        self,
        step: int,
        env: EnvState,
        sys: SysState,
        action_id: str | None = None,
        outcome_id: str | None = None,
        is_key_state: bool = True,
    ) -> HistoryEntry:
        if self._history and step <= self._history[-1].step:
            raise ContractViolation(
                f"history steps must be strictly increasing ({step} after {self._history[-1].step})"
            )
        if env.dim != self.norm_env.shape[0] or sys.dim != self.norm_sys.shape[0]:
            raise ContractViolation("recorded state dimensions must match the norm state")
        entry = HistoryEntry(
            step=step,
            delta_env=env.features - self.norm_env,
            delta_sys=sys.features - self.norm_sys,
            action_id=action_id,
            outcome_id=outcome_id,
            scenario=scenario_key(env, sys, self.config.bucket_width),
            is_key_state=is_key_state,
        )
        self._history.append(entry)
        return entry

    def recall(self, k: int | None = None) -> list[HistoryEntry]:
        """Newest-first history, optionally truncated to the k most recent."""
        out = self._history[::-1]
        return out if k is None else out[:k]

    def recall_window(self, from_step: int, to_step: int) -> list[HistoryEntry]:
        """Entries with from_step <= step <= to_step, newest first."""
        return [e for e in self._history[::-1] if from_step <= e.step <= to_step]

    def reconstruct(self, entry: HistoryEntry) -> tuple[EnvState, SysState]:
        env = EnvState(entry.delta_env + self.norm_env, timestamp=entry.step)
        sys = SysState(entry.delta_sys + self.norm_sys, timestamp=entry.step)
        return env, sys

    def entry_at(self, step: int) -> HistoryEntry | None:
        for entry in self._history:
            if entry.step == step:
                return entry
        return None

    def fill_intermediate(
        self, s_first: HistoryEntry, s_last: HistoryEntry, t: int, planner: PlannerPort
    ) -> ScenarioKey:
        """Predict the scenario at step t, strictly between the two anchor
        entries, by delegating to the planner's interpolation."""
        if not s_first.step < t < s_last.step:
            raise ContractViolation(
                f"predict target {t} must lie strictly between anchors "
                f"{s_first.step} and {s_last.step}"
            )
        w = self.config.bucket_width

        def anchor(entry: HistoryEntry) -> tuple[tuple[int, ...], int]:
            env, sys = self.reconstruct(entry)
            return scenario_key(env, sys, w).buckets, entry.step

        req = PlanRequest(
            env=None,
            sys=None,
            goal=None,
            kind="predict",
            context={"first": anchor(s_first), "last": anchor(s_last), "t": t, "bucket_width": w},
        )
        resp = planner.respond(req)
        if resp.predicted_buckets is None:
            raise ContractViolation("planner predict response carried no buckets")
        return ScenarioKey(resp.predicted_buckets)

    def fill_at(self, t: int, planner: PlannerPort) -> ScenarioKey:
        """fill_intermediate with the anchors located automatically: the
        nearest recorded entries on either side of the unrecorded step t."""
        if self.entry_at(t) is not None:
            raise ContractViolation(f"step {t} is already recorded")
        before = after = None
        for entry in self._history:
            if entry.step < t:
                before = entry
            elif entry.step > t:
                after = entry
                break
        if before is None or after is None:
            raise NotFound(f"step {t} has no recorded neighbour on both sides")
        return self.fill_intermediate(before, after, t, planner)

    # -- snapshots ---------------------------------------------------------

    def save_snapshot(self, path: str | Path) -> None:
        body = {
            "version": SNAPSHOT_VERSION,
            "config": {"default_eta": self.config.default_eta, "bucket_width": self.config.bucket_width},
            "norm_env": self.norm_env.tolist(),
            "norm_sys": self.norm_sys.tolist(),
            "goals": [
                {"buckets": list(k.buckets), "weights": dict(v)} for k, v in self._goals.items()
            ],
            "action_outcomes": [
                {
                    "buckets": list(k.buckets),
                    "weights": [
                        {"action": a, "outcome": o, "w": w} for (a, o), w in v.items()
                    ],
                }
                for k, v in self._outcomes.items()
            ],
            "solutions": [
                {
                    "question": e.question_id,
                    "buckets": list(e.buckets),
                    "summary": e.summary_id,
                    "payload": e.payload,
                    "quality": e.quality,
                }
                for per_scenario in self._solutions.values()
                for e in per_scenario.values()
            ],
            "history": [
                {
                    "step": e.step,
                    "delta_env": e.delta_env.tolist(),
                    "delta_sys": e.delta_sys.tolist(),
                    "action": e.action_id,
                    "outcome": e.outcome_id,
                    "buckets": list(e.scenario.buckets) if e.scenario is not None else None,
                    "key": e.is_key_state,
                }
                for e in self._history
            ],
            "analyzed_through_step": self.analyzed_through_step,
        }
        Path(path).write_text(json.dumps(body, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load_snapshot(cls, path: str | Path, phi: Callable[[float], float] | None = None) -> "ScenarioMemory":
        body = json.loads(Path(path).read_text(encoding="utf-8"))
        version = body.get("version")
        if version != SNAPSHOT_VERSION:
            raise ContractViolation(f"unsupported snapshot version {version!r}")
        mem = cls(
            norm_env=np.asarray(body["norm_env"], dtype=float),
            norm_sys=np.asarray(body["norm_sys"], dtype=float),
            config=MemoryConfig(**body["config"]),
            phi=phi,
        )
        for row in body["goals"]:
            mem._goals[ScenarioKey(tuple(row["buckets"]))] = {
                str(g): float(w) for g, w in row["weights"].items()
            }
        for row in body["action_outcomes"]:
            mem._outcomes[ScenarioKey(tuple(row["buckets"]))] = {
                (r["action"], r["outcome"]): float(r["w"]) for r in row["weights"]
            }
        for row in body["solutions"]:
            key = ScenarioKey(tuple(row["buckets"]))
            entry = SolutionEntry(
                row["question"], key.buckets, row["summary"], row["payload"], float(row.get("quality", 1.0))
            )
            mem._solutions.setdefault(row["question"], {})[key] = entry
        for row in body["history"]:
            raw_buckets = row.get("buckets")
            mem._history.append(
                HistoryEntry(
                    step=int(row["step"]),
                    delta_env=np.asarray(row["delta_env"], dtype=float),
                    delta_sys=np.asarray(row["delta_sys"], dtype=float),
                    action_id=row["action"],
                    outcome_id=row["outcome"],
                    scenario=ScenarioKey(tuple(raw_buckets)) if raw_buckets is not None else None,
                    is_key_state=bool(row.get("key", True)),
                )
            )
        mem.analyzed_through_step = int(body["analyzed_through_step"])
        return mem
