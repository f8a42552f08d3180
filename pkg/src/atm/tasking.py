"""Goal-conditioned task lifecycle.

Tasks wrap a goal, a plan (ordered action ids), and snapshots of the states
they were created under.  The engine deletes tasks whose utility falls
strictly below theta_delete, admits candidates strictly above theta_create
(highest utility first, capped by max_active), and suspends/reactivates
along the only legal status path active <-> suspended with deletion
terminal.  Utility blends the latest measurement score with the recent
compliance rate.  Spare time is modelled as an explicit analysis budget
spent on the unanalyzed tail of memory; reflection summarizes a trace down
to its first, last, and violation steps before asking the planner for
structured suggestions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractViolation, PlannerError
from .memory import ScenarioMemory
from .patterns import EventStream, mine_coherence
from .planner import ImprovementSuggestion, PlannerPort, PlanRequest
from .selection import MethodSelector
from .world import EnvState, ScenarioKey, SysState, concat_state, scenario_key

__all__ = [
    "Goal",
    "Task",
    "TaskSetConfig",
    "StepCostWeights",
    "StepMetrics",
    "ImprovedPlan",
    "Proposal",
    "ImprovementRecord",
    "compliance",
    "set_status",
    "step_task",
    "update_task_set",
    "utility",
    "record_compliance",
    "run_spare_time",
    "reflect",
    "step_cost",
    "improve_steps",
    "DEFAULT_COMPLIANCE_WINDOW",
    "FAILURE_OUTCOME_PREFIX",
]

log = logging.getLogger(__name__)

DEFAULT_COMPLIANCE_WINDOW = 20
FAILURE_OUTCOME_PREFIX = "fail"

STATUSES = ("active", "suspended", "deleted")
_ALLOWED_TRANSITIONS = {
    ("active", "suspended"),
    ("suspended", "active"),
    ("active", "deleted"),
    ("suspended", "deleted"),
}
TASK_KINDS = ("self_improvement", "adaptive", "goal_driven")


@dataclass
class Goal:
    """A target region in (env, sys) feature space.

    feature_indices selects which coordinates of the concatenated state the
    goal constrains; None means all of them.
    """

    goal_id: str
    kind: str  # "explicit" | "implicit"
    target_features: np.ndarray
    tolerance: float
    feature_indices: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("explicit", "implicit"):
            raise ContractViolation(f"goal kind must be explicit|implicit, got {self.kind!r}")
        self.target_features = np.asarray(self.target_features, dtype=float)
        if self.tolerance <= 0.0:
            raise ContractViolation(f"tolerance must be positive, got {self.tolerance}")
        if self.feature_indices is not None:
            self.feature_indices = tuple(int(i) for i in self.feature_indices)
            if len(self.feature_indices) != self.target_features.shape[0]:
                raise ContractViolation("feature_indices must align with target_features")


def compliance(goal: Goal, e: EnvState, s: SysState) -> int:
    """1 iff the projected state sits within the goal's closed tolerance ball."""
    joint = concat_state(e, s)
    if goal.feature_indices is None:
        projected = joint
    else:
        if max(goal.feature_indices) >= joint.shape[0]:
            raise ContractViolation(
                f"goal {goal.goal_id!r} indexes feature {max(goal.feature_indices)} "
                f"but the joint state has {joint.shape[0]}"
            )
        projected = joint[list(goal.feature_indices)]
    if projected.shape != goal.target_features.shape:
        raise ContractViolation(
            f"goal {goal.goal_id!r} targets {goal.target_features.shape[0]} features, "
            f"state projects to {projected.shape[0]}"
        )
    gap = projected - goal.target_features
    return 1 if float(np.dot(gap, gap)) <= goal.tolerance * goal.tolerance else 0


@dataclass
class Task:
    task_id: str
    goal: Goal
    actions: list[str]
    env_snapshot: EnvState
    sys_snapshot: SysState
    utility: float = 0.0
    status: str = "active"
    kind: str = "goal_driven"
    cursor: int = 0
    compliance_history: list[int] = field(default_factory=list)
    completed: bool = False

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ContractViolation(f"unknown status {self.status!r}")
        if self.kind not in TASK_KINDS:
            raise ContractViolation(f"unknown task kind {self.kind!r}")

    @property
    def remaining_actions(self) -> list[str]:
        return self.actions[self.cursor :]


def set_status(task: Task, new_status: str) -> None:
    """Move along the lifecycle graph; same-status sets are no-ops."""
    if new_status not in STATUSES:
        raise ContractViolation(f"unknown status {new_status!r}")
    if new_status == task.status:
        return
    if (task.status, new_status) not in _ALLOWED_TRANSITIONS:
        raise ContractViolation(f"illegal status transition {task.status} -> {new_status}")
    task.status = new_status


def record_compliance(task: Task, e: EnvState, s: SysState) -> int:
    """Evaluate and append the step's compliance bit; returns it."""
    bit = compliance(task.goal, e, s)
    task.compliance_history.append(bit)
    return bit


def utility(
    task: Task,
    e: EnvState,
    s: SysState,
    measurement_score: float,
    window: int = DEFAULT_COMPLIANCE_WINDOW,
) -> float:
    """0.5 * measurement score + 0.5 * compliance rate over the recent window.

    With no recorded history the current compliance bit stands in for the
    rate, so a fresh task is judged by where it starts.
    """
    if not 0.0 <= measurement_score <= 1.0:
        raise ContractViolation(f"measurement_score must lie in [0, 1], got {measurement_score}")
    if window < 1:
        raise ContractViolation(f"window must be >= 1, got {window}")
    recent = task.compliance_history[-window:]
    rate = sum(recent) / len(recent) if recent else float(compliance(task.goal, e, s))
    return 0.5 * measurement_score + 0.5 * rate


def step_task(
    task: Task, e: EnvState, s: SysState, planner: PlannerPort, bucket_width: float = 1.0
) -> tuple[str | None, bool]:
    """Emit the task's next action, replanning first whenever compliance fails.

    Returns (action_id, replanned); action_id is None when the plan is
    exhausted while compliant, which completes (and thereby deletes) the
    task.  A planner failure suspends the task and re-raises.
    """
    if task.status != "active":
        raise ContractViolation(f"cannot step task {task.task_id!r} with status {task.status}")
    compliant = compliance(task.goal, e, s)
    replanned = False
    if not compliant:
        key = scenario_key(e, s, bucket_width)
        joint = concat_state(e, s)
        if task.goal.feature_indices is None:
            deviation = joint - task.goal.target_features
        else:
            deviation = joint[list(task.goal.feature_indices)] - task.goal.target_features
        req = PlanRequest(
            env=e,
            sys=s,
            goal=task.goal,
            kind="replan",
            context={"scenario": key, "deviation": deviation, "rho": 0.0},
        )
        try:
            resp = planner.respond(req)
        except PlannerError:
            set_status(task, "suspended")
            raise
        task.actions = task.actions[: task.cursor] + list(resp.actions)
        replanned = True
    if task.cursor >= len(task.actions):
        task.completed = True
        set_status(task, "deleted")
        return None, replanned
    action = task.actions[task.cursor]
    task.cursor += 1
    return action, replanned


def update_task_set(
    tasks: Sequence[Task],
    candidates: Sequence[Task],
    utilities: dict[str, float],
    cfg: "TaskSetConfig",
) -> list[Task]:
    """Delete below theta_delete, admit above theta_create, cap active tasks."""
    for task in list(tasks) + list(candidates):
        if task.task_id not in utilities:
            raise ContractViolation(f"no utility supplied for task {task.task_id!r}")
    survivors: list[Task] = []
    for task in tasks:
        task.utility = utilities[task.task_id]
        if task.utility < cfg.theta_delete:
            set_status(task, "deleted")
        else:
            survivors.append(task)
    active_count = sum(1 for t in survivors if t.status == "active")
    eligible = [c for c in candidates if utilities[c.task_id] > cfg.theta_create]
    eligible.sort(key=lambda c: utilities[c.task_id], reverse=True)
    for cand in eligible:
        if active_count >= cfg.max_active:
            break
        cand.utility = utilities[cand.task_id]
        cand.status = "active"
        survivors.append(cand)
        active_count += 1
    return survivors


@dataclass
class TaskSetConfig:
    theta_delete: float = 0.2
    theta_create: float = 0.6
    max_active: int = 4

    def __post_init__(self):
        if not self.theta_delete < self.theta_create:
            raise ContractViolation(
                f"theta_delete ({self.theta_delete}) must be below theta_create ({self.theta_create})"
            )
        if self.max_active < 1:
            raise ContractViolation(f"max_active must be >= 1, got {self.max_active}")


# ---------------------------------------------------------------------------
# spare-time self-improvement and reflection
# ---------------------------------------------------------------------------


@dataclass
class Proposal:
    kind: str  # "candidate_task" | "weight_update" | "step_replacement" | "exploration"
    buckets: tuple[int, ...] | None
    detail: dict = field(default_factory=dict)


@dataclass
class ImprovementRecord:
    anchors: list[tuple[int, tuple[int, ...], str]]
    suggestions: list[ImprovementSuggestion] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not self.suggestions


def reflect(
    trace: Sequence[tuple[ScenarioKey, str]],
    e: EnvState,
    s: SysState,
    planner: PlannerPort,
    violation_steps: Iterable[int] = (),
    memory: ScenarioMemory | None = None,
) -> ImprovementRecord:
    """Summarize the trace to (first, last, violations) anchors and ask the
    planner for improvement suggestions; planner failures yield an empty
    record rather than an exception."""
    if not trace:
        raise ContractViolation("cannot reflect over an empty trace")
    violations = {i for i in violation_steps if 0 <= i < len(trace)}
    anchor_indices = sorted({0, len(trace) - 1} | violations)
    anchors = [(i, trace[i][0].buckets, trace[i][1]) for i in anchor_indices]
    req = PlanRequest(
        env=e,
        sys=s,
        goal=None,
        kind="reflect",
        context={"anchors": anchors, "violations": sorted(violations)},
    )
    try:
        resp = planner.respond(req)
    except PlannerError as exc:
        log.warning("reflection planner failed (%s); recording nothing", exc)
        return ImprovementRecord(anchors=anchors)
    record = ImprovementRecord(anchors=anchors, suggestions=list(resp.suggestions))
    if memory is not None and record.suggestions:
        last_key = ScenarioKey(trace[-1][0].buckets)
        memory.store_solution(
            question_id="reflection",
            scenario=last_key,
            summary_id=record.suggestions[0].rationale_code,
            payload={"suggestions": [sug.to_dict() for sug in record.suggestions]},
        )
    return record


def run_spare_time(
    memory: ScenarioMemory,
    budget: int,
    mine_window: int = 1,
    theta_cooccur: float = 0.5,
    selector: MethodSelector | None = None,
    planner: PlannerPort | None = None,
    failure_marker: str = FAILURE_OUTCOME_PREFIX,
) -> list[Proposal]:
    """Spend up to `budget` analysis steps on the newest unanalyzed history.

    Every failure outcome produces a candidate-task proposal for its
    scenario; mined coherent pairs become weight-update proposals; when a
    selector is supplied and failures were seen, the least-pulled method is
    proposed for exploration; when a planner is supplied, one reflection
    over the scanned slice contributes step-replacement proposals.
    """
    if budget <= 0:
        raise ContractViolation(f"analysis budget must be positive, got {budget}")
    backlog = [h for h in memory.recall() if h.step > memory.analyzed_through_step]
    if not backlog:
        return []
    scanned = backlog[:budget]  # newest first
    proposals: list[Proposal] = []
    width = memory.config.bucket_width

    failures = []
    for entry in scanned:
        if entry.outcome_id is not None and entry.outcome_id.startswith(failure_marker):
            env, sys = memory.reconstruct(entry)
            key = scenario_key(env, sys, width)
            failures.append((entry, key))
            proposals.append(
                Proposal(
                    kind="candidate_task",
                    buckets=key.buckets,
                    detail={"step": entry.step, "outcome": entry.outcome_id},
                )
            )

    chronological = sorted(scanned, key=lambda h: h.step)
    events = [
        (entry.action_id, entry.step)
        for entry in chronological
        if entry.action_id is not None
    ] + [
        (entry.outcome_id, entry.step)
        for entry in chronological
        if entry.outcome_id is not None
    ]
    if events:
        stream = EventStream.from_tuples(sorted(events, key=lambda row: row[1]))
        coherent = mine_coherence(stream, mine_window, theta_cooccur)
        for (i, j), score in sorted(coherent.scores.items()):
            proposals.append(
                Proposal(kind="weight_update", buckets=None, detail={"pair": (i, j), "score": score})
            )

    if selector is not None and failures:
        least = min(range(len(selector.method_ids)), key=lambda k: selector.pulls[k])
        proposals.append(
            Proposal(
                kind="exploration",
                buckets=failures[0][1].buckets,
                detail={"method_id": selector.method_ids[least]},
            )
        )

    if planner is not None and len(chronological) >= 1:
        trace = []
        violation_steps = []
        for idx, entry in enumerate(chronological):
            env, sys = memory.reconstruct(entry)
            trace.append((scenario_key(env, sys, width), entry.action_id or ""))
            if entry.outcome_id is not None and entry.outcome_id.startswith(failure_marker):
                violation_steps.append(idx)
        env, sys = memory.reconstruct(chronological[-1])
        record = reflect(trace, env, sys, planner, violation_steps=violation_steps)
        for sug in record.suggestions:
            if sug.proposed_change != "keep":
                proposals.append(
                    Proposal(
                        kind="step_replacement",
                        buckets=trace[sug.target_step][0].buckets if sug.target_step < len(trace) else None,
                        detail=sug.to_dict(),
                    )
                )

    memory.analyzed_through_step = scanned[0].step
    return proposals


# ---------------------------------------------------------------------------
# step-level corrective adjustment
# ---------------------------------------------------------------------------


@dataclass
class StepCostWeights:
    lambda_time: float = 1.0
    lambda_energy: float = 0.0
    lambda_risk: float = 0.0
    theta_eff: float = 1.0
    s_min: float = 0.0

    def __post_init__(self):
        for name in ("lambda_time", "lambda_energy", "lambda_risk"):
            if getattr(self, name) < 0.0:
                raise ContractViolation(f"{name} must be >= 0")
        if self.lambda_time == self.lambda_energy == self.lambda_risk == 0.0:
            raise ContractViolation("at least one cost weight must be positive")


@dataclass
class StepMetrics:
    """Per-step action with its cost inputs and a safety score."""

    action_id: str
    time: float = 0.0
    energy: float = 0.0
    risk: float = 0.0
    safety: float = 1.0
    tactic: str = "reduce"  # "reduce" | "suspend" | "revert" (tier for alternatives)

    def __post_init__(self):
        for name in ("time", "energy", "risk", "safety"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ContractViolation(f"{name} must be finite, got {value}")
        if self.tactic not in ("reduce", "suspend", "revert"):
            raise ContractViolation(f"unknown tactic {self.tactic!r}")


_TACTIC_TIER = {"reduce": 0, "suspend": 1, "revert": 2}


def step_cost(m: StepMetrics, w: StepCostWeights) -> float:
    return w.lambda_time * m.time + w.lambda_energy * m.energy + w.lambda_risk * m.risk


@dataclass
class ImprovedPlan:
    steps: list[StepMetrics]
    replaced: dict[int, str] = field(default_factory=dict)  # index -> new action_id
    flagged: list[int] = field(default_factory=list)  # costly steps left in place


def improve_steps(
    actions: Sequence[StepMetrics],
    w: StepCostWeights,
    alternatives: dict[str, Sequence[StepMetrics]],
    reward_check: Callable[[StepMetrics, StepMetrics], bool] | None = None,
) -> ImprovedPlan:
    """Substitute costly steps (C > theta_eff) with the cheapest feasible
    alternative, trying tactics in the order reduce -> suspend -> revert.

    Feasible means: safety >= s_min, cost not above the original step's, and
    reward_check (when given) accepts the swap.  Steps with no feasible
    alternative stay and are flagged.  The revised plan therefore never
    costs more than the original and never dips below the safety floor.
    """
    revised: list[StepMetrics] = []
    plan = ImprovedPlan(steps=revised)
    for idx, step in enumerate(actions):
        cost = step_cost(step, w)
        if cost <= w.theta_eff:
            revised.append(step)
            continue
        best: StepMetrics | None = None
        best_rank: tuple[int, float] | None = None
        for alt in alternatives.get(step.action_id, []):
            alt_cost = step_cost(alt, w)
            if alt.safety < w.s_min or alt_cost > cost:
                continue
            if reward_check is not None and not reward_check(step, alt):
                continue
            rank = (_TACTIC_TIER[alt.tactic], alt_cost)
            if best_rank is None or rank < best_rank:
                best, best_rank = alt, rank
        if best is None:
            revised.append(step)
            plan.flagged.append(idx)
        else:
            revised.append(best)
            plan.replaced[idx] = best.action_id
    return plan
