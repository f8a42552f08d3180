"""Pluggable planner port: the seam where an external reasoning engine sits.

All in-repo behaviour is served by ScriptedPlanner, a deterministic pure
function of (request, fixture tables): plan/replan are table lookups with a
configured default, predict is linear interpolation between bucket-center
states, reflect is a rule-based summarizer, intuition is a single table probe.

ExternalPlanner speaks the wire protocol: HTTP POST of a JSON body mirroring
PlanRequest to a single endpoint (env var ATM_PLANNER_URL), JSON response
mirroring PlanResponse, with a scripted fallback on timeout, transport or
schema failure. External failures must never crash the agent loop.
"""

from __future__ import annotations

import json
import logging
import math
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Any, Protocol

import numpy as np

from .errors import (
    ContractViolation,
    NotFound,
    PlannerSchemaError,
    PlannerTimeout,
    PlannerTransportError,
)
from .world import EnvState, ScenarioKey

__all__ = [
    "PlanRequest",
    "PlanResponse",
    "ImprovementSuggestion",
    "PlannerPort",
    "ScriptedPlanner",
    "ExternalPlanner",
    "plan",
    "replan",
    "external_call",
    "DEFAULT_TIMEOUT_MS",
    "PLANNER_URL_ENV_VAR",
]

log = logging.getLogger(__name__)

PLANNER_URL_ENV_VAR = "ATM_PLANNER_URL"
DEFAULT_TIMEOUT_MS = 2000

KINDS = ("plan", "replan", "predict", "reflect", "intuition")


@dataclass
class PlanRequest:
    """One planner invocation.

    kind determines which context fields must be present:
      replan  -> context["deviation"] (vector), context["suffix"] (remaining
                 stages as [(expected_env_features, action_id), ...]) and
                 context["rho"] (contraction factor)
      predict -> context["first"]/["last"] = (buckets, step), context["t"],
                 context["bucket_width"]
      reflect -> context["anchors"] = [(index, buckets, action_id), ...]
    """

    env: EnvState | None
    sys: Any
    goal: Any  # tasking Goal (duck-typed: needs .goal_id) or None
    kind: str
    context: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractViolation(f"unknown request kind {self.kind!r}")

    @property
    def goal_id(self) -> str | None:
        if self.goal is not None and hasattr(self.goal, "goal_id"):
            return self.goal.goal_id
        return self.context.get("goal_id")


@dataclass
class ImprovementSuggestion:
    """Structured output of a reflect call."""

    target_step: int
    proposed_change: str  # e.g. "replan_from_here", "replace_action", "keep"
    rationale_code: str  # e.g. "compliance_violation", "cost_above_threshold"

    def to_dict(self) -> dict:
        return {
            "target_step": self.target_step,
            "proposed_change": self.proposed_change,
            "rationale_code": self.rationale_code,
        }


@dataclass
class PlanResponse:
    """Planner output; plan/replan responses carry >=1 action with matching envs."""

    actions: list[str] = field(default_factory=list)
    expected_envs: list[np.ndarray] = field(default_factory=list)
    suggestions: list[ImprovementSuggestion] = field(default_factory=list)
    predicted_buckets: tuple[int, ...] | None = None


class PlannerPort(Protocol):
    def respond(self, req: PlanRequest) -> PlanResponse: ...


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ContractViolation(msg)


@dataclass
class ScriptedPlanner:
    """Deterministic planner backed by fixture tables.

    plan_table maps (buckets, goal_id) -> (actions, expected env feature
    rows); intuition_table maps buckets -> action_id. default_plan /
    default_action serve misses; with neither, lookups raise NotFound.
    """

    plan_table: dict[tuple[tuple[int, ...], str], tuple[list[str], list]] = field(
        default_factory=dict
    )
    intuition_table: dict[tuple[int, ...], str] = field(default_factory=dict)
    default_plan: tuple[list[str], list] | None = None
    default_action: str | None = None

    def respond(self, req: PlanRequest) -> PlanResponse:
        handler = {
            "plan": self._plan,
            "replan": self._replan,
            "predict": self._predict,
            "reflect": self._reflect,
            "intuition": self._intuition,
        }[req.kind]
        return handler(req)

    # -- plan / replan -------------------------------------------------

    def _lookup(self, buckets: tuple[int, ...] | None, goal_id: str | None):
        if buckets is not None and goal_id is not None:
            hit = self.plan_table.get((buckets, goal_id))
            if hit is not None:
                return hit
        if self.default_plan is not None:
            return self.default_plan
        raise NotFound(f"no plan for scenario {buckets} goal {goal_id!r} and no default")

    def _scenario_buckets(self, req: PlanRequest) -> tuple[int, ...] | None:
        raw = req.context.get("scenario")
        if isinstance(raw, ScenarioKey):
            return raw.buckets
        if raw is not None:
            return tuple(int(b) for b in raw)
        return None

    def _plan(self, req: PlanRequest) -> PlanResponse:
        actions, envs = self._lookup(self._scenario_buckets(req), req.goal_id)
        return PlanResponse(
            actions=list(actions),
            expected_envs=[np.asarray(e, dtype=float) for e in envs],
        )

    def _replan(self, req: PlanRequest) -> PlanResponse:
        ctx = req.context
        _require("deviation" in ctx and "rho" in ctx, "replan context needs deviation and rho")
        deviation = np.asarray(ctx["deviation"], dtype=float)
        rho = float(ctx["rho"])
        suffix = ctx.get("suffix")
        if suffix is None:
            # no suffix supplied: produce a fresh plan for the current scenario
            actions, envs = self._lookup(self._scenario_buckets(req), req.goal_id)
            suffix = list(zip(envs, actions))
        # shift every remaining expected env toward the observation: with
        # deviation = observed - expected, adding (1 - rho) * deviation leaves
        # only a rho fraction of the original gap
        correction = (1.0 - rho) * deviation
        actions, envs = [], []
        for expected, action in suffix:
            envs.append(np.asarray(expected, dtype=float) + correction)
            actions.append(action)
        return PlanResponse(actions=actions, expected_envs=envs)

    # -- predict -------------------------------------------------------

    def _predict(self, req: PlanRequest) -> PlanResponse:
        ctx = req.context
        for key in ("first", "last", "t", "bucket_width"):
            _require(key in ctx, f"predict context needs {key!r}")
        (b1, t1), (b2, t2) = ctx["first"], ctx["last"]
        t, w = ctx["t"], float(ctx["bucket_width"])
        _require(t1 < t < t2, "predict target step must lie strictly between endpoints")
        frac = (t - t1) / (t2 - t1)
        buckets = []
        for lo, hi in zip(b1, b2):
            c1, c2 = (lo + 0.5) * w, (hi + 0.5) * w
            buckets.append(int(math.floor((c1 + frac * (c2 - c1)) / w)))
        return PlanResponse(predicted_buckets=tuple(buckets))

    # -- reflect -------------------------------------------------------

    def _reflect(self, req: PlanRequest) -> PlanResponse:
        anchors = req.context.get("anchors")
        _require(anchors is not None, "reflect context needs anchors")
        suggestions = []
        for index, _buckets, _action in anchors:
            code = "compliance_violation" if index in req.context.get("violations", ()) else "anchor"
            change = "replan_from_here" if code == "compliance_violation" else "keep"
            suggestions.append(ImprovementSuggestion(index, change, code))
        return PlanResponse(suggestions=suggestions)

    # -- intuition -----------------------------------------------------

    def _intuition(self, req: PlanRequest) -> PlanResponse:
        buckets = self._scenario_buckets(req)
        action = self.intuition_table.get(buckets) if buckets is not None else None
        if action is None:
            action = self.default_action
        if action is None:
            raise NotFound(f"no intuitive action for scenario {buckets} and no default")
        return PlanResponse(actions=[action])


def plan(planner: PlannerPort, req: PlanRequest) -> PlanResponse:
    """Run a kind=plan request and validate the response invariant."""
    _require(req.kind == "plan", "plan() requires kind='plan'")
    resp = planner.respond(req)
    _require(len(resp.actions) >= 1, "plan response must carry at least one action")
    _require(
        len(resp.expected_envs) == len(resp.actions),
        "plan response actions and expected_envs must align",
    )
    return resp


def replan(planner: PlannerPort, req: PlanRequest) -> PlanResponse:
    """Run a kind=replan request (checkpoint context required)."""
    _require(req.kind == "replan", "replan() requires kind='replan'")
    return planner.respond(req)


# ---------------------------------------------------------------------------
# wire protocol
# ---------------------------------------------------------------------------


def _encode_request(req: PlanRequest) -> bytes:
    def vec(x):
        return None if x is None else [float(v) for v in x.features]

    def jsonable(obj):
        if isinstance(obj, ScenarioKey):
            return list(obj.buckets)
        if isinstance(obj, np.ndarray):
            return [float(v) for v in obj]
        if isinstance(obj, dict):
            return {k: jsonable(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [jsonable(v) for v in obj]
        return obj

    body = {
        "env": vec(req.env),
        "sys": vec(req.sys),
        "goal_id": req.goal_id,
        "kind": req.kind.lower(),
        "context": jsonable(req.context),
    }
    return json.dumps(body).encode("utf-8")


def _decode_response(raw: bytes) -> PlanResponse:
    try:
        body = json.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise PlannerSchemaError(f"response is not valid JSON: {exc}") from exc
    if not isinstance(body, dict):
        raise PlannerSchemaError("response body must be a JSON object")
    actions = body.get("actions", [])
    envs = body.get("expected_envs", [])
    suggestions = body.get("suggestions", [])
    if not isinstance(actions, list) or not all(isinstance(a, str) for a in actions):
        raise PlannerSchemaError("actions must be a list of strings")
    if not isinstance(envs, list):
        raise PlannerSchemaError("expected_envs must be a list of numeric lists")
    decoded_envs = []
    for row in envs:
        if not isinstance(row, list) or not all(isinstance(v, (int, float)) for v in row):
            raise PlannerSchemaError("expected_envs rows must be numeric lists")
        decoded_envs.append(np.asarray(row, dtype=float))
    decoded_suggestions = []
    for s in suggestions:
        if not isinstance(s, dict) or not {"target_step", "proposed_change", "rationale_code"} <= set(s):
            raise PlannerSchemaError("malformed suggestion record")
        decoded_suggestions.append(
            ImprovementSuggestion(int(s["target_step"]), str(s["proposed_change"]), str(s["rationale_code"]))
        )
    predicted = body.get("predicted_buckets")
    if predicted is not None:
        if not isinstance(predicted, list) or not all(isinstance(v, int) for v in predicted):
            raise PlannerSchemaError("predicted_buckets must be a list of integers")
        predicted = tuple(predicted)
    return PlanResponse(
        actions=actions,
        expected_envs=decoded_envs,
        suggestions=decoded_suggestions,
        predicted_buckets=predicted,
    )


def external_call(req: PlanRequest, endpoint: str, timeout_ms: int = DEFAULT_TIMEOUT_MS) -> PlanResponse:
    """POST the request to the external planner endpoint and validate the reply.

    Raises PlannerTimeout / PlannerTransportError / PlannerSchemaError; never
    returns a half-parsed response.
    """
    if not endpoint:
        raise ContractViolation("external_call requires a configured endpoint")
    http_req = urllib.request.Request(
        endpoint, data=_encode_request(req), headers={"Content-Type": "application/json"}
    )
    try:
        with urllib.request.urlopen(http_req, timeout=timeout_ms / 1000.0) as resp:
            raw = resp.read()
    except TimeoutError as exc:
        raise PlannerTimeout(f"planner at {endpoint} timed out after {timeout_ms} ms") from exc
    except urllib.error.URLError as exc:
        if isinstance(exc.reason, TimeoutError):
            raise PlannerTimeout(f"planner at {endpoint} timed out after {timeout_ms} ms") from exc
        raise PlannerTransportError(f"planner at {endpoint} unreachable: {exc}") from exc
    except OSError as exc:
        raise PlannerTransportError(f"planner at {endpoint} failed: {exc}") from exc
    resp = _decode_response(raw)
    if req.kind in ("plan", "replan"):
        if len(resp.actions) < 1 or len(resp.expected_envs) != len(resp.actions):
            raise PlannerSchemaError("plan/replan response must carry aligned actions and envs")
    return resp


@dataclass
class ExternalPlanner:
    """Planner that calls the wire endpoint and falls back to a scripted one.

    The fallback count is exposed so tests (and reports) can verify that one
    failed call produces exactly one fallback invocation.
    """

    endpoint: str
    fallback: ScriptedPlanner
    timeout_ms: int = DEFAULT_TIMEOUT_MS
    fallback_count: int = 0

    def respond(self, req: PlanRequest) -> PlanResponse:
        try:
            return external_call(req, self.endpoint, self.timeout_ms)
        except (PlannerTimeout, PlannerTransportError, PlannerSchemaError) as exc:
            self.fallback_count += 1
            log.warning("external planner failed (%s); using scripted fallback", exc)
            return self.fallback.respond(req)
