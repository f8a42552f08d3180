import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atm.errors import ContractViolation, PlannerTimeout
from atm.memory import ScenarioMemory
from atm.planner import ScriptedPlanner
from atm.selection import MethodSelector
from atm.tasking import (
    Goal,
    ImprovedPlan,
    Proposal,
    StepCostWeights,
    StepMetrics,
    Task,
    TaskSetConfig,
    compliance,
    improve_steps,
    record_compliance,
    reflect,
    run_spare_time,
    set_status,
    step_cost,
    step_task,
    update_task_set,
    utility,
)
from atm.world import EnvState, ScenarioKey, SysState


def goal(target=(0.0, 0.0), tol=1.0, gid="g", indices=None):
    return Goal(
        goal_id=gid,
        kind="explicit",
        target_features=np.asarray(target, dtype=float),
        tolerance=tol,
        feature_indices=indices,
    )


def make_task(tid="t0", actions=("a", "b"), target=(0.0, 0.0), tol=1.0, **kw):
    return Task(
        task_id=tid,
        goal=goal(target=target, tol=tol),
        actions=list(actions),
        env_snapshot=EnvState([0.0]),
        sys_snapshot=SysState([0.0]),
        **kw,
    )


class CountingPlanner:
    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def respond(self, req):
        self.calls += 1
        return self.inner.respond(req)


class FailingPlanner:
    def respond(self, req):
        raise PlannerTimeout("injected")


# ---------------------------------------------------------------------------
# compliance
# ---------------------------------------------------------------------------


def test_state_at_target_complies():
    assert compliance(goal(), EnvState([0.0]), SysState([0.0])) == 1


def test_boundary_is_inside_the_closed_ball():
    # distance exactly equal to the tolerance still counts
    assert compliance(goal(tol=1.0), EnvState([1.0]), SysState([0.0])) == 1


def test_twice_tolerance_fails():
    assert compliance(goal(tol=1.0), EnvState([2.0]), SysState([0.0])) == 0


def test_feature_projection():
    g = goal(target=(5.0,), indices=(0,))
    assert compliance(g, EnvState([5.0]), SysState([999.0])) == 1
    assert compliance(g, EnvState([3.0]), SysState([5.0])) == 0


def test_projection_index_out_of_range():
    g = goal(target=(0.0,), indices=(7,))
    with pytest.raises(ContractViolation):
        compliance(g, EnvState([0.0]), SysState([0.0]))


def test_target_shape_mismatch():
    with pytest.raises(ContractViolation):
        compliance(goal(target=(0.0,)), EnvState([0.0]), SysState([0.0]))


def test_goal_validation():
    with pytest.raises(ContractViolation):
        goal(tol=0.0)
    with pytest.raises(ContractViolation):
        Goal(goal_id="g", kind="wish", target_features=np.zeros(1), tolerance=1.0)
    with pytest.raises(ContractViolation):
        goal(target=(0.0, 0.0), indices=(0,))  # misaligned projection


# ---------------------------------------------------------------------------
# status lifecycle
# ---------------------------------------------------------------------------


def test_suspend_and_reactivate():
    t = make_task()
    set_status(t, "suspended")
    assert t.status == "suspended"
    set_status(t, "active")
    assert t.status == "active"


def test_deletion_is_terminal():
    t = make_task()
    set_status(t, "deleted")
    for target in ("active", "suspended"):
        with pytest.raises(ContractViolation):
            set_status(t, target)


def test_same_status_is_noop():
    t = make_task()
    set_status(t, "active")
    assert t.status == "active"


def test_unknown_status_rejected():
    with pytest.raises(ContractViolation):
        set_status(make_task(), "paused")
    with pytest.raises(ContractViolation):
        make_task(status="zombie")


@given(
    src=st.sampled_from(["active", "suspended", "deleted"]),
    dst=st.sampled_from(["active", "suspended", "deleted"]),
)
def test_transition_graph_is_exactly_the_allowed_set(src, dst):
    t = make_task(status=src)
    legal = src == dst or (src, dst) in {
        ("active", "suspended"),
        ("suspended", "active"),
        ("active", "deleted"),
        ("suspended", "deleted"),
    }
    if legal:
        set_status(t, dst)
        assert t.status == dst
    else:
        with pytest.raises(ContractViolation):
            set_status(t, dst)


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------


def test_compliant_step_passes_plan_through():
    t = make_task(actions=("go", "stop"))
    planner = CountingPlanner(ScriptedPlanner())
    action, replanned = step_task(t, EnvState([0.0]), SysState([0.0]), planner)
    assert (action, replanned) == ("go", False)
    assert planner.calls == 0
    assert t.cursor == 1


def test_noncompliant_step_replans_exactly_once():
    t = make_task(actions=("old",))
    table = {((5, 0), "g"): (["corrective", "corrective2"], [[0.0, 0.0], [0.0, 0.0]])}
    planner = CountingPlanner(ScriptedPlanner(plan_table=table))
    action, replanned = step_task(t, EnvState([5.0]), SysState([0.0]), planner)
    assert planner.calls == 1
    assert replanned is True
    assert action == "corrective"
    assert t.actions == ["corrective", "corrective2"]


def test_replan_preserves_consumed_prefix():
    t = make_task(actions=("done", "old"), cursor=1)
    planner = ScriptedPlanner(default_plan=(["fix"], [[0.0, 0.0]]))
    action, replanned = step_task(t, EnvState([5.0]), SysState([0.0]), planner)
    assert action == "fix"
    assert t.actions == ["done", "fix"]


def test_exhausted_compliant_task_completes():
    t = make_task(actions=("only",), cursor=1)
    action, replanned = step_task(t, EnvState([0.0]), SysState([0.0]), ScriptedPlanner())
    assert action is None and replanned is False
    assert t.completed is True
    assert t.status == "deleted"


def test_planner_failure_suspends_and_reraises():
    t = make_task(actions=("a",))
    with pytest.raises(PlannerTimeout):
        step_task(t, EnvState([5.0]), SysState([0.0]), FailingPlanner())
    assert t.status == "suspended"


def test_cannot_step_inactive_task():
    t = make_task(status="suspended")
    with pytest.raises(ContractViolation):
        step_task(t, EnvState([0.0]), SysState([0.0]), ScriptedPlanner())


# ---------------------------------------------------------------------------
# utility and the task-set update
# ---------------------------------------------------------------------------


def test_utility_perfect():
    t = make_task()
    assert utility(t, EnvState([0.0]), SysState([0.0]), measurement_score=1.0) == 1.0


def test_utility_hopeless():
    t = make_task()
    assert utility(t, EnvState([9.0]), SysState([0.0]), measurement_score=0.0) == 0.0


def test_utility_blend_example():
    # 0.5 * 0.6 + 0.5 * 0.2 = 0.4
    t = make_task(compliance_history=[1, 0, 0, 0, 0])
    assert utility(t, EnvState([0.0]), SysState([0.0]), measurement_score=0.6) == pytest.approx(0.4)


def test_utility_windows_history():
    t = make_task(compliance_history=[0] * 50 + [1, 1])
    assert utility(t, EnvState([0.0]), SysState([0.0]), 0.0, window=2) == pytest.approx(0.5)


def test_utility_validation():
    t = make_task()
    with pytest.raises(ContractViolation):
        utility(t, EnvState([0.0]), SysState([0.0]), measurement_score=1.5)
    with pytest.raises(ContractViolation):
        utility(t, EnvState([0.0]), SysState([0.0]), 0.5, window=0)


def test_record_compliance_appends():
    t = make_task()
    assert record_compliance(t, EnvState([0.0]), SysState([0.0])) == 1
    assert record_compliance(t, EnvState([9.0]), SysState([0.0])) == 0
    assert t.compliance_history == [1, 0]


def test_low_utility_task_is_deleted():
    t = make_task()
    cfg = TaskSetConfig(theta_delete=0.2, theta_create=0.8)
    survivors = update_task_set([t], [], {"t0": 0.1}, cfg)
    assert survivors == [] and t.status == "deleted"


def test_utility_at_delete_threshold_survives():
    t = make_task()
    survivors = update_task_set([t], [], {"t0": 0.2}, TaskSetConfig(theta_delete=0.2))
    assert survivors == [t]


def test_candidate_above_create_threshold_admitted():
    cand = make_task(tid="c", status="suspended")
    cfg = TaskSetConfig(theta_delete=0.2, theta_create=0.8)
    survivors = update_task_set([], [cand], {"c": 0.9}, cfg)
    assert survivors == [cand] and cand.status == "active" and cand.utility == 0.9


def test_candidate_at_create_threshold_rejected():
    cand = make_task(tid="c")
    cfg = TaskSetConfig(theta_delete=0.2, theta_create=0.8)
    assert update_task_set([], [cand], {"c": 0.8}, cfg) == []


def test_admission_capped_and_ordered_by_utility():
    incumbent = make_task(tid="keep")
    cands = [make_task(tid=f"c{i}") for i in range(3)]
    utilities = {"keep": 0.9, "c0": 0.7, "c1": 0.95, "c2": 0.85}
    cfg = TaskSetConfig(theta_delete=0.2, theta_create=0.6, max_active=2)
    survivors = update_task_set([incumbent], cands, utilities, cfg)
    assert [t.task_id for t in survivors] == ["keep", "c1"]  # best candidate wins the one slot


def test_missing_utility_is_an_error():
    with pytest.raises(ContractViolation):
        update_task_set([make_task()], [], {}, TaskSetConfig())


def test_task_set_config_validation():
    with pytest.raises(ContractViolation):
        TaskSetConfig(theta_delete=0.6, theta_create=0.6)
    with pytest.raises(ContractViolation):
        TaskSetConfig(max_active=0)


@settings(max_examples=50, deadline=None)
@given(us=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=8))
def test_survivors_match_bruteforce_filter(us):
    tasks = [make_task(tid=f"t{i}") for i in range(len(us))]
    utilities = {f"t{i}": u for i, u in enumerate(us)}
    cfg = TaskSetConfig(theta_delete=0.3, theta_create=0.9)
    survivors = update_task_set(tasks, [], utilities, cfg)
    assert [t.task_id for t in survivors] == [
        f"t{i}" for i, u in enumerate(us) if u >= cfg.theta_delete
    ]
    for t in tasks:
        assert t.status == ("deleted" if utilities[t.task_id] < cfg.theta_delete else "active")


# ---------------------------------------------------------------------------
# reflection
# ---------------------------------------------------------------------------


def trace_of(*buckets):
    return [(ScenarioKey((b,)), f"act{b}") for b in buckets]


def test_reflect_without_violations_keeps_everything():
    record = reflect(trace_of(0, 1, 2), EnvState([0.0]), SysState([0.0]), ScriptedPlanner())
    assert [a[0] for a in record.anchors] == [0, 2]  # first and last only
    assert [s.proposed_change for s in record.suggestions] == ["keep", "keep"]
    assert not record.empty


def test_reflect_flags_violation_steps():
    record = reflect(
        trace_of(0, 1, 2, 3),
        EnvState([0.0]),
        SysState([0.0]),
        ScriptedPlanner(),
        violation_steps=[2],
    )
    assert [a[0] for a in record.anchors] == [0, 2, 3]
    by_step = {s.target_step: s.proposed_change for s in record.suggestions}
    assert by_step == {0: "keep", 2: "replan_from_here", 3: "keep"}


def test_reflect_empty_trace_rejected():
    with pytest.raises(ContractViolation):
        reflect([], EnvState([0.0]), SysState([0.0]), ScriptedPlanner())


def test_reflect_survives_planner_failure():
    record = reflect(trace_of(0, 1), EnvState([0.0]), SysState([0.0]), FailingPlanner())
    assert record.empty and len(record.anchors) == 2


def test_reflect_stores_summary_in_memory():
    mem = ScenarioMemory(norm_env=np.zeros(1), norm_sys=np.zeros(1))
    reflect(trace_of(0, 5), EnvState([0.0]), SysState([0.0]), ScriptedPlanner(), memory=mem)
    hit = mem.lookup_solution("reflection", ScenarioKey((5,)))
    assert hit is not None and not hit.cross_scenario


# ---------------------------------------------------------------------------
# spare-time analysis
# ---------------------------------------------------------------------------


def seeded_memory(outcomes):
    mem = ScenarioMemory(norm_env=np.zeros(1), norm_sys=np.zeros(1))
    for step, outcome in enumerate(outcomes):
        mem.record_history(
            step,
            EnvState([float(step)], timestamp=step),
            SysState([0.0], timestamp=step),
            action_id=f"a{step % 2}",
            outcome_id=outcome,
        )
    return mem


def test_empty_backlog_yields_nothing():
    mem = seeded_memory([])
    assert run_spare_time(mem, budget=5) == []


def test_zero_budget_rejected():
    with pytest.raises(ContractViolation):
        run_spare_time(seeded_memory(["ok"]), budget=0)


def test_failures_become_candidate_tasks():
    mem = seeded_memory(["ok", "fail_timeout", "ok"])
    proposals = run_spare_time(mem, budget=10)
    cands = [p for p in proposals if p.kind == "candidate_task"]
    assert len(cands) == 1
    assert cands[0].buckets == (1, 0)  # env bucket 1 at the failing step
    assert cands[0].detail["outcome"] == "fail_timeout"


def test_watermark_prevents_rescanning():
    mem = seeded_memory(["fail_x", "fail_y"])
    first = run_spare_time(mem, budget=10)
    assert sum(p.kind == "candidate_task" for p in first) == 2
    assert mem.analyzed_through_step == 1
    assert run_spare_time(mem, budget=10) == []


def test_budget_limits_scan_to_newest():
    mem = seeded_memory(["fail_old", "ok", "fail_new"])
    proposals = run_spare_time(mem, budget=2)  # scans steps 2 and 1 only
    cands = [p for p in proposals if p.kind == "candidate_task"]
    assert [c.detail["step"] for c in cands] == [2]


def test_coherent_pairs_become_weight_updates():
    # alternating a0 -> a1 within window 1 shows up as a mined pair
    mem = seeded_memory(["ok"] * 6)
    proposals = run_spare_time(mem, budget=10, mine_window=1, theta_cooccur=0.5)
    pairs = {p.detail["pair"] for p in proposals if p.kind == "weight_update"}
    assert ("a0", "a1") in pairs


def test_selector_prompts_exploration_after_failures():
    mem = seeded_memory(["fail_z"])
    selector = MethodSelector(["m0", "m1"])
    selector.pulls[0] = 5  # m1 is now the least-tried method
    proposals = run_spare_time(mem, budget=5, selector=selector)
    explore = [p for p in proposals if p.kind == "exploration"]
    assert len(explore) == 1 and explore[0].detail["method_id"] == "m1"


def test_selector_quiet_without_failures():
    mem = seeded_memory(["ok", "ok"])
    proposals = run_spare_time(mem, budget=5, selector=MethodSelector(["m0"]))
    assert not any(p.kind == "exploration" for p in proposals)


def test_planner_reflection_adds_step_replacements():
    mem = seeded_memory(["ok", "fail_q", "ok"])
    proposals = run_spare_time(mem, budget=10, planner=ScriptedPlanner())
    repl = [p for p in proposals if p.kind == "step_replacement"]
    assert len(repl) == 1
    assert repl[0].detail["proposed_change"] == "replan_from_here"
    assert repl[0].detail["target_step"] == 1


# ---------------------------------------------------------------------------
# step-level corrective adjustment
# ---------------------------------------------------------------------------


def metrics(aid="s", time=1.0, safety=1.0, tactic="reduce", **kw):
    return StepMetrics(action_id=aid, time=time, safety=safety, tactic=tactic, **kw)


def test_step_cost_is_the_weighted_sum():
    w = StepCostWeights(lambda_time=1.0, lambda_energy=2.0, lambda_risk=3.0)
    m = metrics(time=1.0, energy=2.0, risk=3.0)
    assert step_cost(m, w) == pytest.approx(1.0 + 4.0 + 9.0)


def test_cheap_plan_left_alone():
    w = StepCostWeights(theta_eff=2.0)
    steps = [metrics("a", time=1.0), metrics("b", time=2.0)]
    plan = improve_steps(steps, w, alternatives={})
    assert plan.steps == steps and not plan.replaced and not plan.flagged


def test_costly_step_replaced_by_cheaper_alternative():
    # lambda=(1,0,0), times (5, 1), theta_eff=2: only the first step is costly
    w = StepCostWeights(theta_eff=2.0)
    steps = [metrics("slow", time=5.0), metrics("ok", time=1.0)]
    alts = {"slow": [metrics("quick", time=2.0)]}
    plan = improve_steps(steps, w, alts)
    assert plan.replaced == {0: "quick"}
    assert [s.action_id for s in plan.steps] == ["quick", "ok"]
    assert not plan.flagged


def test_unsafe_alternative_is_skipped_and_step_flagged():
    w = StepCostWeights(theta_eff=2.0, s_min=0.8)
    steps = [metrics("slow", time=5.0)]
    alts = {"slow": [metrics("risky", time=1.0, safety=0.5)]}
    plan = improve_steps(steps, w, alts)
    assert plan.flagged == [0] and not plan.replaced
    assert plan.steps[0].action_id == "slow"


def test_costlier_alternative_is_skipped():
    w = StepCostWeights(theta_eff=2.0)
    plan = improve_steps([metrics("slow", time=5.0)], w, {"slow": [metrics("worse", time=9.0)]})
    assert plan.flagged == [0]


def test_reward_check_can_veto_swaps():
    w = StepCostWeights(theta_eff=2.0)
    plan = improve_steps(
        [metrics("slow", time=5.0)],
        w,
        {"slow": [metrics("quick", time=1.0)]},
        reward_check=lambda old, new: False,
    )
    assert plan.flagged == [0]


def test_reduce_tactic_preferred_over_cheaper_suspend():
    w = StepCostWeights(theta_eff=2.0)
    alts = {
        "slow": [
            metrics("pause", time=0.5, tactic="suspend"),
            metrics("trim", time=3.0, tactic="reduce"),
        ]
    }
    plan = improve_steps([metrics("slow", time=5.0)], w, alts)
    assert plan.replaced == {0: "trim"}


@settings(max_examples=60, deadline=None)
@given(
    times=st.lists(st.floats(0.0, 10.0), min_size=1, max_size=6),
    alt_time=st.floats(0.0, 10.0),
)
def test_improvement_never_increases_cost(times, alt_time):
    w = StepCostWeights(theta_eff=2.0)
    steps = [metrics(f"s{i}", time=t) for i, t in enumerate(times)]
    alts = {f"s{i}": [metrics(f"alt{i}", time=alt_time)] for i in range(len(times))}
    plan = improve_steps(steps, w, alts)
    before = sum(step_cost(s, w) for s in steps)
    after = sum(step_cost(s, w) for s in plan.steps)
    assert after <= before + 1e-12


def test_weights_validation():
    with pytest.raises(ContractViolation):
        StepCostWeights(lambda_time=0.0, lambda_energy=0.0, lambda_risk=0.0)
    with pytest.raises(ContractViolation):
        StepCostWeights(lambda_time=-1.0)


def test_metrics_validation():
    with pytest.raises(ContractViolation):
        metrics(time=float("nan"))
    with pytest.raises(ContractViolation):
        metrics(tactic="ponder")
