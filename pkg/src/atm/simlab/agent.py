"""End-to-end agent loop over the navigation fixture.

Each step: observe -> detect change (reset exploration on trigger) ->
retrieve the scenario's goal from memory -> maintain the task set (suspend
off-goal tasks, delete low-utility ones, admit a candidate for the current
goal) -> pick a method (execute the plan vs hold and observe) -> act ->
measure the outcome through the flag/state/simulation channels -> record
history and reinforce memory.  Spare-time analysis runs on a fixed cadence
between steps.

Per-task utility uses the measurement score evaluated against that task's
own goal, so a task whose goal the world has abandoned decays and is
deleted even while the agent performs well on the new goal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..measurement import (
    ChannelThresholds,
    Flag,
    aggregate_reward,
    flag_deviation,
    simulate_compare,
    state_difference,
)
from ..memory import MemoryConfig, ScenarioMemory
from ..planner import ExternalPlanner, PlannerPort, PlanRequest
from ..selection import MethodSelector, SelectionConfig
from ..tasking import (
    Task,
    TaskSetConfig,
    compliance,
    record_compliance,
    run_spare_time,
    set_status,
    step_task,
    update_task_set,
    utility,
)
from ..world import ChangeDetector, ScenarioKey, concat_state, scenario_key
from .config import LabConfig
from .worlds import (
    HOLD,
    FixtureSimulator,
    FixtureWorld,
    build_fixture_planner,
    fixture_goals,
)

__all__ = ["EpisodeResult", "run_episode", "METHOD_IDS"]

METHOD_IDS = ("execute_plan", "hold_observe")


@dataclass
class EpisodeResult:
    compliance: np.ndarray
    rewards: np.ndarray
    goal_ids: list[str]
    n_active: np.ndarray
    change_detected: np.ndarray
    detection_steps: list[int] = field(default_factory=list)
    deletion_steps: list[int] = field(default_factory=list)
    creation_steps: list[int] = field(default_factory=list)
    completion_steps: list[int] = field(default_factory=list)
    proposal_count: int = 0
    remap_step: int | None = None
    planner_fallbacks: int = 0


def run_episode(cfg: LabConfig, seed: int, planner: PlannerPort | None = None) -> EpisodeResult:
    w, tk, th = cfg.world, cfg.tasking, cfg.thresholds
    horizon = int(w["horizon"])
    width = float(w["bucket_width"])
    bases = list(w["env_bases"])
    targets = list(w["goal_targets"])

    world = FixtureWorld(
        horizon=horizon,
        change_step=w["change_step"],
        env_bases=bases,
        start_position=float(w["start_position"]),
        move_delta=float(w["move_delta"]),
        env_noise=float(w["env_noise"]),
        rng=np.random.default_rng([seed, 0]),
    )
    goals = fixture_goals(bases, targets, float(w["goal_tolerance"]))
    if planner is None:
        planner = build_fixture_planner(bases, targets, width, int(w["plan_hold_length"]))
    simulator = FixtureSimulator(float(w["move_delta"]))

    memory = ScenarioMemory(
        norm_env=np.array([bases[0], float(w["start_position"])]),
        norm_sys=np.array([0.5]),
        config=MemoryConfig(default_eta=0.1, bucket_width=width),
    )
    # distinct per-regime scenario -> goal associations: the agent starts out
    # already knowing which goal each regime's scenarios serve
    for r, base in enumerate(bases):
        x0b = int(np.floor(base / width))
        for x1b in range(-2, 2):
            memory.reinforce_goal(ScenarioKey((x0b, x1b, 0)), f"g{r}", 1.0, eta=1.0)

    selector = MethodSelector(
        list(METHOD_IDS),
        SelectionConfig(
            c=float(cfg.selector.get("c", 5.0)),
            optimistic_init=float(cfg.selector.get("optimistic_init", 1.0)),
        ),
        rng=np.random.default_rng([seed, 1]),
    )
    channel_th = ChannelThresholds(
        theta_f=th.theta_f,
        theta_s_state=th.theta_s_state,
        theta_contra=th.theta_contra,
        theta_ind=th.theta_ind,
        theta_ext=th.theta_ext,
        theta_sim=th.theta_sim,
    )
    task_cfg = TaskSetConfig(
        theta_delete=th.theta_delete,
        theta_create=th.theta_create,
        max_active=int(tk["max_active"]),
    )
    window = int(tk["compliance_window"])
    optimism = int(tk["candidate_optimism"])
    spare_every = int(tk["spare_time_every"])
    spare_budget = int(tk["spare_time_budget"])

    result = EpisodeResult(
        compliance=np.zeros(horizon, dtype=np.int8),
        rewards=np.zeros(horizon),
        goal_ids=[],
        n_active=np.zeros(horizon, dtype=np.int16),
        change_detected=np.zeros(horizon, dtype=bool),
    )

    tasks: list[Task] = []
    last_scores: dict[str, float] = {}
    task_counter = 0
    detector: ChangeDetector | None = None
    goal_id = "g0"

    for t in range(horizon):
        env, sys = world.observe(t)
        if detector is None:
            detector = ChangeDetector(last_env=env, theta_e=th.theta_e)
        else:
            changed, _delta = detector.observe(env)
            if changed:
                selector.reset()
                result.detection_steps.append(t)
                result.change_detected[t] = True

        scenario = scenario_key(env, sys, width)
        goal_id = memory.top_goal(scenario) or goal_id
        current_goal = goals[goal_id]
        result.goal_ids.append(goal_id)
        result.compliance[t] = compliance(current_goal, env, sys)
        if (
            result.remap_step is None
            and world.change_step is not None
            and t >= world.change_step
            and goal_id != result.goal_ids[world.change_step - 1]
        ):
            result.remap_step = t

        # -- task maintenance ------------------------------------------
        for task in tasks:
            record_compliance(task, env, sys)
            if task.goal.goal_id == goal_id and task.status == "suspended":
                set_status(task, "active")
            elif task.goal.goal_id != goal_id and task.status == "active":
                set_status(task, "suspended")
        utilities = {
            task.task_id: utility(task, env, sys, last_scores.get(task.goal.goal_id, 1.0), window)
            for task in tasks
        }
        candidates: list[Task] = []
        if not any(task.goal.goal_id == goal_id for task in tasks):
            resp = planner.respond(
                PlanRequest(
                    env=env,
                    sys=sys,
                    goal=current_goal,
                    kind="plan",
                    context={"scenario": scenario},
                )
            )
            task_counter += 1
            candidate = Task(
                task_id=f"{goal_id}.{task_counter}",
                goal=current_goal,
                actions=list(resp.actions),
                env_snapshot=env,
                sys_snapshot=sys,
                # plan-horizon optimism: a fresh task is credited with the
                # compliance its plan promises, so transit does not delete it
                compliance_history=[1] * optimism,
            )
            candidates.append(candidate)
            utilities[candidate.task_id] = utility(
                candidate, env, sys, last_scores.get(goal_id, 1.0), window
            )
        before_ids = {task.task_id for task in tasks}
        tasks = update_task_set(tasks, candidates, utilities, task_cfg)
        after_ids = {task.task_id for task in tasks}
        result.deletion_steps.extend(t for _ in before_ids - after_ids)
        result.creation_steps.extend(t for _ in after_ids - before_ids)
        result.n_active[t] = sum(1 for task in tasks if task.status == "active")

        # -- act --------------------------------------------------------
        active = next(
            (task for task in tasks if task.status == "active" and task.goal.goal_id == goal_id),
            None,
        )
        method_index: int | None = None
        action = HOLD
        if active is not None:
            method_index = selector.select()
            if METHOD_IDS[method_index] == "execute_plan":
                action, _replanned = step_task(active, env, sys, planner, bucket_width=width)
                if action is None:
                    result.completion_steps.append(t)
                    tasks = [task for task in tasks if task.status != "deleted"]
                    action = HOLD
        world.apply(action)
        env_next, sys_next = world.observe(t + 1)

        # -- measure ----------------------------------------------------
        state_norm = state_difference(
            concat_state(env, sys), concat_state(env_next, sys_next), th.theta_s_state
        ).norm
        sim_dev, _inconsistent = simulate_compare(
            env, sys, [action], env_next.features, simulator, th.theta_sim
        )
        last_scores = {}
        for gid, goal in goals.items():
            if gid != goal_id and not any(task.goal.goal_id == gid for task in tasks):
                continue
            dev, _violated = flag_deviation(
                Flag("x1", expected=float(goal.target_features[1]), min=-100.0, max=100.0, theta_f=th.theta_f),
                float(env_next.features[1]),
            )
            last_scores[gid] = aggregate_reward(
                channel_th,
                flag_deviations=[dev],
                state_diff_norm=state_norm,
                sim_deviation=sim_dev,
            )
        reward = last_scores[goal_id]
        result.rewards[t] = reward
        if method_index is not None:
            selector.update(method_index, reward)

        # -- remember ----------------------------------------------------
        comp_next = compliance(current_goal, env_next, sys_next)
        outcome = "ok" if comp_next else "fail_noncompliant"
        memory.record_history(t, env, sys, action_id=action, outcome_id=outcome)
        memory.reinforce_goal(scenario, goal_id, reward)
        memory.reinforce_action_outcome(scenario, action, outcome, reward)

        if (t + 1) % spare_every == 0:
            proposals = run_spare_time(
                memory,
                budget=spare_budget,
                mine_window=int(cfg.patterns.get("mine_window", 1)),
                theta_cooccur=th.theta_cooccur,
                selector=selector,
                planner=planner,
            )
            result.proposal_count += len(proposals)

    if isinstance(planner, ExternalPlanner):
        result.planner_fallbacks = planner.fallback_count
    return result
