"""Experiment runners.

Every runner is a pure function of (config, seeds): seeds fan out over
deterministic generator streams, aggregates are reduced in seed order, and
all pass/fail thresholds come from the config's acceptance blocks.
Comparative claims (reset vs no-reset, checkpointed vs free, guided vs
unguided) use paired seeds so both sides see common random numbers.
"""

from __future__ import annotations

import math
import time

import numpy as np

from ..errors import ConfigError
from ..executor import (
    DraftPlan,
    LinearDynamics,
    ReplannerConfig,
    execute_with_checkpoints,
)
from ..planner import PlannerPort
from ..selection import MethodSelector, SelectionConfig
from ..world import ChangeDetector, EnvState
from .config import LabConfig
from .report import ExperimentReport
from .worlds import BanditWorld, GoalWorld, instrumented_episodes  # noqa: F401 (re-export)
from .agent import run_episode

__all__ = [
    "run_stationary_regret",
    "run_tracking_regret",
    "run_checkpoint_contraction",
    "run_goal_directed",
    "run_full_agent",
    "RUNNERS",
]

BANDIT_COLUMNS = ["seed", "step", "arm", "reward", "instant_regret", "cum_regret", "change_detected"]


def _bandit_world(cfg: LabConfig) -> BanditWorld:
    w = cfg.world
    try:
        return BanditWorld(
            arm_means=[list(map(float, row)) for row in w["arm_means"]],
            change_points=list(map(int, w["change_points"])),
            horizon=int(w["horizon"]),
        )
    except KeyError as exc:
        raise ConfigError(f"world config missing key {exc}") from exc


def _selector(cfg: LabConfig, rng: np.random.Generator, n_arms: int) -> MethodSelector:
    sel = cfg.selector
    return MethodSelector(
        [f"arm{i}" for i in range(n_arms)],
        SelectionConfig(
            c=float(sel.get("c", 5.0)),
            optimistic_init=float(sel.get("optimistic_init", 1.0)),
        ),
        rng=rng,
    )


def _egreedy_run(
    selector: MethodSelector,
    means: list[float],
    draws: np.ndarray,
    detector_envs: list[EnvState] | None = None,
    detector: ChangeDetector | None = None,
    reset_on_change: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One bandit pass; returns (arms, rewards, detection flags)."""
    T = draws.shape[0]
    arms = np.empty(T, dtype=np.int64)
    rewards = np.empty(T)
    detected = np.zeros(T, dtype=bool)
    for t in range(T):
        if detector is not None and t > 0:
            changed, _ = detector.observe(detector_envs[t])
            if changed:
                detected[t] = True
                if reset_on_change:
                    selector.reset()
        arm = selector.select()
        r = 1.0 if draws[t] < means[t][arm] else 0.0
        selector.update(arm, r)
        arms[t] = arm
        rewards[t] = r
    return arms, rewards, detected


def run_stationary_regret(cfg: LabConfig) -> ExperimentReport:
    """Single-regime bandit; sublinear-regret check on the selection loop."""
    started = time.perf_counter()
    world = _bandit_world(cfg)
    if world.n_regimes != 1:
        raise ConfigError("the stationary experiment needs exactly one regime")
    T = world.horizon
    policy = cfg.selector.get("policy", "egreedy")
    if policy not in ("egreedy", "oracle", "uniform"):
        raise ConfigError(f"unknown selector policy {policy!r}")
    stride = int(cfg.world.get("trace_stride", 1))
    accept = cfg.world.get("acceptance", {})
    means = world.arm_means[0]
    means_per_step = [means] * T
    best = max(means)
    gaps = [best - m for m in means]

    report = ExperimentReport(
        experiment=cfg.experiment,
        config=cfg.to_dict(),
        seeds=list(cfg.seeds),
        columns=BANDIT_COLUMNS,
    )
    decile = max(1, T // 10)
    half = T // 2
    last_decile, first_halves, second_halves, finals = [], [], [], []
    for seed in cfg.seeds:
        draws = np.random.default_rng([seed, 2]).random(T)
        if policy == "egreedy":
            selector = _selector(cfg, np.random.default_rng([seed, 1]), world.n_arms)
            arms, rewards, _ = _egreedy_run(selector, means_per_step, draws)
        elif policy == "oracle":
            arms = np.full(T, int(np.argmax(means)), dtype=np.int64)
            rewards = (draws < best).astype(float)
        else:  # uniform
            arms = np.random.default_rng([seed, 1]).integers(world.n_arms, size=T)
            rewards = (draws < np.asarray(means)[arms]).astype(float)
        inst = np.asarray(gaps)[arms]
        cum = np.cumsum(inst)
        last_decile.append(float(inst[-decile:].mean()))
        first_halves.append(float(inst[:half].mean()))
        second_halves.append(float(inst[half:].mean()))
        finals.append(float(cum[-1]))
        for t in range(0, T, stride):
            report.add_row(seed, t, int(arms[t]), rewards[t], float(inst[t]), float(cum[t]), 0)

    mean_last_decile = float(np.mean(last_decile))
    mean_first = float(np.mean(first_halves))
    mean_second = float(np.mean(second_halves))
    half_ratio = mean_second / mean_first if mean_first > 0 else 0.0
    report.aggregates = {
        "per_seed_last_decile_regret": last_decile,
        "last_decile_regret": mean_last_decile,
        "first_half_regret": mean_first,
        "second_half_regret": mean_second,
        "half_ratio": half_ratio,
        "final_cum_regret_mean": float(np.mean(finals)),
        "policy": policy,
    }
    if accept:
        report.passes = {
            "last_decile_regret": mean_last_decile <= float(accept["last_decile_regret_max"]),
            "half_ratio": half_ratio <= float(accept["half_ratio_max"]),
        }
    report.runtime_s = time.perf_counter() - started
    return report


def run_tracking_regret(cfg: LabConfig) -> ExperimentReport:
    """Paired reset-on/reset-off runs over a piecewise-stationary bandit."""
    started = time.perf_counter()
    world = _bandit_world(cfg)
    T = world.horizon
    stride = int(cfg.world.get("trace_stride", 1))
    accept = cfg.world.get("acceptance", {})
    schedule = world.regime_schedule()
    means_rows = [world.arm_means[r] for r in schedule]
    best_per_step = np.array([max(row) for row in means_rows])
    gap_matrix = best_per_step[:, None] - np.array(means_rows)
    signatures = world.env_signatures(list(cfg.world.get("env_signature_scale", [0.4, 0.1])))
    env_noise = float(cfg.world.get("env_noise", 0.02))

    report = ExperimentReport(
        experiment=cfg.experiment,
        config=cfg.to_dict(),
        seeds=list(cfg.seeds),
        columns=BANDIT_COLUMNS,
    )
    reset_finals, baseline_finals = [], []
    worst_latency = 0.0
    false_alarms = 0
    for seed in cfg.seeds:
        draws = np.random.default_rng([seed, 2]).random(T)
        noise = np.random.default_rng([seed, 3]).normal(0.0, env_noise, size=(T, 2))
        env_rows = signatures[schedule] + noise
        envs = [EnvState(env_rows[t], timestamp=t) for t in range(T)]

        selector = _selector(cfg, np.random.default_rng([seed, 1]), world.n_arms)
        detector = ChangeDetector(last_env=envs[0], theta_e=cfg.thresholds.theta_e)
        arms, rewards, detected = _egreedy_run(
            selector, means_rows, draws, envs, detector, reset_on_change=True
        )
        inst = gap_matrix[np.arange(T), arms]
        cum = np.cumsum(inst)
        reset_finals.append(float(cum[-1]))

        baseline = _selector(cfg, np.random.default_rng([seed, 1]), world.n_arms)
        arms_b, _, _ = _egreedy_run(baseline, means_rows, draws)
        baseline_finals.append(float(np.sum(gap_matrix[np.arange(T), arms_b])))

        hits = np.flatnonzero(detected)
        for tau in world.change_points:
            after = hits[hits >= tau]
            latency = float(after[0] - tau) if after.size else math.inf
            worst_latency = max(worst_latency, latency)
        windows = [(tau, tau + int(accept.get("detection_latency_max", 200))) for tau in world.change_points]
        false_alarms += int(
            sum(1 for h in hits if not any(lo <= h <= hi for lo, hi in windows))
        )
        for t in range(0, T, stride):
            report.add_row(
                seed, t, int(arms[t]), rewards[t], float(inst[t]), float(cum[t]), int(detected[t])
            )

    mean_reset = float(np.mean(reset_finals))
    mean_baseline = float(np.mean(baseline_finals))
    ratio = mean_reset / mean_baseline if mean_baseline > 0 else math.inf
    report.aggregates = {
        "reset_final_regret_mean": mean_reset,
        "baseline_final_regret_mean": mean_baseline,
        "reset_to_baseline_ratio": ratio,
        "worst_detection_latency": worst_latency,
        "false_alarms": false_alarms,
        "per_seed_reset_final": reset_finals,
        "per_seed_baseline_final": baseline_finals,
    }
    if accept and world.change_points:
        report.passes = {
            "reset_ratio": ratio <= float(accept["reset_ratio_max"]),
            "detection_latency": worst_latency <= float(accept["detection_latency_max"]),
        }
    report.runtime_s = time.perf_counter() - started
    return report


def run_checkpoint_contraction(cfg: LabConfig) -> ExperimentReport:
    """Steady-state planning-error MSE across a contraction-factor grid."""
    started = time.perf_counter()
    ex = cfg.executor
    try:
        l_f, sigma = float(ex["l_f"]), float(ex["sigma"])
        dim, steps, tail = int(ex["dim"]), int(ex["steps"]), int(ex["tail"])
        rho_main = float(ex["rho"])
        rho_grid = [float(r) for r in ex["rho_grid"]]
    except KeyError as exc:
        raise ConfigError(f"executor config missing key {exc}") from exc
    if rho_main not in rho_grid:
        raise ConfigError("executor.rho must be one of executor.rho_grid")
    stride = int(ex.get("trace_stride", 1))
    accept = ex.get("acceptance", {})
    dyn = LinearDynamics(A=l_f * np.eye(dim), noise_sigma=sigma)
    stage = (EnvState(np.zeros(dim)), "noop")
    plan = DraftPlan(
        stages=[stage],
        checkpoint_every=int(ex.get("checkpoint_every", 1)),
        theta_ckpt=cfg.thresholds.theta_ckpt,
    )
    free_plan = DraftPlan(stages=[stage], checkpoint_every=1, theta_ckpt=math.inf)

    report = ExperimentReport(
        experiment=cfg.experiment,
        config=cfg.to_dict(),
        seeds=list(cfg.seeds),
        columns=["seed", "step", "err_sq", "checkpointed"],
    )
    grid_mse: dict[float, float] = {}
    per_rho: dict[str, dict] = {}
    for rho in rho_grid:
        replanner = ReplannerConfig(rho=rho)
        seed_mses = []
        for seed in cfg.seeds:
            trace = execute_with_checkpoints(plan, dyn, replanner, steps, rng_seed=seed)
            seed_mses.append(trace.mse(last=tail))
            if rho == rho_main:
                for t in range(0, steps, stride):
                    report.add_row(seed, t, trace.squared_norms[t], int(trace.contracted[t]))
        mse = float(np.mean(seed_mses))
        grid_mse[rho] = mse
        applicable = rho * l_f < 1.0
        bound = sigma**2 / (1.0 - rho**2 * l_f**2) if applicable else None
        per_rho[repr(rho)] = {
            "mse": mse,
            "bound": bound,
            "bound_applicable": applicable,
            "within_bound": (mse <= float(accept.get("bound_slack", 1.10)) * bound)
            if applicable
            else None,
        }

    free_mses = []
    for seed in cfg.seeds:
        trace = execute_with_checkpoints(free_plan, dyn, ReplannerConfig(rho=0.0), steps, rng_seed=seed)
        free_mses.append(trace.mse(last=tail))
    free_mse = float(np.mean(free_mses))
    free_bound = sigma**2 / (1.0 - l_f**2)

    mse_main = grid_mse[rho_main]
    bound_main = sigma**2 / (1.0 - rho_main**2 * l_f**2)
    ordered = [grid_mse[r] for r in sorted(grid_mse)]
    monotone = all(a <= b + 1e-12 for a, b in zip(ordered, ordered[1:]))
    ratio = mse_main / free_mse if free_mse > 0 else math.inf
    report.aggregates = {
        "per_rho": per_rho,
        "main_rho": rho_main,
        "main_mse": mse_main,
        "main_bound": bound_main,
        "free_mse": free_mse,
        "free_bound": free_bound,
        "checkpoint_to_free_ratio": ratio,
        "monotone_in_rho": monotone,
    }
    if accept:
        report.passes = {
            "mse_bound": mse_main <= float(accept["bound_slack"]) * bound_main,
            "vs_checkpoint_free": ratio <= float(accept["free_ratio_max"]),
            "monotone_in_rho": monotone,
        }
    report.runtime_s = time.perf_counter() - started
    return report


def run_goal_directed(cfg: LabConfig) -> ExperimentReport:
    """Aligned gradient guidance vs a sign-randomized baseline."""
    started = time.perf_counter()
    w = cfg.world
    try:
        dim, eta, steps = int(w["dim"]), float(w["eta"]), int(w["steps"])
        lambda_g = float(w["lambda_g"])
        fit_through = int(w["fit_through"])
    except KeyError as exc:
        raise ConfigError(f"world config missing key {exc}") from exc
    accept = w.get("acceptance", {})
    t_check = int(accept.get("t_check", min(100, steps)))
    if t_check > steps or fit_through > steps:
        raise ConfigError("t_check and fit_through must not exceed steps")
    stride = int(w.get("trace_stride", 1))
    world = GoalWorld(a_star=np.zeros(dim), eta=eta)

    report = ExperimentReport(
        experiment=cfg.experiment,
        config=cfg.to_dict(),
        seeds=list(cfg.seeds),
        columns=["seed", "step", "guided_err_sq", "unguided_err_sq"],
    )
    guided_at, unguided_at, rates, diverged = [], [], [], 0
    for seed in cfg.seeds:
        rng = np.random.default_rng([seed, 4])
        direction = rng.normal(size=dim)
        a0 = world.a_star + direction / np.linalg.norm(direction)
        signs = rng.choice([-1.0, 1.0], size=steps)
        guided = world.run(a0, steps)
        try:
            unguided = world.run(a0, steps, signs)
        except Exception:
            diverged += 1
            unguided = np.full(steps + 1, math.inf)
        guided_at.append(float(guided[t_check]))
        unguided_at.append(float(unguided[t_check]))
        rates.append(world.fitted_rate(guided, fit_through))
        for t in range(0, steps + 1, stride):
            report.add_row(seed, t, float(guided[t]), float(unguided[t]))

    mean_guided = float(np.mean(guided_at))
    mean_unguided = float(np.mean(unguided_at))
    mean_rate = float(np.mean(rates))
    rate_rel_err = abs(mean_rate - lambda_g) / lambda_g
    report.aggregates = {
        "guided_err_at_check": mean_guided,
        "unguided_err_at_check": mean_unguided,
        "guided_to_unguided_ratio": mean_guided / mean_unguided if mean_unguided > 0 else math.inf,
        "fitted_rate_mean": mean_rate,
        "rate_relative_error": rate_rel_err,
        "lambda_g": lambda_g,
        "diverged_runs": diverged,
    }
    if accept:
        report.passes = {
            "guided_vs_unguided": mean_guided <= float(accept["guided_ratio_max"]) * mean_unguided,
            "fitted_rate": rate_rel_err <= float(accept["rate_rel_tol"]),
            "no_divergence": diverged == 0,
        }
    report.runtime_s = time.perf_counter() - started
    return report


def run_full_agent(cfg: LabConfig, planner: PlannerPort | None = None) -> ExperimentReport:
    """Whole-loop fixture run; see simlab.agent for the step anatomy."""
    started = time.perf_counter()
    w = cfg.world
    horizon = int(w["horizon"])
    change = w.get("change_step")
    accept = w.get("acceptance", {})
    window = int(accept.get("window", 1000))
    dip = float(accept.get("dip_allowance", 0.02))
    churn_within = int(accept.get("churn_within", 500))
    stride = int(w.get("trace_stride", 1))
    n_windows = horizon // window
    if n_windows < 2:
        raise ConfigError("horizon must cover at least two compliance windows")

    report = ExperimentReport(
        experiment=cfg.experiment,
        config=cfg.to_dict(),
        seeds=list(cfg.seeds),
        columns=["seed", "step", "compliance", "reward", "goal_id", "n_active", "change_detected"],
    )
    window_curves, reward_curves = [], []
    churn_ok, remap_ok, detect_ok = [], [], []
    proposal_counts, fallbacks = [], 0
    final_compliance = []
    for seed in cfg.seeds:
        ep = run_episode(cfg, seed, planner=planner)
        comp = ep.compliance.astype(float)
        window_curves.append([float(comp[i * window : (i + 1) * window].mean()) for i in range(n_windows)])
        reward_curves.append(
            [float(ep.rewards[i * window : (i + 1) * window].mean()) for i in range(n_windows)]
        )
        final_compliance.append(float(comp[-window:].mean()))
        proposal_counts.append(ep.proposal_count)
        fallbacks += ep.planner_fallbacks
        if change is not None:
            deadline = change + churn_within
            churn_ok.append(
                any(change <= s <= deadline for s in ep.deletion_steps)
                and any(change <= s <= deadline for s in ep.creation_steps)
            )
            remap_ok.append(ep.remap_step is not None and ep.remap_step <= change + 5)
            detect_ok.append(any(change <= s <= deadline for s in ep.detection_steps))
        for t in range(0, horizon, stride):
            report.add_row(
                seed,
                t,
                int(ep.compliance[t]),
                float(ep.rewards[t]),
                ep.goal_ids[t],
                int(ep.n_active[t]),
                int(ep.change_detected[t]),
            )

    mean_windows = [float(np.mean([c[i] for c in window_curves])) for i in range(n_windows)]
    monotone = all(b >= a - dip for a, b in zip(mean_windows, mean_windows[1:]))
    report.aggregates = {
        "compliance_window_means": mean_windows,
        "reward_window_means": [float(np.mean([c[i] for c in reward_curves])) for i in range(n_windows)],
        "final_window_compliance_mean": float(np.mean(final_compliance)),
        "proposal_count_mean": float(np.mean(proposal_counts)),
        "planner_fallbacks": fallbacks,
        "per_seed_window_compliance": window_curves,
    }
    report.passes = {"compliance_monotone": monotone}
    if change is not None:
        report.passes.update(
            {
                "post_change_churn": all(churn_ok),
                "goal_remap": all(remap_ok),
                "change_detected": all(detect_ok),
            }
        )
    else:
        report.passes["benign_convergence"] = float(np.mean(final_compliance)) >= 0.99
    report.runtime_s = time.perf_counter() - started
    return report


RUNNERS = {
    "stationary": run_stationary_regret,
    "tracking": run_tracking_regret,
    "checkpoint": run_checkpoint_contraction,
    "goal-directed": run_goal_directed,
    "full-agent": run_full_agent,
}
