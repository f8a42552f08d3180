"""Test worlds with known ground truth.

BanditWorld: piecewise-stationary Bernoulli arms; regret is measured against
the known per-regime means, so no estimation noise enters the oracle side.
Regime r is announced through a low-dimensional environment signature (a
scaled best-arm/regime encoding plus Gaussian noise) that the change
detector watches.

GoalWorld: the quadratic objective J(a) = -||a - a*||^2 with gradient steps
a <- a + eta * grad J * phi; aligned phi is the identity, the unguided
baseline multiplies the gradient by a random sign each step.

instrumented_episodes: random measurement episodes with a scalar ground-truth
quality; each channel's deviation is quality-driven plus bounded noise, so a
correct reward aggregate must rank episodes almost exactly by quality.

FixtureWorld: the 1-D navigation world the full agent runs in — an
uncontrollable coordinate announcing the regime and a position the agent
moves on a fixed grid; goals, planner tables and the perfect simulator are
all derived from the same few numbers so world and fixtures cannot drift
apart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, ContractViolation
from ..measurement import ChannelThresholds, aggregate_reward
from ..planner import ScriptedPlanner
from ..tasking import Goal
from ..world import EnvState, SysState

__all__ = [
    "BanditWorld",
    "GoalWorld",
    "instrumented_episodes",
    "FixtureWorld",
    "FixtureSimulator",
    "build_fixture_planner",
    "fixture_goals",
]


@dataclass
class BanditWorld:
    """Bernoulli arms whose means switch at the change points."""

    arm_means: list[list[float]]
    change_points: list[int]
    horizon: int

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if len(self.arm_means) != len(self.change_points) + 1:
            raise ConfigError(
                f"{len(self.arm_means)} regimes need {len(self.arm_means) - 1} change points, "
                f"got {len(self.change_points)}"
            )
        arms = {len(m) for m in self.arm_means}
        if len(arms) != 1:
            raise ConfigError("every regime must list the same number of arms")
        for regime in self.arm_means:
            for m in regime:
                if not 0.0 <= m <= 1.0:
                    raise ConfigError(f"arm means must lie in [0, 1], got {m}")
        previous = 0
        for tau in self.change_points:
            if tau <= previous or tau >= self.horizon:
                raise ConfigError(
                    f"change points must be strictly increasing and < horizon, got {self.change_points}"
                )
            previous = tau

    @property
    def n_arms(self) -> int:
        return len(self.arm_means[0])

    @property
    def n_regimes(self) -> int:
        return len(self.arm_means)

    def regime_schedule(self) -> np.ndarray:
        """regime index per step, shape (horizon,)."""
        schedule = np.zeros(self.horizon, dtype=np.int64)
        for tau in self.change_points:
            schedule[tau:] += 1
        return schedule

    def best_arm(self, regime: int) -> int:
        means = self.arm_means[regime]
        return int(np.argmax(means))

    def env_signatures(self, scale: list[float]) -> np.ndarray:
        """Noiseless per-regime environment signature rows."""
        if len(scale) != 2:
            raise ConfigError("env_signature_scale must have two entries")
        return np.array(
            [[scale[0] * self.best_arm(r), scale[1] * r] for r in range(self.n_regimes)]
        )


@dataclass
class GoalWorld:
    """Quadratic objective J(a) = -||a - a_star||^2."""

    a_star: np.ndarray
    eta: float

    def __post_init__(self):
        self.a_star = np.asarray(self.a_star, dtype=float)
        if not np.all(np.isfinite(self.a_star)):
            raise ContractViolation("a_star must be finite")
        # per-step factor 1 - 2*eta must stay inside (0, 1) for contraction
        if not 0.0 < self.eta < 0.5:
            raise ConfigError(f"eta must lie in (0, 0.5), got {self.eta}")

    def objective(self, a: np.ndarray) -> float:
        gap = a - self.a_star
        return -float(np.dot(gap, gap))

    def grad(self, a: np.ndarray) -> np.ndarray:
        return -2.0 * (a - self.a_star)

    def run(self, a0: np.ndarray, steps: int, signs: np.ndarray | None = None) -> np.ndarray:
        """Squared-error trajectory ||a_t - a*||^2 for t = 0..steps.

        signs is None for the aligned (guided) update; otherwise a +-1 array
        multiplying the gradient direction each step (the unguided baseline).
        """
        a = np.asarray(a0, dtype=float).copy()
        err_sq = np.empty(steps + 1)
        gap = a - self.a_star
        err_sq[0] = float(np.dot(gap, gap))
        for t in range(steps):
            direction = self.grad(a)
            if signs is not None:
                direction = signs[t] * direction
            a = a + self.eta * direction
            gap = a - self.a_star
            err_sq[t + 1] = float(np.dot(gap, gap))
            if not math.isfinite(err_sq[t + 1]):
                raise ContractViolation(f"trajectory diverged at step {t + 1}")
        return err_sq

    def fitted_rate(self, err_sq: np.ndarray, through: int) -> float:
        """Decay rate normalized to the alignment-efficiency scale.

        ln ||e_t||^2 falls linearly with slope 2 ln(1 - 2 eta lambda); for
        the quadratic objective ||grad J||^2 = 4 ||e||^2, so dividing the
        fitted slope by -4 eta recovers lambda itself.
        """
        ln_err = np.log(err_sq[: through + 1])
        slope = float(np.polyfit(np.arange(through + 1), ln_err, 1)[0])
        return -slope / (4.0 * self.eta)


def instrumented_episodes(
    n: int, seed: int, thresholds: ChannelThresholds | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """(quality, reward) pairs over n random episodes with known quality.

    Channel deviations scale with (1 - quality) times a bounded multiplier,
    the external signal is quality plus clipped noise, and a contradiction
    fires with probability growing as quality falls.
    """
    if n < 1:
        raise ContractViolation(f"need at least one episode, got {n}")
    th = thresholds or ChannelThresholds()
    rng = np.random.default_rng(seed)
    quality = rng.random(n)
    bad = 1.0 - quality
    jitter = rng.uniform(0.85, 1.15, size=(n, 4))
    flag_dev = bad * (2.0 * th.theta_f) * jitter[:, 0]
    state_dev = bad * (2.0 * th.theta_s_state) * jitter[:, 1]
    ind_dev = bad * (2.0 * th.theta_ind) * jitter[:, 2]
    sim_dev = bad * (2.0 * th.theta_sim) * jitter[:, 3]
    s_ext = np.clip(quality + rng.normal(0.0, 0.03, n), 0.0, 1.0)
    contradiction = rng.random(n) < 0.25 * bad
    rewards = np.empty(n)
    for i in range(n):
        rewards[i] = aggregate_reward(
            th,
            flag_deviations=[float(flag_dev[i])],
            state_diff_norm=float(state_dev[i]),
            contradiction=bool(contradiction[i]),
            d_ind=float(ind_dev[i]),
            s_ext=float(s_ext[i]),
            sim_deviation=float(sim_dev[i]),
        )
    return quality, rewards


# ---------------------------------------------------------------------------
# full-agent fixture
# ---------------------------------------------------------------------------

HOLD = "hold"
MOVE_POS = "move+"
MOVE_NEG = "move-"


@dataclass
class FixtureWorld:
    """1-D navigation with an uncontrollable regime coordinate.

    env = [base_r + noise, position + noise]; sys = [0.5] (constant).  The
    position moves on the grid start + k * move_delta, so with unit buckets
    each bucket contains exactly one reachable grid point — the scenario key
    identifies the position exactly.
    """

    horizon: int
    change_step: int | None
    env_bases: list[float]
    start_position: float
    move_delta: float
    env_noise: float
    rng: np.random.Generator
    position: float = field(init=False)

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.change_step is not None and not 0 < self.change_step < self.horizon:
            raise ConfigError("change_step must fall inside the horizon")
        if len(self.env_bases) != 2:
            raise ConfigError("the fixture runs exactly two regimes")
        self.position = self.start_position
        self._noise = self.rng.normal(0.0, self.env_noise, size=(self.horizon + 1, 2))

    def regime_at(self, step: int) -> int:
        if self.change_step is None:
            return 0
        return 0 if step < self.change_step else 1

    def apply(self, action: str) -> None:
        if action == MOVE_POS:
            self.position += self.move_delta
        elif action == MOVE_NEG:
            self.position -= self.move_delta
        elif action != HOLD:
            raise ContractViolation(f"unknown action {action!r}")

    def observe(self, step: int) -> tuple[EnvState, SysState]:
        base = self.env_bases[self.regime_at(step)]
        features = np.array(
            [base + self._noise[step, 0], self.position + self._noise[step, 1]]
        )
        return EnvState(features, timestamp=step), SysState(np.array([0.5]), timestamp=step)


class FixtureSimulator:
    """Perfect one-step model of FixtureWorld (up to observation noise)."""

    def __init__(self, move_delta: float):
        self.move_delta = move_delta

    def simulate(self, env: EnvState, sys: SysState, actions: list[str]) -> np.ndarray:
        x0, x1 = float(env.features[0]), float(env.features[1])
        for action in actions:
            if action == MOVE_POS:
                x1 += self.move_delta
            elif action == MOVE_NEG:
                x1 -= self.move_delta
            elif action != HOLD:
                raise ContractViolation(f"unknown action {action!r}")
        return np.array([x0, x1])


def fixture_goals(env_bases: list[float], targets: list[float], tolerance: float) -> dict[str, Goal]:
    """One explicit goal per regime over the (x0, x1) env coordinates."""
    return {
        f"g{r}": Goal(
            goal_id=f"g{r}",
            kind="explicit",
            target_features=np.array([env_bases[r], targets[r]]),
            tolerance=tolerance,
            feature_indices=(0, 1),
        )
        for r in range(len(env_bases))
    }


def build_fixture_planner(
    env_bases: list[float],
    targets: list[float],
    bucket_width: float,
    hold_length: int,
) -> ScriptedPlanner:
    """Plan tables for every reachable (scenario, goal) pair.

    Position buckets -2..1 each hold one grid point; plans lead with a single
    move toward the goal's position bucket (replanning refreshes the move
    while out of tolerance) and then hold.
    """
    x1_buckets = range(-2, 2)
    planner = ScriptedPlanner(default_plan=([HOLD] * hold_length, [[0.0, 0.0]] * hold_length))
    for r, base in enumerate(env_bases):
        x0_bucket = int(math.floor(base / bucket_width))
        for g, target in enumerate(targets):
            goal_id = f"g{g}"
            goal_bucket = int(math.floor(targets[g] / bucket_width))
            goal_base = env_bases[g]
            for x1b in x1_buckets:
                if x1b < goal_bucket:
                    lead: list[str] = [MOVE_POS]
                elif x1b > goal_bucket:
                    lead = [MOVE_NEG]
                else:
                    lead = []
                actions = lead + [HOLD] * hold_length
                envs = [[goal_base, target]] * len(actions)
                key = (x0_bucket, x1b, 0)
                planner.plan_table[(key, goal_id)] = (actions, envs)
                if g == r:
                    # the intuitive response to a scenario follows its regime's goal
                    planner.intuition_table[key] = actions[0]
    return planner
