"""Checkpointed plan execution over explicit linear dynamics.

The executor maintains the true state x_t (driven by x_{t+1} = A x_t + B u_t
+ w_t with isotropic Gaussian noise of total power sigma^2) alongside the
plan's predicted state x_hat_t, so the planning error e_t = x_t - x_hat_t
obeys e_{t+1} = A e_t + w_t.  At every checkpoint step whose observed
deviation ||e_t|| strictly exceeds theta_ckpt, replanning contracts the
prediction toward the truth: x_hat <- x + rho (x_hat - x), i.e. e <- rho e.
Errors are recorded before that contraction, which is what makes the
steady-state mean square sigma^2 / (1 - rho^2 L_F^2) observable in traces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, NonFiniteStateError
from .world import EnvState, env_difference

__all__ = [
    "DraftPlan",
    "PlanErrorTrace",
    "LinearDynamics",
    "ReplannerConfig",
    "execute_with_checkpoints",
    "checkpoint_deviation",
    "reward_gap",
]


@dataclass
class DraftPlan:
    """Expected trajectory plus where/when to look up from the plan.

    theta_ckpt may be 0 (every nonzero deviation triggers replanning, the
    theory-experiment setting) or math.inf (checkpoints never fire).
    """

    stages: list[tuple[EnvState, str]]
    checkpoint_every: int = 1
    theta_ckpt: float = 0.0

    def __post_init__(self):
        if not self.stages:
            raise ContractViolation("a draft plan needs at least one stage")
        if self.checkpoint_every < 1:
            raise ContractViolation(f"checkpoint_every must be >= 1, got {self.checkpoint_every}")
        if self.theta_ckpt < 0.0:
            raise ContractViolation(f"theta_ckpt must be >= 0, got {self.theta_ckpt}")


@dataclass
class LinearDynamics:
    """x_{t+1} = A x_t + B u_t + w_t with E||w_t||^2 = noise_sigma^2."""

    A: np.ndarray
    B: np.ndarray | None = None
    noise_sigma: float = 0.0

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        if self.A.ndim != 2 or self.A.shape[0] != self.A.shape[1]:
            raise ContractViolation(f"A must be square, got shape {self.A.shape}")
        if self.B is not None:
            self.B = np.asarray(self.B, dtype=float)
            if self.B.ndim != 2 or self.B.shape[0] != self.A.shape[0]:
                raise ContractViolation("B row count must match A")
        if self.noise_sigma < 0.0:
            raise ContractViolation(f"noise_sigma must be >= 0, got {self.noise_sigma}")

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def lipschitz(self) -> float:
        """Spectral norm of A (the dynamics' Lipschitz constant)."""
        return float(np.linalg.norm(self.A, 2))


@dataclass
class ReplannerConfig:
    rho: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise ContractViolation(f"rho must lie in [0, 1), got {self.rho}")


@dataclass
class PlanErrorTrace:
    errors: list[np.ndarray] = field(default_factory=list)
    squared_norms: list[float] = field(default_factory=list)
    # contracted[t] is True when the checkpoint at the start of step t fired
    contracted: list[bool] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.squared_norms)

    def mse(self, last: int | None = None) -> float:
        """Mean squared error norm, optionally over the trailing `last` steps."""
        if not self.squared_norms:
            raise ContractViolation("trace is empty")
        window = self.squared_norms if last is None else self.squared_norms[-last:]
        return sum(window) / len(window)


def checkpoint_deviation(x: EnvState, x_hat: EnvState) -> float:
    """Observed deviation between true and plan-predicted environment states."""
    return env_difference(x, x_hat, ord=2)


def reward_gap(trace: PlanErrorTrace, l_r: float) -> float:
    """Worst-case per-step reward gap L_r * sqrt(mean ||e||^2) for the run."""
    if l_r <= 0.0:
        raise ContractViolation(f"l_r must be positive, got {l_r}")
    return l_r * math.sqrt(trace.mse())


def _isotropic_scale(A: np.ndarray) -> float | None:
    """Return alpha when A == alpha * I, else None (enables the scalar fast path)."""
    alpha = float(A[0, 0])
    if np.array_equal(A, alpha * np.eye(A.shape[0])):
        return alpha
    return None


def execute_with_checkpoints(
    plan: DraftPlan,
    dyn: LinearDynamics,
    replanner: ReplannerConfig,
    steps: int,
    rng_seed: int,
    action_vectors: dict[str, np.ndarray] | None = None,
    record_vectors: bool = False,
) -> PlanErrorTrace:
    """Run the plan for `steps` transitions and record the error after each.

    The recorded e_t is the pre-contraction error, so with rho=0 and a
    checkpoint at every step the trace is exactly the noise sequence.
    Control inputs act identically on x and x_hat and therefore cancel in
    e_t; they are applied only when action_vectors is provided.
    """
    if steps < 1:
        raise ContractViolation(f"steps must be >= 1, got {steps}")
    d = dyn.dim
    x0 = plan.stages[0][0]
    if x0.dim != d:
        raise ContractViolation(f"plan stage dimension {x0.dim} != dynamics dimension {d}")
    rng = np.random.default_rng(rng_seed)
    # per-coordinate std sigma/sqrt(d) keeps the total noise power at sigma^2
    scale = dyn.noise_sigma / math.sqrt(d)
    noise = rng.normal(0.0, scale, size=(steps, d)) if scale > 0.0 else np.zeros((steps, d))

    trace = PlanErrorTrace()
    rho, theta, every = replanner.rho, plan.theta_ckpt, plan.checkpoint_every
    alpha = _isotropic_scale(dyn.A) if action_vectors is None else None

    if alpha is not None and not record_vectors:
        # scalar fast path: e is a plain list of floats
        w_rows = noise.tolist()
        e = [0.0] * d
        theta_sq = theta * theta
        append_sq = trace.squared_norms.append
        append_fired = trace.contracted.append
        for t in range(steps):
            fired = False
            if t % every == 0 and math.isfinite(theta_sq):
                if sum(v * v for v in e) > theta_sq:
                    e = [rho * v for v in e]
                    fired = True
            w = w_rows[t]
            e = [alpha * e[k] + w[k] for k in range(d)]
            sq = sum(v * v for v in e)
            if not math.isfinite(sq):
                raise NonFiniteStateError(f"planning error diverged at step {t}")
            append_sq(sq)
            append_fired(fired)
        return trace

    e_vec = np.zeros(d)
    for t in range(steps):
        fired = False
        if t % every == 0 and math.isfinite(theta):
            if float(np.linalg.norm(e_vec)) > theta:
                e_vec = rho * e_vec
                fired = True
        e_vec = dyn.A @ e_vec + noise[t]
        sq = float(np.dot(e_vec, e_vec))
        if not math.isfinite(sq):
            raise NonFiniteStateError(f"planning error diverged at step {t}")
        trace.squared_norms.append(sq)
        trace.contracted.append(fired)
        if record_vectors:
            trace.errors.append(e_vec.copy())
    return trace
