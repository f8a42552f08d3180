"""Hermetic agent runtime: scenario memory, exploratory method selection,
utility-gated task upkeep, checkpointed plan execution, and multi-channel
self-measurement, plus a simulation lab that checks the quantitative claims.
"""

from .errors import (
    ConfigError,
    ContractViolation,
    NonFiniteStateError,
    NotFound,
    PlannerError,
    PlannerSchemaError,
    PlannerTimeout,
    PlannerTransportError,
)
from .world import (
    ChangeDetector,
    EnvState,
    ScenarioKey,
    SysState,
    WorldConfig,
    concat_state,
    env_difference,
    scenario_key,
)
from .memory import MemoryConfig, ScenarioMemory, update_weight
from .selection import (
    Evaluator,
    Method,
    MethodSelector,
    SelectionConfig,
    blend_evaluator,
    epsilon_schedule,
    eta_schedule,
    intuition_fallback,
    reuse_similar,
)
from .planner import (
    ExternalPlanner,
    ImprovementSuggestion,
    PlannerPort,
    PlanRequest,
    PlanResponse,
    ScriptedPlanner,
)
from .executor import (
    DraftPlan,
    LinearDynamics,
    PlanErrorTrace,
    ReplannerConfig,
    execute_with_checkpoints,
)
from .measurement import (
    ChannelThresholds,
    Flag,
    MeasurementReport,
    SimulatorPort,
    aggregate_reward,
    build_report,
    contradiction_check,
    simulate_compare,
)
from .patterns import CoherenceSet, Event, EventStream, mine_coherence, spatial_assoc, temporal_assoc
from .tasking import Goal, Task, TaskSetConfig, compliance, run_spare_time, step_task, update_task_set

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractViolation",
    "NonFiniteStateError",
    "NotFound",
    "PlannerError",
    "PlannerSchemaError",
    "PlannerTimeout",
    "PlannerTransportError",
    "ChangeDetector",
    "EnvState",
    "ScenarioKey",
    "SysState",
    "WorldConfig",
    "concat_state",
    "env_difference",
    "scenario_key",
    "MemoryConfig",
    "ScenarioMemory",
    "update_weight",
    "MethodSelector",
    "SelectionConfig",
    "Method",
    "Evaluator",
    "blend_evaluator",
    "epsilon_schedule",
    "eta_schedule",
    "intuition_fallback",
    "reuse_similar",
    "ExternalPlanner",
    "ImprovementSuggestion",
    "PlannerPort",
    "PlanRequest",
    "PlanResponse",
    "ScriptedPlanner",
    "DraftPlan",
    "LinearDynamics",
    "PlanErrorTrace",
    "ReplannerConfig",
    "execute_with_checkpoints",
    "ChannelThresholds",
    "Flag",
    "MeasurementReport",
    "SimulatorPort",
    "aggregate_reward",
    "build_report",
    "contradiction_check",
    "simulate_compare",
    "CoherenceSet",
    "Event",
    "EventStream",
    "mine_coherence",
    "spatial_assoc",
    "temporal_assoc",
    "Goal",
    "Task",
    "TaskSetConfig",
    "compliance",
    "run_spare_time",
    "step_task",
    "update_task_set",
    "__version__",
]
