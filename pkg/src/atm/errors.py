"""Shared exception types.

Every module raises these rather than bare ValueError/KeyError so callers can
distinguish contract breaches (caller bugs) from missing data (normal control
flow) and from planner/transport faults (recoverable with fallback).
"""

from __future__ import annotations


class ContractViolation(ValueError):
    """A precondition or invariant of an operation was violated by the caller."""


class NotFound(LookupError):
    """A lookup had no answer (empty scenario, unknown key, no feedback)."""


class ConfigError(ValueError):
    """An experiment or module configuration is structurally invalid."""


class NonFiniteStateError(RuntimeError):
    """A simulated state became NaN/Inf; carries the step index in the message."""


class PlannerError(RuntimeError):
    """Base class for planner port failures."""


class PlannerTimeout(PlannerError):
    """External planner did not answer within the configured timeout."""


class PlannerTransportError(PlannerError):
    """External planner endpoint unreachable or returned a transport-level error."""


class PlannerSchemaError(PlannerError):
    """External planner answered with a body that does not match the wire schema."""
