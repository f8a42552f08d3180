"""Association mining over event streams.

Temporal association P(j | i) is the fraction of i-occurrences followed by a
j strictly later but within a step window; occurrences of i near the end of
the stream with no room for a successor still count in the denominator.
Spatial association is the fraction of i-occurrences sharing a location with
some j.  mine_coherence sweeps every ordered pair of event types and keeps
those whose temporal score strictly exceeds the co-occurrence threshold.

All scores are plain occurrence ratios; no significance testing is applied.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field

from .errors import ContractViolation, NotFound

__all__ = [
    "Event",
    "EventStream",
    "CoherenceSet",
    "temporal_assoc",
    "spatial_assoc",
    "mine_coherence",
]


@dataclass(frozen=True)
class Event:
    event_id: str
    step: int
    location_id: str | None = None


@dataclass
class EventStream:
    """Chronologically ordered events; steps may repeat but never go back."""

    events: list[Event] = field(default_factory=list)

    def __post_init__(self):
        for prev, cur in zip(self.events, self.events[1:]):
            if cur.step < prev.step:
                raise ContractViolation(
                    f"event steps must be non-decreasing ({cur.step} after {prev.step})"
                )

    @classmethod
    def from_tuples(cls, rows) -> "EventStream":
        """Build from (event_id, step) or (event_id, step, location_id) tuples."""
        events = [Event(*row) for row in rows]
        return cls(events)

    def append(self, event: Event) -> None:
        if self.events and event.step < self.events[-1].step:
            raise ContractViolation(
                f"event steps must be non-decreasing ({event.step} after {self.events[-1].step})"
            )
        self.events.append(event)

    def __len__(self) -> int:
        return len(self.events)

    def steps_of(self, event_id: str) -> list[int]:
        return [e.step for e in self.events if e.event_id == event_id]

    def event_ids(self) -> list[str]:
        """Distinct event types in first-appearance order."""
        seen: dict[str, None] = {}
        for e in self.events:
            seen.setdefault(e.event_id, None)
        return list(seen)


def _followed_count(steps_i: list[int], steps_j: list[int], window: int) -> int:
    """How many i-occurrences have a j strictly later but within `window` steps."""
    count = 0
    for s in steps_i:
        k = bisect_right(steps_j, s)
        if k < len(steps_j) and steps_j[k] <= s + window:
            count += 1
    return count


def temporal_assoc(
    stream: EventStream, i: str, j: str, window: int, theta_t: float
) -> tuple[float, bool]:
    """P(j soon after i) with the strict step order t_j > t_i."""
    if window < 1:
        raise ContractViolation(f"window must be >= 1, got {window}")
    steps_i = stream.steps_of(i)
    if not steps_i:
        raise NotFound(f"event {i!r} never occurs in the stream")
    steps_j = stream.steps_of(j)
    p = _followed_count(steps_i, steps_j, window) / len(steps_i)
    return p, p > theta_t


def spatial_assoc(stream: EventStream, i: str, j: str, theta_s_spatial: float) -> tuple[float, bool]:
    """P(some j shares the location of an i-occurrence), irrespective of time."""
    occurrences_i = [e for e in stream.events if e.event_id == i]
    if not occurrences_i:
        raise NotFound(f"event {i!r} never occurs in the stream")
    occurrences_j = [e for e in stream.events if e.event_id == j]
    for e in occurrences_i + occurrences_j:
        if e.location_id is None:
            raise ContractViolation(f"event {e.event_id!r} at step {e.step} carries no location")
    locations_j = {e.location_id for e in occurrences_j}
    hits = sum(1 for e in occurrences_i if e.location_id in locations_j)
    p = hits / len(occurrences_i)
    return p, p > theta_s_spatial


@dataclass
class CoherenceSet:
    """Ordered event-type pairs whose association strictly clears the threshold."""

    theta_cooccur: float
    scores: dict[tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self):
        for pair, score in self.scores.items():
            if not score > self.theta_cooccur:
                raise ContractViolation(f"pair {pair} stored with score {score} <= threshold")

    @property
    def pairs(self) -> set[tuple[str, str]]:
        return set(self.scores)

    def __contains__(self, pair: tuple[str, str]) -> bool:
        return pair in self.scores


def mine_coherence(stream: EventStream, window: int, theta_cooccur: float) -> CoherenceSet:
    """Evaluate every ordered pair of event types present in the stream."""
    if window < 1:
        raise ContractViolation(f"window must be >= 1, got {window}")
    by_type: dict[str, list[int]] = {}
    for e in stream.events:
        by_type.setdefault(e.event_id, []).append(e.step)
    scores: dict[tuple[str, str], float] = {}
    for i, steps_i in by_type.items():
        for j, steps_j in by_type.items():
            p = _followed_count(steps_i, steps_j, window) / len(steps_i)
            if p > theta_cooccur:
                scores[(i, j)] = p
    return CoherenceSet(theta_cooccur, scores)
