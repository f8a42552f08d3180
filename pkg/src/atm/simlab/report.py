"""Experiment reports with byte-reproducible serialization.

Floats are formatted with repr(), which round-trips exactly, so two runs
with the same config and seeds produce byte-identical CSV files.  Rows are
emitted in (seed, step) order as produced by the runners, which iterate
seeds in config order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ContractViolation

__all__ = ["ExperimentReport", "canonical_cell"]


def canonical_cell(value) -> str:
    """One deterministic textual form per value; floats via repr round-trip."""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return value
    if hasattr(value, "item"):  # numpy scalars
        return _jsonable(value.item())
    return value


@dataclass
class ExperimentReport:
    """Config echo, per-seed traces, aggregates, and pass/fail verdicts."""

    experiment: str
    config: dict
    seeds: list[int]
    columns: list[str]
    rows: list[tuple] = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    passes: dict = field(default_factory=dict)
    runtime_s: float = 0.0

    def __post_init__(self):
        if not self.seeds:
            raise ContractViolation("a report must record its seeds")

    @property
    def all_passed(self) -> bool:
        return all(self.passes.values())

    def add_row(self, *values) -> None:
        if len(values) != len(self.columns):
            raise ContractViolation(
                f"row has {len(values)} cells, header has {len(self.columns)}"
            )
        self.rows.append(values)

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(canonical_cell(v) for v in row))
        return "\n".join(lines) + "\n"

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.to_csv(), encoding="utf-8")
        return path

    def summary(self) -> dict:
        return {
            "experiment": self.experiment,
            "config": _jsonable(self.config),
            "seeds": list(self.seeds),
            "aggregates": _jsonable(self.aggregates),
            "passes": dict(self.passes),
            "all_passed": self.all_passed,
            "rows": len(self.rows),
            "runtime_s": round(self.runtime_s, 3),
        }

    def write_summary(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(
            json.dumps(self.summary(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        return path
