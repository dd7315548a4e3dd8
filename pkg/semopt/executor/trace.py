"""Execution traces: one entry per (record, operator)."""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Iterable, Literal

from semopt.core.records import decode_value, encode_value

Outcome = Literal["emitted", "dropped", "error"]


@dataclass(frozen=True)
class TraceEntry:
    """What one operator did with one input record."""

    op_id: str
    config_id: str
    strategy: str
    model_id: str
    token_budget: float
    source_id: str
    source_index: int
    emit_path: tuple[int, ...]
    outcome: Outcome
    n_out: int = 0
    latency_s: float = 0.0
    usd: float = 0.0
    input_tokens: int = 0
    output_tokens: int = 0
    calls: int = 0
    # new field values per emitted record (converts) or the verdict (filters)
    outputs: tuple[dict[str, Any], ...] = ()
    passed: bool | None = None
    cached: bool = False
    error: str = ""

    @property
    def record_key(self) -> str:
        return f"{self.source_id}#{'.'.join(map(str, self.emit_path))}"

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["emit_path"] = list(self.emit_path)
        data["outputs"] = [encode_value(o) for o in self.outputs]
        data.pop("cached")
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any], cached: bool = False) -> "TraceEntry":
        body = dict(data)
        body["emit_path"] = tuple(body.get("emit_path", ()))
        body["outputs"] = tuple(decode_value(o) for o in body.get("outputs", ()))
        return cls(**body, cached=cached)

    def as_cached(self) -> "TraceEntry":
        return replace(self, cached=True)


@dataclass
class ExecutionTrace:
    """All entries of one plan execution plus wall-clock time."""

    plan_fingerprint: str = ""
    entries: list[TraceEntry] = field(default_factory=list)
    wall_time_s: float = 0.0

    def add(self, entry: TraceEntry) -> None:
        self.entries.append(entry)

    def extend(self, entries: Iterable[TraceEntry]) -> None:
        self.entries.extend(entries)

    def for_op(self, op_id: str) -> list[TraceEntry]:
        return [e for e in self.entries if e.op_id == op_id]

    @property
    def total_usd(self) -> float:
        return sum(e.usd for e in self.entries)

    @property
    def spent_usd(self) -> float:
        """Cost actually paid in this run (replayed cache entries excluded)."""
        return sum(e.usd for e in self.entries if not e.cached)

    @property
    def total_latency_s(self) -> float:
        return sum(e.latency_s for e in self.entries)

    @property
    def backend_calls(self) -> int:
        return sum(e.calls for e in self.entries if not e.cached)

    def outcome_counts(self, op_id: str) -> Counter:
        """inputs = emitted + dropped + error, per operator."""
        counts: Counter = Counter(e.outcome for e in self.for_op(op_id))
        counts["inputs"] = sum(1 for e in self.entries if e.op_id == op_id)
        return counts

    def summary(self) -> dict[str, Any]:
        ops = sorted({e.op_id for e in self.entries})
        return {
            "totalUsd": self.total_usd,
            "spentUsd": self.spent_usd,
            "totalLatencyS": self.total_latency_s,
            "wallTimeS": self.wall_time_s,
            "operators": {op: dict(self.outcome_counts(op)) for op in ops},
        }
