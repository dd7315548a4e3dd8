"""Per-operator statistics aggregated from sampled execution traces."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Iterator, Mapping

from loguru import logger

from semopt.errors import EstimationError
from semopt.executor.trace import TraceEntry

if TYPE_CHECKING:
    from semopt.planner.physical import PhysicalOpConfig


@dataclass(frozen=True, order=True)
class StatsKey:
    op_id: str
    strategy: str
    model_id: str = ""
    token_budget: float = 1.0

    @classmethod
    def of(cls, entry: TraceEntry) -> "StatsKey":
        return cls(entry.op_id, entry.strategy, entry.model_id, entry.token_budget)

    @classmethod
    def of_config(cls, cfg: "PhysicalOpConfig") -> "StatsKey":
        return cls(cfg.logical_op_id, cfg.strategy.value, cfg.model_id or "", cfg.token_budget)

    @property
    def family(self) -> str:
        return "code_synth" if self.strategy == "code_synth" else "llm"


@dataclass(frozen=True)
class OperatorStats:
    key: StatsKey
    n_samples: int
    mean_latency_s: float
    mean_usd: float
    selectivity: float = 1.0
    fanout: float = 1.0
    quality: float = 1.0
    mean_input_tokens: float = 0.0
    mean_output_tokens: float = 0.0

    def __post_init__(self) -> None:
        for name in ("mean_latency_s", "mean_usd", "selectivity", "fanout", "quality"):
            value = getattr(self, name)
            if math.isnan(value) or value < 0:
                raise EstimationError(f"{self.key}: {name} is {value}")
        if self.selectivity > 1 or self.quality > 1:
            raise EstimationError(f"{self.key}: selectivity/quality above 1")

    @property
    def input_share(self) -> float:
        """Fraction of tokens that are input tokens."""
        total = self.mean_input_tokens + self.mean_output_tokens
        return self.mean_input_tokens / total if total else 1.0

    def with_key(self, key: StatsKey, **changes) -> "OperatorStats":
        return replace(self, key=key, **changes)


_CSV_COLUMNS = [
    "op_id",
    "strategy",
    "model_id",
    "token_budget",
    "n_samples",
    "mean_latency_s",
    "mean_usd",
    "selectivity",
    "fanout",
    "quality",
    "mean_input_tokens",
    "mean_output_tokens",
]


@dataclass
class StatsTable:
    """Statistics by key, built once after sampling and read-only afterwards."""

    rows: dict[StatsKey, OperatorStats] = field(default_factory=dict)
    # (op_id, family, model_id) triples with no usable sample (e.g. synthesis impossible)
    unavailable: set[tuple[str, str, str]] = field(default_factory=set)

    def __contains__(self, key: StatsKey) -> bool:
        return key in self.rows

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[OperatorStats]:
        return iter(self.rows[k] for k in sorted(self.rows))

    def get(self, key: StatsKey) -> OperatorStats | None:
        return self.rows.get(key)

    def add(self, stats: OperatorStats) -> None:
        self.rows[stats.key] = stats

    def for_op(self, op_id: str) -> list[OperatorStats]:
        return [s for s in self if s.key.op_id == op_id]

    def zero_quality_pairs(self) -> set[tuple[str, str, str]]:
        """(op_id, strategy family, model_id) whose sampled quality was 0."""
        zero = {
            (s.key.op_id, s.key.family, s.key.model_id)
            for s in self.rows.values()
            if s.key.model_id and s.quality == 0
        }
        return zero | self.unavailable

    @property
    def fingerprint(self) -> str:
        raw = json.dumps([_row(s) for s in self], sort_keys=True)
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()

    def to_csv(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=_CSV_COLUMNS)
            writer.writeheader()
            for s in self:
                writer.writerow(_row(s))
        logger.info("Wrote {} stats rows to {}", len(self.rows), path)

    @classmethod
    def from_csv(cls, path: Path) -> "StatsTable":
        table = cls()
        with open(path, newline="", encoding="utf-8") as f:
            for row in csv.DictReader(f):
                key = StatsKey(
                    row["op_id"], row["strategy"], row["model_id"], float(row["token_budget"])
                )
                table.add(
                    OperatorStats(
                        key=key,
                        n_samples=int(row["n_samples"]),
                        mean_latency_s=float(row["mean_latency_s"]),
                        mean_usd=float(row["mean_usd"]),
                        selectivity=float(row["selectivity"]),
                        fanout=float(row["fanout"]),
                        quality=float(row["quality"]),
                        mean_input_tokens=float(row["mean_input_tokens"]),
                        mean_output_tokens=float(row["mean_output_tokens"]),
                    )
                )
        return table


def _row(s: OperatorStats) -> dict:
    data = asdict(s)
    key = data.pop("key")
    return {**key, **data}


def aggregate_stats(
    entries: Iterable[TraceEntry], qualities: Mapping[StatsKey, float] | None = None
) -> StatsTable:
    """Per-key means over trace entries.

    Selectivity is the fraction of inputs that produced at least one output;
    fanout is outputs per input. Keys without a quality score get 1.0.
    """
    qualities = qualities or {}
    grouped: dict[StatsKey, list[TraceEntry]] = {}
    for e in entries:
        grouped.setdefault(StatsKey.of(e), []).append(e)

    table = StatsTable()
    for key, group in grouped.items():
        n = len(group)
        table.add(
            OperatorStats(
                key=key,
                n_samples=n,
                mean_latency_s=sum(e.latency_s for e in group) / n,
                mean_usd=sum(e.usd for e in group) / n,
                selectivity=sum(1 for e in group if e.n_out > 0) / n,
                fanout=sum(e.n_out for e in group) / n,
                quality=min(1.0, max(0.0, qualities.get(key, 1.0))),
                mean_input_tokens=sum(e.input_tokens for e in group) / n,
                mean_output_tokens=sum(e.output_tokens for e in group) / n,
            )
        )
    logger.debug("Aggregated {} stats rows", len(table))
    return table
