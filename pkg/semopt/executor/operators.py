"""Physical operators: what one configured logical operator does to records."""

from __future__ import annotations

import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Sequence

from loguru import logger

from semopt.core.records import Record, canonical_json
from semopt.core.schemas import SchemaRegistry, cast_value
from semopt.errors import BackendError, PromptTooLargeError, SynthesisError
from semopt.executor.trace import Outcome, TraceEntry
from semopt.generators.manager import BackendManager
from semopt.generators.prompts import GenerationResult
from semopt.generators.strategies import bonded_convert, llm_filter, per_field_convert
from semopt.generators.synthesis import SynthesizedConverter, apply_converter
from semopt.planner.logical import (
    Aggregate,
    Convert,
    Filter,
    GroupBy,
    Limit,
    OpContext,
    Project,
    parse_aggregate,
)
from semopt.planner.physical import PhysicalOpConfig, Strategy
from semopt.planner.udfs import UdfRegistry


@dataclass
class OperatorEnv:
    """Shared, read-only services operators run against."""

    schemas: SchemaRegistry
    udfs: UdfRegistry
    manager: BackendManager
    converters: dict[str, SynthesizedConverter] = field(default_factory=dict)
    max_output_tokens: int = 512


@dataclass
class OpOutput:
    records: list[Record]
    entries: list[TraceEntry]


class PhysicalOperator(ABC):
    """Base class: per-record operators implement `process`, blocking ones `process_all`."""

    blocking = False

    def __init__(self, ctx: OpContext, cfg: PhysicalOpConfig, env: OperatorEnv):
        self.ctx = ctx
        self.cfg = cfg
        self.env = env

    @property
    def op_id(self) -> str:
        return self.ctx.op.op_id

    async def process(self, record: Record) -> OpOutput:
        raise NotImplementedError(f"{type(self).__name__} is a blocking operator")

    async def process_all(self, records: Sequence[Record]) -> OpOutput:
        out = OpOutput([], [])
        for r in records:
            one = await self.process(r)
            out.records.extend(one.records)
            out.entries.extend(one.entries)
        return out

    def entry(
        self,
        record: Record,
        outcome: Outcome,
        n_out: int,
        latency_s: float,
        calls: Sequence[GenerationResult] = (),
        outputs: Sequence[dict[str, Any]] = (),
        passed: bool | None = None,
        error: str = "",
    ) -> TraceEntry:
        return TraceEntry(
            op_id=self.op_id,
            config_id=self.cfg.config_id,
            strategy=self.cfg.strategy.value,
            model_id=self.cfg.model_id or "",
            token_budget=self.cfg.token_budget,
            source_id=record.source_id,
            source_index=record.source_index,
            emit_path=record.emit_path,
            outcome=outcome,
            n_out=n_out,
            latency_s=latency_s,
            usd=sum(c.usd for c in calls),
            input_tokens=sum(c.input_tokens for c in calls),
            output_tokens=sum(c.output_tokens for c in calls),
            calls=len(calls),
            outputs=tuple(outputs),
            passed=passed,
            error=error,
        )


# ----------------------------------------------------------------------
# Per-record operators
# ----------------------------------------------------------------------


class ConvertOperator(PhysicalOperator):
    def __init__(self, ctx: OpContext, cfg: PhysicalOpConfig, env: OperatorEnv):
        super().__init__(ctx, cfg, env)
        self.variant: Convert = ctx.op.variant  # type: ignore[assignment]
        self.converter: SynthesizedConverter | None = None
        if cfg.strategy is Strategy.CODE_SYNTH:
            self.converter = env.converters.get(self.op_id)
            if self.converter is None:
                raise SynthesisError(f"{self.op_id}: no synthesized converter available")

    async def process(self, record: Record) -> OpOutput:
        started = time.perf_counter()
        try:
            rows, calls = await self._rows(record)
        except (BackendError, PromptTooLargeError) as e:
            logger.warning("{} failed on {}: {}", self.op_id, record.source_id, e)
            latency = time.perf_counter() - started
            return OpOutput([], [self.entry(record, "error", 0, latency, e.calls, error=str(e))])
        except Exception as e:
            logger.warning("{} UDF raised on {}: {}", self.op_id, record.source_id, e)
            latency = time.perf_counter() - started
            return OpOutput([], [self.entry(record, "error", 0, latency, error=str(e))])

        latency = _latency(started, calls)
        many = self.variant.cardinality == "oneToMany"
        out: list[Record] = []
        kept: list[dict[str, Any]] = []
        for i, row in enumerate(rows):
            child = record.derive(
                self.variant.target_schema,
                row,
                self.op_id,
                self.cfg.config_id,
                emit_index=i if many else None,
            )
            if child.problems(self.env.schemas):
                continue
            out.append(child)
            kept.append(row)
        outcome: Outcome = "emitted" if out else "dropped"
        return OpOutput(out, [self.entry(record, outcome, len(out), latency, calls, kept)])

    async def _rows(self, record: Record) -> tuple[list[dict[str, Any]], list[GenerationResult]]:
        strategy = self.cfg.strategy
        if strategy is Strategy.HARDCODED:
            return [{}], []
        if strategy is Strategy.UDF:
            produced = self.env.udfs.get_convert(self.variant.udf)(record)
            rows = produced if isinstance(produced, list) else [produced]
            return [r for r in (self._cast(row) for row in rows) if r is not None], []
        if strategy is Strategy.CODE_SYNTH:
            values = apply_converter(self.converter, record, self.ctx.reads)
            return ([values] if values is not None else []), []

        model = self.cfg.model
        args = (
            self.env.manager,
            model,
            record,
            self.ctx.reads,
            self.ctx.target_fields,
            self.cfg.token_budget,
            self.variant.cardinality,
            self.env.max_output_tokens,
        )
        if strategy is Strategy.BONDED:
            outcome = await bonded_convert(*args)
        else:
            outcome = await per_field_convert(*args)
        return outcome.rows, outcome.calls

    def _cast(self, row: dict[str, Any]) -> dict[str, Any] | None:
        out: dict[str, Any] = {}
        for f in self.ctx.target_fields:
            try:
                out[f.name] = cast_value(f.kind, row.get(f.name))
            except ValueError:
                if f.required:
                    return None
        return out


class FilterOperator(PhysicalOperator):
    async def process(self, record: Record) -> OpOutput:
        v: Filter = self.ctx.op.variant  # type: ignore[assignment]
        started = time.perf_counter()
        calls: list[GenerationResult] = []
        try:
            if self.cfg.strategy is Strategy.UDF:
                passed = bool(self.env.udfs.get_filter(v.udf)(record))
            else:
                verdict = await llm_filter(
                    self.env.manager,
                    self.cfg.model,
                    record,
                    self.ctx.reads,
                    v.predicate,
                    self.cfg.token_budget,
                )
                passed, calls = verdict.passed, verdict.calls
        except (BackendError, PromptTooLargeError) as e:
            logger.warning("{} failed on {}: {}", self.op_id, record.source_id, e)
            latency = time.perf_counter() - started
            return OpOutput([], [self.entry(record, "error", 0, latency, e.calls, error=str(e))])
        except Exception as e:
            logger.warning("{} UDF raised on {}: {}", self.op_id, record.source_id, e)
            latency = time.perf_counter() - started
            return OpOutput([], [self.entry(record, "error", 0, latency, error=str(e))])

        latency = _latency(started, calls)
        if passed:
            out = [record.passed(self.op_id, self.cfg.config_id)]
            return OpOutput(out, [self.entry(record, "emitted", 1, latency, calls, passed=True)])
        return OpOutput([], [self.entry(record, "dropped", 0, latency, calls, passed=False)])


class ProjectOperator(PhysicalOperator):
    async def process(self, record: Record) -> OpOutput:
        v: Project = self.ctx.op.variant  # type: ignore[assignment]
        started = time.perf_counter()
        out = record.project(v.columns, self.op_id, self.cfg.config_id)
        latency = time.perf_counter() - started
        return OpOutput([out], [self.entry(record, "emitted", 1, latency)])


# ----------------------------------------------------------------------
# Blocking operators
# ----------------------------------------------------------------------


class LimitOperator(PhysicalOperator):
    blocking = True

    async def process_all(self, records: Sequence[Record]) -> OpOutput:
        n = self.ctx.op.variant.n  # type: ignore[union-attr]
        out = OpOutput([], [])
        for i, r in enumerate(records):
            if i < n:
                out.records.append(r.passed(self.op_id, self.cfg.config_id))
                out.entries.append(self.entry(r, "emitted", 1, 0.0))
            else:
                out.entries.append(self.entry(r, "dropped", 0, 0.0))
        return out


def _aggregate(fn: str, values: list[Any]) -> Any:
    if fn == "count":
        return len(values)
    numbers = [v for v in values if isinstance(v, (int, float)) and not isinstance(v, bool)]
    if fn == "sum":
        return sum(numbers)
    if not numbers:
        return None
    if fn == "avg":
        return sum(numbers) / len(numbers)
    return min(numbers) if fn == "min" else max(numbers)


class GroupByOperator(PhysicalOperator):
    blocking = True

    async def process_all(self, records: Sequence[Record]) -> OpOutput:
        v: GroupBy = self.ctx.op.variant  # type: ignore[assignment]
        fn, field_name, out_name = parse_aggregate(v.aggregate)
        started = time.perf_counter()
        groups: dict[str, list[Record]] = {}
        for r in records:
            key = canonical_json([r.get(g) for g in v.group_fields])
            groups.setdefault(key, []).append(r)

        out = OpOutput([], [])
        leaders: set[int] = set()
        for members in groups.values():
            first = members[0]
            leaders.add(id(first))
            values = {g: first.get(g) for g in v.group_fields}
            values[out_name] = _aggregate(
                fn, [m.get(field_name) for m in members] if field_name else members
            )
            out.records.append(
                Record(
                    schema="GroupBy",
                    values=values,
                    source_id=first.source_id,
                    source_index=first.source_index,
                    lineage=first.lineage + ((self.op_id, self.cfg.config_id),),
                    provenance={k: self.op_id for k in values},
                    emit_path=first.emit_path,
                )
            )
        per_record = (time.perf_counter() - started) / max(1, len(records))
        for r in records:
            if id(r) in leaders:
                out.entries.append(self.entry(r, "emitted", 1, per_record))
            else:
                out.entries.append(self.entry(r, "dropped", 0, per_record))
        return out


class AggregateOperator(PhysicalOperator):
    blocking = True

    async def process_all(self, records: Sequence[Record]) -> OpOutput:
        v: Aggregate = self.ctx.op.variant  # type: ignore[assignment]
        fn, field_name, out_name = parse_aggregate(v.function)
        started = time.perf_counter()
        values = [r.get(field_name) for r in records] if field_name else list(records)
        result = {out_name: _aggregate(fn, values)}
        if records:
            first = records[0]
            source_id, source_index = first.source_id, first.source_index
            lineage = first.lineage
        else:
            source_id, source_index, lineage = "<aggregate>", 0, ()
        record = Record(
            schema="Aggregate",
            values=result,
            source_id=source_id,
            source_index=source_index,
            lineage=lineage + ((self.op_id, self.cfg.config_id),),
            provenance={out_name: self.op_id},
        )
        per_record = (time.perf_counter() - started) / max(1, len(records))
        out = OpOutput([record], [])
        for i, r in enumerate(records):
            out.entries.append(self.entry(r, "emitted" if i == 0 else "dropped", int(i == 0), per_record))
        return out


def _latency(started: float, calls: Sequence[GenerationResult]) -> float:
    """Backend-reported latency when a model was called, wall time otherwise."""
    if calls:
        return sum(c.latency_s for c in calls)
    return time.perf_counter() - started


_OPERATORS: dict[type, type[PhysicalOperator]] = {
    Convert: ConvertOperator,
    Filter: FilterOperator,
    Project: ProjectOperator,
    Limit: LimitOperator,
    GroupBy: GroupByOperator,
    Aggregate: AggregateOperator,
}


def build_operator(ctx: OpContext, cfg: PhysicalOpConfig, env: OperatorEnv) -> PhysicalOperator:
    return _OPERATORS[type(ctx.op.variant)](ctx, cfg, env)
