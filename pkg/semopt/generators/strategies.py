"""Query strategies: bonded-with-fallback and per-field converts, LLM filters."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Literal

from loguru import logger

from semopt.config.schema import ModelSpec
from semopt.core.records import Record
from semopt.core.schemas import FieldSpec
from semopt.errors import BackendError, PromptTooLargeError
from semopt.generators.manager import BackendManager
from semopt.generators.prompts import (
    Cardinality,
    GenerationResult,
    marshal_bonded_prompt,
    marshal_field_prompt,
    marshal_filter_prompt,
    parse_field_value,
    parse_structured_response,
    parse_verdict,
)

ConvertPath = Literal["bonded", "per_field", "drop"]


@dataclass
class ConvertOutcome:
    """Field maps produced for one input record (empty when dropped)."""

    rows: list[dict[str, Any]]
    path: ConvertPath
    calls: list[GenerationResult] = field(default_factory=list)


@dataclass
class FilterOutcome:
    passed: bool
    calls: list[GenerationResult] = field(default_factory=list)


async def bonded_convert(
    manager: BackendManager,
    model: ModelSpec,
    record: Record,
    inputs: list[FieldSpec] | tuple[FieldSpec, ...],
    targets: list[FieldSpec] | tuple[FieldSpec, ...],
    budget: float = 1.0,
    cardinality: Cardinality = "oneToOne",
    max_output_tokens: int = 512,
) -> ConvertOutcome:
    """One prompt for all target fields, falling back to per-field prompts.

    Always ends in bonded success, per-field success or a drop.
    A backend failure propagates with every completion made so far on `calls`.
    """
    request = marshal_bonded_prompt(
        record, inputs, targets, model, budget, cardinality, max_output_tokens
    )
    result = await manager.generate(model, request)
    parsed = parse_structured_response(result.text, targets, cardinality)
    if parsed.ok:
        return ConvertOutcome(parsed.rows, "bonded", [result])
    logger.debug("{}: bonded parse failed ({}), falling back", record.source_id, parsed.error)
    try:
        outcome = await per_field_convert(
            manager, model, record, inputs, targets, budget, cardinality, max_output_tokens
        )
    except (BackendError, PromptTooLargeError) as e:
        e.calls.insert(0, result)
        raise
    outcome.calls.insert(0, result)
    return outcome


async def per_field_convert(
    manager: BackendManager,
    model: ModelSpec,
    record: Record,
    inputs: list[FieldSpec] | tuple[FieldSpec, ...],
    targets: list[FieldSpec] | tuple[FieldSpec, ...],
    budget: float = 1.0,
    cardinality: Cardinality = "oneToOne",
    max_output_tokens: int = 512,
) -> ConvertOutcome:
    """One prompt per target field; a required field that fails drops the record."""
    calls: list[GenerationResult] = []
    values: dict[str, Any] = {}
    for target in targets:
        try:
            request = marshal_field_prompt(
                record, inputs, target, model, budget, cardinality, max_output_tokens
            )
            result = await manager.generate(model, request)
        except (BackendError, PromptTooLargeError) as e:
            e.calls[:0] = calls
            raise
        calls.append(result)
        try:
            values[target.name] = parse_field_value(result.text, target, cardinality)
        except ValueError:
            if target.required:
                return ConvertOutcome([], "drop", calls)

    if cardinality == "oneToOne":
        return ConvertOutcome([values], "per_field", calls)

    width = max((len(v) for v in values.values()), default=0)
    rows = []
    for i in range(width):
        row = {name: column[i] for name, column in values.items() if i < len(column)}
        if all(t.name in row for t in targets if t.required):
            rows.append(row)
    return ConvertOutcome(rows, "per_field" if rows else "drop", calls)


async def llm_filter(
    manager: BackendManager,
    model: ModelSpec,
    record: Record,
    inputs: list[FieldSpec] | tuple[FieldSpec, ...],
    predicate: str,
    budget: float = 1.0,
) -> FilterOutcome:
    request = marshal_filter_prompt(record, inputs, predicate, model, budget)
    result = await manager.generate(model, request)
    return FilterOutcome(parse_verdict(result.text), [result])
