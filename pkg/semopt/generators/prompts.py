"""Prompt marshaling and response parsing.

Prompt wording is part of the cache identity: bump PROMPT_VERSION whenever
a template below changes.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Literal, Sequence

from semopt.config.schema import ModelSpec
from semopt.core.records import Record
from semopt.core.schemas import FieldSpec, cast_value, reads_bytes
from semopt.errors import PromptTooLargeError
from semopt.generators.tokens import count_tokens, reduce_input

PROMPT_VERSION = "v1"

Cardinality = Literal["oneToOne", "oneToMany"]
OpKind = Literal["convert", "filter", "synthesis"]

CONVERT_SYSTEM = (
    "You are a careful data extraction assistant. "
    "Read the input fields and produce the requested output fields. "
    "Answer only with JSON."
)
FIELD_SYSTEM = (
    "You are a careful data extraction assistant. "
    "Read the input fields and produce the value of the requested output field."
)
FILTER_SYSTEM = (
    "You are a careful assistant that checks whether a record satisfies a condition. "
    "Answer with a single word: true or false."
)
SYNTHESIS_SYSTEM = (
    "You write regular expressions that extract one value from a text. "
    "Answer with the pattern only."
)

# Images are priced as a fixed number of input tokens each.
IMAGE_TOKENS = 85


@dataclass(frozen=True)
class RequestTag:
    """What a request is for; used by the mock backend to look up answers."""

    op_kind: OpKind
    target: str
    source_id: str = ""
    cardinality: Cardinality = "oneToOne"


@dataclass(frozen=True)
class PromptRequest:
    model_id: str
    system_text: str
    user_text: str
    image_payloads: tuple[bytes, ...] = ()
    max_output_tokens: int = 512
    tag: RequestTag | None = None
    target_fields: tuple[str, ...] = ()

    @property
    def prompt_tokens(self) -> int:
        return count_tokens(self.system_text) + count_tokens(self.user_text)

    @property
    def input_tokens(self) -> int:
        return self.prompt_tokens + IMAGE_TOKENS * len(self.image_payloads)


@dataclass(frozen=True)
class GenerationResult:
    text: str
    input_tokens: int
    output_tokens: int
    latency_s: float
    usd: float
    model_id: str = ""


@dataclass
class ParseResult:
    """Outcome of parsing a structured response; failure is a value."""

    ok: bool
    rows: list[dict[str, Any]] = field(default_factory=list)
    error: str = ""

    @classmethod
    def failure(cls, error: str) -> "ParseResult":
        return cls(ok=False, error=error)


# ----------------------------------------------------------------------
# Input rendering
# ----------------------------------------------------------------------


def render_inputs(
    record: Record, fields: Sequence[FieldSpec], budget: float = 1.0
) -> tuple[str, tuple[bytes, ...]]:
    """Labeled key-value text for the input fields, plus any image payloads.

    The token budget applies to each string field separately.
    """
    lines: list[str] = []
    images: list[bytes] = []
    for f in fields:
        value = record.get(f.name)
        if value is None:
            continue
        if reads_bytes(f.kind):
            blobs = [value] if isinstance(value, (bytes, bytearray)) else list(_flatten(value))
            images.extend(bytes(b) for b in blobs)
            lines.append(f"{f.name}: <{len(blobs)} image(s) attached>")
        elif isinstance(value, str):
            lines.append(f"{f.name}: {reduce_input(value, budget)}")
        else:
            lines.append(f"{f.name}: {json.dumps(value, ensure_ascii=False)}")
    return "\n".join(lines), tuple(images)


def _flatten(value: Any):
    for v in value:
        if isinstance(v, (list, tuple)):
            yield from _flatten(v)
        else:
            yield v


def _describe_targets(targets: Sequence[FieldSpec]) -> str:
    return "\n".join(f"- {f.name} ({f.kind}): {f.description}" for f in targets)


def _fit(build, model: ModelSpec, budget: float) -> PromptRequest:
    """Shrink the input budget until the prompt, images included, fits the model context."""
    request = build(budget)
    scale = 1.0
    for _ in range(60):
        if request.input_tokens <= model.context_limit_tokens:
            return request
        if IMAGE_TOKENS * len(request.image_payloads) >= model.context_limit_tokens:
            # images are not reduced by the budget
            break
        scale *= 0.85
        request = build(max(budget * scale, 1e-6))
    raise PromptTooLargeError(
        f"prompt of {request.input_tokens} tokens exceeds {model.model_id} "
        f"context of {model.context_limit_tokens}"
    )


# ----------------------------------------------------------------------
# Prompt builders
# ----------------------------------------------------------------------


def marshal_bonded_prompt(
    record: Record,
    inputs: Sequence[FieldSpec],
    targets: Sequence[FieldSpec],
    model: ModelSpec,
    budget: float = 1.0,
    cardinality: Cardinality = "oneToOne",
    max_output_tokens: int = 512,
) -> PromptRequest:
    """One prompt requesting every target field as a single JSON object.

    Raises:
        PromptTooLargeError: the prompt cannot fit even with reduced input.
    """
    keys = ", ".join(f.name for f in targets)
    if cardinality == "oneToMany":
        instruction = (
            f"Return a JSON list of objects, one per output item, "
            f"each with exactly the keys: {keys}."
        )
    else:
        instruction = f"Return one JSON object with exactly the keys: {keys}."

    def build(b: float) -> PromptRequest:
        text, images = render_inputs(record, inputs, b)
        user = (
            f"Input fields:\n{text}\n\n"
            f"Output fields:\n{_describe_targets(targets)}\n\n"
            f"{instruction}"
        )
        return PromptRequest(
            model_id=model.model_id,
            system_text=CONVERT_SYSTEM,
            user_text=user,
            image_payloads=images,
            max_output_tokens=max_output_tokens,
            tag=RequestTag("convert", "*bonded*", record.source_id, cardinality),
            target_fields=tuple(f.name for f in targets),
        )

    return _fit(build, model, budget)


def marshal_field_prompt(
    record: Record,
    inputs: Sequence[FieldSpec],
    target: FieldSpec,
    model: ModelSpec,
    budget: float = 1.0,
    cardinality: Cardinality = "oneToOne",
    max_output_tokens: int = 512,
) -> PromptRequest:
    """A prompt for a single target field."""
    if cardinality == "oneToMany":
        instruction = "Return a JSON list with one value per output item."
    else:
        instruction = "Answer with the value only."

    def build(b: float) -> PromptRequest:
        text, images = render_inputs(record, inputs, b)
        user = (
            f"Input fields:\n{text}\n\n"
            f"Output field:\n{_describe_targets([target])}\n\n"
            f"{instruction}"
        )
        return PromptRequest(
            model_id=model.model_id,
            system_text=FIELD_SYSTEM,
            user_text=user,
            image_payloads=images,
            max_output_tokens=max_output_tokens,
            tag=RequestTag("convert", target.name, record.source_id, cardinality),
            target_fields=(target.name,),
        )

    return _fit(build, model, budget)


def marshal_filter_prompt(
    record: Record,
    inputs: Sequence[FieldSpec],
    predicate: str,
    model: ModelSpec,
    budget: float = 1.0,
) -> PromptRequest:
    def build(b: float) -> PromptRequest:
        text, images = render_inputs(record, inputs, b)
        user = f"Input fields:\n{text}\n\nCondition: {predicate}\n\nAnswer true or false."
        return PromptRequest(
            model_id=model.model_id,
            system_text=FILTER_SYSTEM,
            user_text=user,
            image_payloads=images,
            max_output_tokens=4,
            tag=RequestTag("filter", predicate, record.source_id),
        )

    return _fit(build, model, budget)


def marshal_synthesis_prompt(
    examples: Sequence[tuple[str, Any]], target: FieldSpec, model: ModelSpec
) -> PromptRequest:
    """Ask for one single-capture-group pattern extracting `target`."""
    shown = "\n\n".join(
        f"Example {i + 1} input:\n{text}\nExample {i + 1} value: {json.dumps(value, ensure_ascii=False)}"
        for i, (text, value) in enumerate(examples)
    )

    def build(_: float) -> PromptRequest:
        user = (
            f"{shown}\n\n"
            f"Field: {target.name} ({target.kind}): {target.description}\n\n"
            "Write a regular expression with exactly one capture group that extracts "
            "this value from every example input."
        )
        return PromptRequest(
            model_id=model.model_id,
            system_text=SYNTHESIS_SYSTEM,
            user_text=user,
            max_output_tokens=128,
            tag=RequestTag("synthesis", target.name),
        )

    return _fit(build, model, 1.0)


# ----------------------------------------------------------------------
# Response parsing
# ----------------------------------------------------------------------


def _json_candidates(text: str):
    decoder = json.JSONDecoder()
    for m in re.finditer(r"[\[{]", text):
        try:
            value, _ = decoder.raw_decode(text, m.start())
        except json.JSONDecodeError:
            continue
        yield value


def _cast_row(row: dict[str, Any], targets: Sequence[FieldSpec]) -> dict[str, Any] | None:
    out: dict[str, Any] = {}
    for f in targets:
        value = row.get(f.name)
        try:
            out[f.name] = cast_value(f.kind, value)
        except (ValueError, TypeError):
            if f.required:
                return None
    return out


def parse_structured_response(
    text: str, targets: Sequence[FieldSpec], cardinality: Cardinality = "oneToOne"
) -> ParseResult:
    """Extract the first well-formed JSON object (or list of objects) from `text`."""
    for value in _json_candidates(text):
        if cardinality == "oneToOne":
            if not isinstance(value, dict):
                continue
            row = _cast_row(value, targets)
            if row is None:
                return ParseResult.failure("missing or malformed required field")
            return ParseResult(ok=True, rows=[row])
        items = value if isinstance(value, list) else [value]
        if not all(isinstance(i, dict) for i in items):
            continue
        rows = [_cast_row(i, targets) for i in items]
        if any(r is None for r in rows):
            return ParseResult.failure("row missing or malformed required field")
        return ParseResult(ok=True, rows=rows)  # type: ignore[arg-type]
    return ParseResult.failure("no structured object in response")


def parse_field_value(text: str, target: FieldSpec, cardinality: Cardinality = "oneToOne"):
    """Parse a per-field answer.

    Returns a single cast value (oneToOne) or a list of them (oneToMany).

    Raises:
        ValueError: the answer cannot be read as the field's kind.
    """
    stripped = text.strip().strip("`").strip()
    if cardinality == "oneToMany":
        for value in _json_candidates(stripped):
            if isinstance(value, list):
                return [cast_value(target.kind, v) for v in value]
        raise ValueError("no JSON list in answer")
    for value in _json_candidates(stripped):
        if isinstance(value, dict) and target.name in value:
            return cast_value(target.kind, value[target.name])
        break
    if target.kind.startswith("list["):
        for value in _json_candidates(stripped):
            if isinstance(value, list):
                return cast_value(target.kind, value)
    if not stripped:
        raise ValueError("empty answer")
    if target.kind == "string" and len(stripped) >= 2 and stripped[0] == stripped[-1] == '"':
        stripped = stripped[1:-1]
    return cast_value(target.kind, stripped)


def parse_verdict(text: str) -> bool:
    """Read a filter verdict; anything that is not a clear boolean is False."""
    words = text.strip().split()
    if not words:
        return False
    try:
        return bool(cast_value("boolean", words[0]))
    except ValueError:
        return False


def parse_pattern(text: str) -> str | None:
    """The first usable single-capture-group pattern in a synthesis answer."""
    for line in text.strip().splitlines():
        candidate = line.strip().strip("`").strip()
        if candidate.startswith("/") and candidate.endswith("/") and len(candidate) > 2:
            candidate = candidate[1:-1]
        if not candidate:
            continue
        try:
            compiled = re.compile(candidate)
        except re.error:
            continue
        if compiled.groups == 1:
            return candidate
    return None
