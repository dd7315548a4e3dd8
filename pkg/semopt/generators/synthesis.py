"""Code synthesis: replace an LLM convert with extraction rules.

The champion model is shown a few (input, output) samples per target field
and asked for a regular expression with one capture group. Each rule is
scored on every sample; a low score does not reject the converter, the
cost model's quality estimate decides whether it is worth using.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Any, Sequence

from loguru import logger

from semopt.config.schema import ModelSpec
from semopt.core.records import Record, canonical_json
from semopt.core.schemas import FieldSpec, cast_value
from semopt.errors import SynthesisError
from semopt.generators.manager import BackendManager
from semopt.generators.prompts import (
    GenerationResult,
    marshal_synthesis_prompt,
    parse_pattern,
    render_inputs,
)

MAX_EXAMPLES = 5
SYNTH_KINDS = ("string", "number")


@dataclass(frozen=True)
class ExtractionRule:
    """Extracts one field; a rule without a pattern is always absent."""

    field: str
    kind: str
    pattern: str | None
    score: float = 0.0
    required: bool = True

    def extract(self, text: str) -> Any | None:
        if self.pattern is None:
            return None
        m = re.search(self.pattern, text, re.MULTILINE)
        if m is None or m.group(1) is None:
            return None
        try:
            return cast_value(self.kind, m.group(1).strip())
        except ValueError:
            return None


@dataclass(frozen=True)
class SynthesizedConverter:
    op_id: str
    model_id: str
    rules: tuple[ExtractionRule, ...]
    sample_fingerprint: str = ""

    @property
    def validation_score(self) -> float:
        if not self.rules:
            return 0.0
        return sum(r.score for r in self.rules) / len(self.rules)

    def to_dict(self) -> dict[str, Any]:
        return {
            "opId": self.op_id,
            "modelId": self.model_id,
            "sampleFingerprint": self.sample_fingerprint,
            "rules": [
                {
                    "field": r.field,
                    "kind": r.kind,
                    "pattern": r.pattern,
                    "score": r.score,
                    "required": r.required,
                }
                for r in self.rules
            ],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SynthesizedConverter":
        return cls(
            op_id=data["opId"],
            model_id=data["modelId"],
            sample_fingerprint=data.get("sampleFingerprint", ""),
            rules=tuple(
                ExtractionRule(
                    field=r["field"],
                    kind=r["kind"],
                    pattern=r.get("pattern"),
                    score=float(r.get("score", 0.0)),
                    required=bool(r.get("required", True)),
                )
                for r in data["rules"]
            ),
        )


@dataclass
class SynthesisOutcome:
    converter: SynthesizedConverter
    calls: list[GenerationResult] = field(default_factory=list)


def sample_fingerprint(samples: Sequence[tuple[Record, dict[str, Any]]]) -> str:
    h = hashlib.sha256()
    for record, output in samples:
        h.update(canonical_json([record.source_id, record.values, output]).encode("utf-8"))
    return h.hexdigest()


def _matches(expected: Any, actual: Any) -> bool:
    if isinstance(expected, str) and isinstance(actual, str):
        return expected.strip() == actual.strip()
    return expected == actual


async def synthesize_converter(
    op_id: str,
    samples: Sequence[tuple[Record, dict[str, Any]]],
    inputs: Sequence[FieldSpec],
    targets: Sequence[FieldSpec],
    model: ModelSpec,
    manager: BackendManager,
) -> SynthesisOutcome:
    """Ask `model` for one extraction rule per target field and score each rule.

    Raises:
        SynthesisError: fewer than two samples, or a target that is not string/number.
    """
    if len(samples) < 2:
        raise SynthesisError(f"{op_id}: synthesis needs at least 2 samples, got {len(samples)}")
    bad = [t.name for t in targets if t.kind not in SYNTH_KINDS]
    if bad:
        raise SynthesisError(f"{op_id}: cannot synthesize non-string/number fields {bad}")

    texts = [render_inputs(record, inputs)[0] for record, _ in samples]
    calls: list[GenerationResult] = []
    rules: list[ExtractionRule] = []
    for target in targets:
        examples = [
            (text, output.get(target.name))
            for text, (_, output) in zip(texts, samples)
            if output.get(target.name) is not None
        ][:MAX_EXAMPLES]
        request = marshal_synthesis_prompt(examples, target, model)
        result = await manager.generate(model, request)
        calls.append(result)
        pattern = parse_pattern(result.text)
        if pattern is None:
            logger.warning("{}: no usable pattern for {}", op_id, target.name)
            rules.append(ExtractionRule(target.name, target.kind, None, 0.0, target.required))
            continue
        rule = ExtractionRule(target.name, target.kind, pattern, 0.0, target.required)
        hits = sum(
            _matches(output.get(target.name), rule.extract(text))
            for text, (_, output) in zip(texts, samples)
        )
        rules.append(
            ExtractionRule(target.name, target.kind, pattern, hits / len(samples), target.required)
        )

    converter = SynthesizedConverter(op_id, model.model_id, tuple(rules), sample_fingerprint(samples))
    logger.info(
        "Synthesized converter for {} (validation score {:.2f})", op_id, converter.validation_score
    )
    return SynthesisOutcome(converter, calls)


def apply_converter(
    converter: SynthesizedConverter, record: Record, inputs: Sequence[FieldSpec]
) -> dict[str, Any] | None:
    """Apply the rules to a record; None when a required field is not found."""
    text = render_inputs(record, inputs)[0]
    values: dict[str, Any] = {}
    for rule in converter.rules:
        value = rule.extract(text)
        if value is None:
            if rule.required:
                return None
            continue
        values[rule.field] = value
    return values
