"""Deterministic mock backend driven by an answer table."""

from __future__ import annotations

import asyncio
import hashlib
import json
from pathlib import Path
from typing import Any, Literal

from loguru import logger
from pydantic import Field, PrivateAttr

from semopt.config.schema import Base, MockBackendConfig, ModelSpec
from semopt.errors import BackendError
from semopt.generators.base import BaseBackend
from semopt.generators.prompts import GenerationResult, PromptRequest, RequestTag
from semopt.generators.tokens import count_tokens

ANY = "*"
GARBAGE = "~~ #&%$ ~~"
REFUSAL = "I'm sorry, but I can't help with that request."


class MockModelBehavior(Base):
    """How one mock model behaves when the table has no answer for it."""

    latency_s: float = Field(default=0.0, ge=0)
    error_rate: float = Field(default=0.0, ge=0, le=1)
    default: Literal["echo", "garbage", "refuse"] = "echo"


class MockAnswer(Base):
    """A canned answer.

    `model="*"` rows are the ground truth every model falls back to;
    `target="*"` rows are a full raw response for the request.
    """

    model: str = ANY
    kind: Literal["convert", "filter", "synthesis"]
    target: str
    source_id: str = ANY
    answer: Any = None


class MockModelTable(Base):
    models: dict[str, MockModelBehavior] = Field(default_factory=dict)
    answers: list[MockAnswer] = Field(default_factory=list)

    _index: dict[tuple[str, str, str, str], Any] = PrivateAttr(default_factory=dict)

    def model_post_init(self, __context: Any) -> None:
        self._index = {}
        for a in self.answers:
            self._index[(a.model, a.kind, a.target, a.source_id)] = a.answer

    @classmethod
    def load(cls, path: Path) -> "MockModelTable":
        with open(path, encoding="utf-8") as f:
            return cls.model_validate(json.load(f))

    def save(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.model_dump(by_alias=True), f, indent=2, ensure_ascii=False)

    @property
    def fingerprint(self) -> str:
        raw = json.dumps(self.model_dump(by_alias=True), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()

    def behavior(self, model_id: str) -> MockModelBehavior:
        return self.models.get(model_id) or self.models.get(ANY) or MockModelBehavior()

    def lookup(self, model_id: str, kind: str, target: str, source_id: str) -> tuple[bool, Any]:
        """Most specific answer first: own model before truth, exact source before any."""
        for key in (
            (model_id, kind, target, source_id),
            (model_id, kind, target, ANY),
            (ANY, kind, target, source_id),
            (ANY, kind, target, ANY),
        ):
            if key in self._index:
                return True, self._index[key]
        return False, None

    def respond(self, model_id: str, request: PromptRequest) -> str:
        tag = request.tag
        if tag is None:
            return self._default(model_id, request)
        found, raw = self.lookup(model_id, tag.op_kind, ANY, tag.source_id)
        if found:
            return raw if isinstance(raw, str) else json.dumps(raw, ensure_ascii=False)
        if tag.op_kind == "convert" and tag.target == "*bonded*":
            return self._bonded(model_id, request, tag)
        found, answer = self.lookup(model_id, tag.op_kind, tag.target, tag.source_id)
        if not found:
            return self._default(model_id, request)
        if tag.op_kind == "filter" and isinstance(answer, bool):
            return "true" if answer else "false"
        return _render(answer)

    def _bonded(self, model_id: str, request: PromptRequest, tag: RequestTag) -> str:
        values: dict[str, Any] = {}
        for name in request.target_fields:
            found, answer = self.lookup(model_id, "convert", name, tag.source_id)
            if found:
                values[name] = answer
        if not values:
            return self._default(model_id, request)
        if tag.cardinality == "oneToMany":
            width = max((len(v) for v in values.values() if isinstance(v, list)), default=0)
            rows = [
                {k: v[i] for k, v in values.items() if isinstance(v, list) and i < len(v)}
                for i in range(width)
            ]
            return json.dumps(rows, ensure_ascii=False)
        return json.dumps(values, ensure_ascii=False)

    def _default(self, model_id: str, request: PromptRequest) -> str:
        mode = self.behavior(model_id).default
        if mode == "garbage":
            return GARBAGE
        if mode == "refuse":
            return REFUSAL
        return request.user_text


def _render(answer: Any) -> str:
    if isinstance(answer, str):
        return answer
    return json.dumps(answer, ensure_ascii=False)


def _error_draw(model_id: str, request: PromptRequest) -> float:
    """Deterministic pseudo-random draw in [0, 1) for a request."""
    raw = f"{model_id}\x00{request.system_text}\x00{request.user_text}"
    digest = hashlib.sha256(raw.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


class MockBackend(BaseBackend):
    """
    Answers from a MockModelTable.

    Identical requests always yield identical results; latency is simulated
    with a sleep of the model's configured latency.
    """

    name = "mock"

    def __init__(self, config: MockBackendConfig, table: MockModelTable | None = None):
        super().__init__(config)
        if table is None:
            table = (
                MockModelTable.load(Path(config.table_path).expanduser())
                if config.table_path
                else MockModelTable()
            )
        self.table = table
        self._identity = f"mock:{table.fingerprint[:16]}"
        logger.debug(
            "Mock table loaded: {} models, {} answers", len(table.models), len(table.answers)
        )

    @property
    def identity(self) -> str:
        return self._identity

    async def generate(self, model: ModelSpec, request: PromptRequest) -> GenerationResult:
        self._count_call()
        behavior = self.table.behavior(model.model_id)
        if behavior.error_rate and _error_draw(model.model_id, request) < behavior.error_rate:
            raise BackendError(f"mock {model.model_id}: injected failure", retryable=False)

        text = self.table.respond(model.model_id, request)
        if behavior.latency_s:
            await asyncio.sleep(behavior.latency_s)
        return self.price(
            model, text, request.input_tokens, count_tokens(text), behavior.latency_s
        )
