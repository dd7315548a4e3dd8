"""Pipeline description files.

A pipeline description is a JSON document::

    {
      "schemas": [{"name": "Email", "parent": "TextFile",
                   "fields": [{"name": "sender", "desc": "...", "kind": "string"}]}],
      "dataset": "enron-eval",
      "ops": [
        {"kind": "convert", "schema": "Email"},
        {"kind": "filter", "predicate": "The email is not quoting a news article"},
        {"kind": "filter", "udf": "in_price_range", "dependsOn": ["price"]},
        {"kind": "limit", "n": 10}
      ]
    }
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

from pydantic import AliasChoices, Field, ValidationError, field_validator, model_validator

from semopt.config.schema import Base
from semopt.errors import PipelineError


class FieldDescription(Base):
    name: str
    description: str = Field(validation_alias=AliasChoices("desc", "description"))
    kind: str = "string"
    required: bool = True


class SchemaDescription(Base):
    name: str
    parent: str | None = None
    doc: str = ""
    fields: list[FieldDescription] = Field(default_factory=list)


class OpDescription(Base):
    kind: Literal["convert", "filter", "project", "groupby", "limit", "aggregate"]
    target: str | None = Field(default=None, validation_alias=AliasChoices("schema", "target"))
    predicate: str | None = None
    udf: str | None = None
    depends_on: list[str] | None = Field(
        default=None, validation_alias=AliasChoices("dependsOn", "depends_on")
    )
    cardinality: Literal["oneToOne", "oneToMany"] = "oneToOne"
    columns: list[str] | None = None
    group_fields: list[str] | None = Field(
        default=None, validation_alias=AliasChoices("groupFields", "group_fields")
    )
    aggregate: str | None = None
    function: str | None = None
    n: int | None = Field(default=None, ge=0)

    @field_validator("depends_on", mode="before")
    @classmethod
    def _single_dependency(cls, v):
        if isinstance(v, str):
            return [v]
        return v

    @model_validator(mode="after")
    def _check_required(self) -> "OpDescription":
        missing = {
            "convert": self.target is None,
            "filter": self.predicate is None and self.udf is None,
            "project": not self.columns,
            "groupby": not self.group_fields or not self.aggregate,
            "limit": self.n is None,
            "aggregate": not self.function,
        }[self.kind]
        if missing:
            raise ValueError(f"{self.kind} op is missing its required arguments")
        if self.kind == "filter" and self.predicate is not None and self.udf is not None:
            raise ValueError("filter takes either a predicate or a udf, not both")
        return self


class PipelineDescription(Base):
    schemas: list[SchemaDescription] = Field(default_factory=list)
    dataset: str
    ops: list[OpDescription] = Field(default_factory=list)


def parse_pipeline(text: str) -> PipelineDescription:
    """Parse a pipeline description.

    Raises:
        PipelineError: malformed JSON (with line number) or invalid structure.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise PipelineError(e.msg, line=e.lineno) from e
    try:
        return PipelineDescription.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise PipelineError(f"{where}: {first['msg']}") from e


def load_pipeline(path: Path) -> PipelineDescription:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise PipelineError(f"cannot read pipeline {path}: {e}") from e
    return parse_pipeline(text)
