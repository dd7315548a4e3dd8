"""Schemas, field specifications and the schema registry.

A schema is an ordered set of named, typed fields with natural-language
descriptions. Schemas inherit: the effective fields of a schema are its
parent's effective fields followed by its own.
"""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass, field
from typing import Any, Iterable

from semopt.errors import SchemaError

_SCALAR_KINDS = ("string", "number", "boolean", "bytes")
_KIND_RE = re.compile(r"^(list\[)*(string|number|boolean|bytes)(\])*$")
_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_NUMBER_CLEAN_RE = re.compile(r"[\s,$€£]")


def is_valid_kind(kind: str) -> bool:
    if not _KIND_RE.match(kind):
        return False
    return kind.count("list[") == kind.count("]")


def element_kind(kind: str) -> str | None:
    """Return the element kind of a list kind, or None for scalars."""
    if kind.startswith("list[") and kind.endswith("]"):
        return kind[5:-1]
    return None


def reads_bytes(kind: str) -> bool:
    """True for bytes and (nested) lists of bytes."""
    return kind.replace("list[", "").replace("]", "") == "bytes"


def conforms(kind: str, value: Any) -> bool:
    """Check a Python value against a field kind."""
    inner = element_kind(kind)
    if inner is not None:
        return isinstance(value, (list, tuple)) and all(conforms(inner, v) for v in value)
    if kind == "string":
        return isinstance(value, str)
    if kind == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == "boolean":
        return isinstance(value, bool)
    if kind == "bytes":
        return isinstance(value, (bytes, bytearray))
    return False


def cast_value(kind: str, value: Any) -> Any:
    """Cast a loosely-typed model answer to a field kind.

    Raises:
        ValueError: the value cannot be interpreted as that kind.
    """
    inner = element_kind(kind)
    if inner is not None:
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",") if v.strip()]
        if not isinstance(value, (list, tuple)):
            raise ValueError(f"expected a list for {kind}")
        return [cast_value(inner, v) for v in value]
    if value is None:
        raise ValueError("null value")
    if kind == "string":
        if isinstance(value, (dict, list)):
            raise ValueError("expected a scalar string")
        return value if isinstance(value, str) else str(value)
    if kind == "number":
        if isinstance(value, bool):
            raise ValueError("boolean is not a number")
        if isinstance(value, (int, float)):
            return value
        cleaned = _NUMBER_CLEAN_RE.sub("", str(value))
        number = float(cleaned)
        return int(number) if number.is_integer() and "." not in cleaned else number
    if kind == "boolean":
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower().strip(".!\"'")
        if text in ("true", "yes", "1"):
            return True
        if text in ("false", "no", "0"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if kind == "bytes":
        if isinstance(value, (bytes, bytearray)):
            return bytes(value)
        raise ValueError("expected bytes")
    raise ValueError(f"unknown kind {kind}")


@dataclass(frozen=True)
class FieldSpec:
    """One named, typed, described field."""

    name: str
    description: str
    kind: str = "string"
    required: bool = True

    def __post_init__(self) -> None:
        if not self.name or not _IDENT_RE.match(self.name):
            raise SchemaError(f"invalid field name {self.name!r}")
        if not self.description or not self.description.strip():
            raise SchemaError(f"field {self.name} needs a non-empty description")
        if not is_valid_kind(self.kind):
            raise SchemaError(f"field {self.name} has unknown kind {self.kind!r}")

    @property
    def reads_bytes(self) -> bool:
        return reads_bytes(self.kind)


@dataclass(frozen=True)
class Schema:
    """A named schema with an optional parent."""

    name: str
    fields: tuple[FieldSpec, ...] = ()
    parent: str | None = None
    doc: str = ""

    def own_field(self, name: str) -> FieldSpec | None:
        for f in self.fields:
            if f.name == name:
                return f
        return None


@dataclass
class SchemaRegistry:
    """Registry of defined schemas with inheritance resolution."""

    _schemas: dict[str, Schema] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @classmethod
    def with_builtins(cls) -> "SchemaRegistry":
        registry = cls()
        registry.define_schema(
            "File",
            None,
            [
                FieldSpec("filename", "The name of the file"),
                FieldSpec("contents", "The contents of the file"),
            ],
            doc="A file on disk.",
        )
        registry.define_schema("TextFile", "File", [], doc="A text file.")
        registry.define_schema(
            "FileGroup",
            None,
            [
                FieldSpec("listing", "The name of the listing"),
                FieldSpec("text_content", "The content of the listing's text description"),
                FieldSpec(
                    "image_contents", "A list of the image contents", kind="list[bytes]"
                ),
            ],
            doc="The source text and image data for one group of files.",
        )
        return registry

    def define_schema(
        self,
        name: str,
        parent: str | None,
        fields: Iterable[FieldSpec],
        doc: str = "",
    ) -> Schema:
        """Define and register a schema.

        Raises:
            SchemaError: duplicate field name, kind conflict with the parent,
                inheritance cycle, unknown parent or conflicting redefinition.
        """
        if not name or not _IDENT_RE.match(name):
            raise SchemaError(f"invalid schema name {name!r}")
        fields = tuple(fields)
        seen: set[str] = set()
        for f in fields:
            if f.name in seen:
                raise SchemaError(f"schema {name}: duplicate field name {f.name}")
            seen.add(f.name)

        with self._lock:
            if parent == name:
                raise SchemaError(f"schema {name}: inheritance cycle via {name}")
            if parent is not None:
                chain = self._chain(parent)
                if name in chain:
                    raise SchemaError(
                        f"schema {name}: inheritance cycle via {' -> '.join(chain)}"
                    )
                inherited = {f.name: f for f in self._effective(parent)}
                for f in fields:
                    base = inherited.get(f.name)
                    if base is not None and base.kind != f.kind:
                        raise SchemaError(
                            f"schema {name}: field {f.name} redeclared as {f.kind}, "
                            f"parent {parent} declares {base.kind}"
                        )

            schema = Schema(name=name, fields=fields, parent=parent, doc=doc)
            existing = self._schemas.get(name)
            if existing is not None:
                if existing == schema:
                    return existing
                raise SchemaError(f"schema {name} already defined differently")
            self._schemas[name] = schema
            return schema

    def get(self, name: str) -> Schema:
        try:
            return self._schemas[name]
        except KeyError:
            raise SchemaError(f"unknown schema {name}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._schemas

    def effective_fields(self, schema: Schema | str) -> list[FieldSpec]:
        name = schema if isinstance(schema, str) else schema.name
        return self._effective(name)

    def field_names(self, schema: Schema | str) -> list[str]:
        return [f.name for f in self.effective_fields(schema)]

    def missing_fields(self, input: Schema | str, output: Schema | str) -> list[FieldSpec]:
        """Fields of `output` whose names are absent from `input`, in declaration order."""
        present = set(self.field_names(input))
        return [f for f in self.effective_fields(output) if f.name not in present]

    def _chain(self, name: str) -> list[str]:
        chain: list[str] = []
        current: str | None = name
        while current is not None:
            if current in chain:
                break
            chain.append(current)
            if current not in self._schemas:
                raise SchemaError(f"unknown parent schema {current}")
            current = self._schemas[current].parent
        return chain

    def _effective(self, name: str) -> list[FieldSpec]:
        schema = self.get(name)
        if schema.parent is None:
            return list(schema.fields)
        resolved = self._effective(schema.parent)
        index = {f.name: i for i, f in enumerate(resolved)}
        for f in schema.fields:
            if f.name in index:
                resolved[index[f.name]] = f
            else:
                resolved.append(f)
        return resolved


def missing_fields(
    registry: SchemaRegistry, input: Schema | str, output: Schema | str
) -> list[FieldSpec]:
    """Module-level alias of `SchemaRegistry.missing_fields`."""
    return registry.missing_fields(input, output)
