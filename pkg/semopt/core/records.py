"""Records: one data object conforming to a schema, with lineage."""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Iterable

from semopt.core.schemas import SchemaRegistry, conforms
from semopt.errors import SchemaError


def encode_value(value: Any) -> Any:
    """JSON-safe encoding; bytes become {"__bytes__": base64}."""
    if isinstance(value, (bytes, bytearray)):
        return {"__bytes__": base64.b64encode(bytes(value)).decode("ascii")}
    if isinstance(value, (list, tuple)):
        return [encode_value(v) for v in value]
    if isinstance(value, dict):
        return {k: encode_value(v) for k, v in value.items()}
    return value


def decode_value(value: Any) -> Any:
    if isinstance(value, dict):
        if set(value) == {"__bytes__"}:
            return base64.b64decode(value["__bytes__"])
        return {k: decode_value(v) for k, v in value.items()}
    if isinstance(value, list):
        return [decode_value(v) for v in value]
    return value


def canonical_json(data: Any) -> str:
    return json.dumps(encode_value(data), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class Record:
    """An immutable data object flowing through a plan.

    `source_id` and `source_index` are fixed at scan time and carried
    unchanged by every downstream operator.
    """

    schema: str
    values: dict[str, Any]
    source_id: str
    source_index: int
    lineage: tuple[tuple[str, str], ...] = ()
    provenance: dict[str, str] = field(default_factory=dict)
    emit_path: tuple[int, ...] = ()

    @classmethod
    def create(
        cls,
        registry: SchemaRegistry,
        schema: str,
        values: dict[str, Any],
        source_id: str,
        source_index: int,
        op_id: str = "op00",
    ) -> "Record":
        """Build a base record and check it against its schema."""
        record = cls(
            schema=schema,
            values=dict(values),
            source_id=source_id,
            source_index=source_index,
            provenance={k: op_id for k in values},
        )
        problems = record.problems(registry)
        if problems:
            raise SchemaError(f"record {source_id}: " + "; ".join(problems))
        return record

    @property
    def sort_key(self) -> tuple[int, tuple[int, ...]]:
        return (self.source_index, self.emit_path)

    def get(self, name: str, default: Any = None) -> Any:
        return self.values.get(name, default)

    def __getitem__(self, name: str) -> Any:
        return self.values[name]

    def problems(self, registry: SchemaRegistry, schema: str | None = None) -> list[str]:
        """Required-field and kind violations against a schema."""
        out: list[str] = []
        for f in registry.effective_fields(schema or self.schema):
            if f.name not in self.values or self.values[f.name] is None:
                if f.required:
                    out.append(f"missing required field {f.name}")
                continue
            if not conforms(f.kind, self.values[f.name]):
                out.append(f"field {f.name} is not {f.kind}")
        return out

    def derive(
        self,
        schema: str,
        updates: dict[str, Any],
        op_id: str,
        config_id: str,
        emit_index: int | None = None,
    ) -> "Record":
        """A child record with `updates` merged in and lineage extended."""
        values = dict(self.values)
        values.update(updates)
        provenance = dict(self.provenance)
        provenance.update({k: op_id for k in updates})
        return Record(
            schema=schema,
            values=values,
            source_id=self.source_id,
            source_index=self.source_index,
            lineage=self.lineage + ((op_id, config_id),),
            provenance=provenance,
            emit_path=self.emit_path + ((emit_index,) if emit_index is not None else ()),
        )

    def passed(self, op_id: str, config_id: str) -> "Record":
        """The same record after a filter let it through."""
        return Record(
            schema=self.schema,
            values=self.values,
            source_id=self.source_id,
            source_index=self.source_index,
            lineage=self.lineage + ((op_id, config_id),),
            provenance=self.provenance,
            emit_path=self.emit_path,
        )

    def project(self, columns: Iterable[str], op_id: str, config_id: str) -> "Record":
        keep = list(columns)
        return Record(
            schema=self.schema,
            values={k: self.values[k] for k in keep if k in self.values},
            source_id=self.source_id,
            source_index=self.source_index,
            lineage=self.lineage + ((op_id, config_id),),
            provenance={k: v for k, v in self.provenance.items() if k in keep},
            emit_path=self.emit_path,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": self.schema,
            "values": encode_value(self.values),
            "sourceId": self.source_id,
            "sourceIndex": self.source_index,
            "lineage": [list(pair) for pair in self.lineage],
            "provenance": dict(self.provenance),
            "emitPath": list(self.emit_path),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Record":
        return cls(
            schema=data["schema"],
            values=decode_value(data["values"]),
            source_id=data["sourceId"],
            source_index=int(data["sourceIndex"]),
            lineage=tuple((a, b) for a, b in data.get("lineage", [])),
            provenance=dict(data.get("provenance", {})),
            emit_path=tuple(data.get("emitPath", [])),
        )

    def to_json_line(self) -> str:
        """One structured result line: source identity plus field values."""
        return json.dumps(
            {
                "sourceId": self.source_id,
                "sourceIndex": self.source_index,
                "schema": self.schema,
                "values": encode_value(self.values),
            },
            sort_keys=True,
            ensure_ascii=False,
        )


def fingerprint_records(records: Iterable[Record]) -> str:
    """Content hash over (source_id, values) in order."""
    h = hashlib.sha256()
    for r in records:
        h.update(r.source_id.encode("utf-8"))
        h.update(b"\x00")
        h.update(canonical_json(r.values).encode("utf-8"))
        h.update(b"\x01")
    return h.hexdigest()


def sort_records(records: Iterable[Record]) -> list[Record]:
    return sorted(records, key=lambda r: r.sort_key)
