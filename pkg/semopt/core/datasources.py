"""Datasource registration and scanning."""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Literal

from loguru import logger
from pydantic import Field

from semopt.config.schema import Base
from semopt.core.records import Record, fingerprint_records
from semopt.core.schemas import SchemaRegistry
from semopt.errors import (
    DataSourceError,
    DuplicateDatasetError,
    MissingLocationError,
    SchemaError,
)

DataSourceKind = Literal["directory-of-text-files", "directory-of-file-groups", "single-file"]

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".gif", ".bmp", ".webp")


class DataSourceDescriptor(Base):
    """A named base-level source of data objects."""

    dataset_id: str = Field(min_length=1)
    kind: DataSourceKind
    location: str
    base_schema: str = "TextFile"


class RegistryDocument(Base):
    """On-disk registry layout."""

    datasources: list[DataSourceDescriptor] = Field(default_factory=list)


@dataclass(frozen=True)
class DatasetHandle:
    """Resolved reference to a registered datasource."""

    descriptor: DataSourceDescriptor

    @property
    def dataset_id(self) -> str:
        return self.descriptor.dataset_id

    @property
    def base_schema(self) -> str:
        return self.descriptor.base_schema

    @property
    def location(self) -> Path:
        return Path(self.descriptor.location).expanduser()


class DataSourceRegistry:
    """Datasource registry persisted as a JSON document.

    Readers may run concurrently; writes go through a single lock and an
    atomic file replace.
    """

    def __init__(self, path: Path, schemas: SchemaRegistry):
        self.path = path
        self.schemas = schemas
        self._lock = threading.Lock()
        self._entries: dict[str, DataSourceDescriptor] = {}
        self._load()

    def _load(self) -> None:
        if not self.path.exists():
            return
        try:
            with open(self.path, encoding="utf-8") as f:
                doc = RegistryDocument.model_validate(json.load(f))
        except (json.JSONDecodeError, ValueError) as e:
            raise DataSourceError(f"unreadable datasource registry {self.path}: {e}") from e
        self._entries = {d.dataset_id: d for d in doc.datasources}

    def _save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        doc = RegistryDocument(datasources=list(self._entries.values()))
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(doc.model_dump(by_alias=True), f, indent=2, ensure_ascii=False)
        os.replace(tmp, self.path)

    def register(self, descriptor: DataSourceDescriptor) -> DatasetHandle:
        """Register and persist a datasource.

        Raises:
            DuplicateDatasetError: the id is already registered.
            MissingLocationError: the location does not exist.
        """
        location = Path(descriptor.location).expanduser()
        if not location.exists():
            raise MissingLocationError(f"location {location} does not exist")
        if descriptor.base_schema not in self.schemas:
            raise SchemaError(f"unknown base schema {descriptor.base_schema}")
        with self._lock:
            if descriptor.dataset_id in self._entries:
                raise DuplicateDatasetError(f"dataset {descriptor.dataset_id} already registered")
            self._entries[descriptor.dataset_id] = descriptor
            self._save()
        logger.info("Registered dataset {} ({})", descriptor.dataset_id, descriptor.kind)
        return DatasetHandle(descriptor)

    def get(self, dataset_id: str) -> DatasetHandle:
        try:
            return DatasetHandle(self._entries[dataset_id])
        except KeyError:
            raise DataSourceError(f"unknown dataset {dataset_id}") from None

    def __contains__(self, dataset_id: str) -> bool:
        return dataset_id in self._entries

    @property
    def dataset_ids(self) -> list[str]:
        return sorted(self._entries)


@dataclass
class ScanResult:
    """Scanned base records plus the warnings raised on the way."""

    dataset_id: str
    records: list[Record]
    warnings: list[str] = field(default_factory=list)
    _fingerprint: str | None = field(default=None, repr=False)

    def __iter__(self) -> Iterator[Record]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def fingerprint(self) -> str:
        if self._fingerprint is None:
            self._fingerprint = fingerprint_records(self.records)
        return self._fingerprint

    def slice_key(self, stop: int | None = None) -> str:
        """Dataset component of a cache key for the first `stop` records."""
        stop = len(self.records) if stop is None else min(stop, len(self.records))
        return f"{self.dataset_id}@{self.fingerprint[:16]}[0:{stop}]"

    def slice_stop(self, key: str) -> int | None:
        """Record count of a slice key taken from this scan, None for foreign keys."""
        head = f"{self.dataset_id}@{self.fingerprint[:16]}[0:"
        if not key.startswith(head) or not key.endswith("]"):
            return None
        stop = key[len(head) : -1]
        return int(stop) if stop.isdigit() else None


def scan(handle: DatasetHandle, schemas: SchemaRegistry) -> ScanResult:
    """Read every base object of a datasource into records.

    Files are enumerated in lexicographic filename order; undecodable
    files are skipped with a warning.

    Raises:
        DataSourceError: the location is missing or unreadable.
    """
    location = handle.location
    if not location.exists():
        raise MissingLocationError(f"location {location} does not exist")

    kind = handle.descriptor.kind
    result = ScanResult(dataset_id=handle.dataset_id, records=[])
    try:
        if kind == "single-file":
            rows = [_read_text_file(location, location.name, result)]
        elif kind == "directory-of-text-files":
            rows = [
                _read_text_file(p, p.name, result)
                for p in sorted(location.iterdir(), key=lambda p: p.name)
                if p.is_file() and not p.name.startswith(".")
            ]
        else:
            rows = [
                _read_file_group(p, result)
                for p in sorted(location.iterdir(), key=lambda p: p.name)
                if p.is_dir() and not p.name.startswith(".")
            ]
    except OSError as e:
        raise DataSourceError(f"cannot read {location}: {e}") from e

    for name, values in (r for r in rows if r is not None):
        result.records.append(
            Record.create(
                schemas,
                handle.base_schema,
                values,
                source_id=f"{handle.dataset_id}/{name}",
                source_index=len(result.records),
            )
        )
    logger.info(
        "Scanned {} records from {} ({} warnings)",
        len(result.records),
        handle.dataset_id,
        len(result.warnings),
    )
    return result


def _read_text_file(
    path: Path, name: str, result: ScanResult
) -> tuple[str, dict] | None:
    try:
        contents = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError:
        message = f"skipped undecodable file {path.name}"
        logger.warning("{}: {}", result.dataset_id, message)
        result.warnings.append(message)
        return None
    return name, {"filename": name, "contents": contents}


def _read_file_group(group: Path, result: ScanResult) -> tuple[str, dict] | None:
    files = sorted((p for p in group.iterdir() if p.is_file()), key=lambda p: p.name)
    texts = [p for p in files if p.suffix.lower() == ".txt"]
    if not texts:
        message = f"skipped group {group.name}: no .txt file"
        logger.warning("{}: {}", result.dataset_id, message)
        result.warnings.append(message)
        return None
    try:
        text = texts[0].read_bytes().decode("utf-8")
    except UnicodeDecodeError:
        message = f"skipped group {group.name}: undecodable {texts[0].name}"
        logger.warning("{}: {}", result.dataset_id, message)
        result.warnings.append(message)
        return None
    images = [p.read_bytes() for p in files if p.suffix.lower() in IMAGE_EXTENSIONS]
    return group.name, {
        "listing": group.name,
        "text_content": text,
        "image_contents": images,
    }
