"""Content-addressed result cache for plan prefixes.

Each entry lives in its own JSON file named by the hash of its key. A
cached prefix carries both the records it produced and the trace entries
of every operator in the prefix, so replaying a hit reproduces the
statistics of the original run.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from loguru import logger

from semopt.core.records import Record
from semopt.errors import CacheError

_FORMAT_VERSION = 1


@dataclass(frozen=True)
class CacheKey:
    """(dataset slice, plan-prefix fingerprint)."""

    dataset_id: str
    prefix_fingerprint: str

    def __post_init__(self) -> None:
        if not self.dataset_id or not self.prefix_fingerprint:
            raise CacheError("cache key needs a dataset id and a prefix fingerprint")

    @property
    def digest(self) -> str:
        raw = json.dumps([self.dataset_id, self.prefix_fingerprint], separators=(",", ":"))
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CacheEntry:
    key: CacheKey
    records: list[Record]
    trace_entries: list[dict[str, Any]] = field(default_factory=list)
    stats_fingerprint: str = ""


class ResultCache:
    """On-disk cache, one file per entry, immutable once written."""

    def __init__(self, directory: Path, enabled: bool = True):
        self.directory = directory
        self.enabled = enabled
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def _path(self, digest: str, namespace: str = "prefix") -> Path:
        return self.directory / namespace / f"{digest}.json"

    def get(self, key: CacheKey) -> CacheEntry | None:
        """Return the entry for `key`, or None on a miss.

        A corrupted entry counts as a miss and is evicted.
        """
        if not self.enabled:
            return None
        path = self._path(key.digest)
        if not path.exists():
            self.misses += 1
            return None
        try:
            with open(path, encoding="utf-8") as f:
                doc = json.load(f)
            if doc.get("version") != _FORMAT_VERSION:
                raise ValueError("unknown entry format")
            if doc["key"] != [key.dataset_id, key.prefix_fingerprint]:
                raise ValueError("key mismatch")
            body = doc["body"]
            if _checksum(body) != doc["checksum"]:
                raise ValueError("checksum mismatch")
            entry = CacheEntry(
                key=key,
                records=[Record.from_dict(r) for r in body["records"]],
                trace_entries=list(body.get("traceEntries", [])),
                stats_fingerprint=body.get("statsFingerprint", ""),
            )
        except (OSError, ValueError, KeyError, TypeError) as e:
            logger.warning("Evicting corrupted cache entry {}: {}", path.name, e)
            self._evict(path)
            self.misses += 1
            return None
        self.hits += 1
        logger.debug("Cache hit {} ({} records)", key.prefix_fingerprint[:12], len(entry.records))
        return entry

    def put(
        self,
        key: CacheKey,
        records: list[Record],
        trace_entries: list[dict[str, Any]] | None = None,
        stats_fingerprint: str = "",
    ) -> None:
        """Write an entry; an existing entry for the key is left untouched."""
        if not self.enabled:
            return
        body = {
            "records": [r.to_dict() for r in records],
            "traceEntries": trace_entries or [],
            "statsFingerprint": stats_fingerprint,
        }
        doc = {
            "version": _FORMAT_VERSION,
            "key": [key.dataset_id, key.prefix_fingerprint],
            "checksum": _checksum(body),
            "body": body,
        }
        self._write(self._path(key.digest), doc)
        self._index(key)

    def get_document(self, namespace: str, key: str) -> dict[str, Any] | None:
        """Side artifacts (e.g. synthesized converters) stored next to entries."""
        if not self.enabled:
            return None
        path = self._path(_digest(key), namespace)
        if not path.exists():
            return None
        try:
            with open(path, encoding="utf-8") as f:
                doc = json.load(f)
            if doc.get("key") != key or _checksum(doc["body"]) != doc["checksum"]:
                raise ValueError("corrupted document")
            return doc["body"]
        except (OSError, ValueError, KeyError, TypeError) as e:
            logger.warning("Evicting corrupted cache document {}: {}", path.name, e)
            self._evict(path)
            return None

    def put_document(self, namespace: str, key: str, body: dict[str, Any]) -> None:
        if not self.enabled:
            return
        doc = {"key": key, "checksum": _checksum(body), "body": body}
        self._write(self._path(_digest(key), namespace), doc)

    def slices(self, prefix_fingerprint: str) -> list[str]:
        """Dataset slices that hold an entry for `prefix_fingerprint`."""
        if not self.enabled:
            return []
        path = self._path(_digest(prefix_fingerprint), "slices")
        if not path.exists():
            return []
        try:
            with open(path, encoding="utf-8") as f:
                doc = json.load(f)
            if doc.get("key") != prefix_fingerprint:
                raise ValueError("key mismatch")
            return [str(s) for s in doc["slices"]]
        except (OSError, ValueError, KeyError, TypeError) as e:
            logger.warning("Evicting corrupted slice index {}: {}", path.name, e)
            self._evict(path)
            return []

    def _index(self, key: CacheKey) -> None:
        known = self.slices(key.prefix_fingerprint)
        if key.dataset_id in known:
            return
        path = self._path(_digest(key.prefix_fingerprint), "slices")
        doc = {"key": key.prefix_fingerprint, "slices": [*known, key.dataset_id]}
        with self._lock:
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                tmp = path.with_suffix(".tmp")
                with open(tmp, "w", encoding="utf-8") as f:
                    json.dump(doc, f, ensure_ascii=False)
                os.replace(tmp, path)
            except OSError as e:
                raise CacheError(f"cannot write slice index {path}: {e}") from e

    def _write(self, path: Path, doc: dict[str, Any]) -> None:
        with self._lock:
            if path.exists():
                return
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                tmp = path.with_suffix(".tmp")
                with open(tmp, "w", encoding="utf-8") as f:
                    json.dump(doc, f, ensure_ascii=False)
                os.replace(tmp, path)
            except OSError as e:
                raise CacheError(f"cannot write cache entry {path}: {e}") from e

    def _evict(self, path: Path) -> None:
        with self._lock:
            try:
                path.unlink()
            except OSError:
                pass


def _checksum(body: Any) -> str:
    raw = json.dumps(body, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(raw.encode("utf-8")).hexdigest()


def _digest(key: str) -> str:
    return hashlib.sha256(key.encode("utf-8")).hexdigest()
