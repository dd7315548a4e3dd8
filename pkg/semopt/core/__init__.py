"""Data model: schemas, records, datasources and the result cache."""

from semopt.core.cache import CacheEntry, CacheKey, ResultCache
from semopt.core.datasources import (
    DataSourceDescriptor,
    DataSourceRegistry,
    DatasetHandle,
    ScanResult,
    scan,
)
from semopt.core.records import Record, fingerprint_records, sort_records
from semopt.core.schemas import FieldSpec, Schema, SchemaRegistry, missing_fields

__all__ = [
    "CacheEntry",
    "CacheKey",
    "ResultCache",
    "DataSourceDescriptor",
    "DataSourceRegistry",
    "DatasetHandle",
    "ScanResult",
    "scan",
    "Record",
    "fingerprint_records",
    "sort_records",
    "FieldSpec",
    "Schema",
    "SchemaRegistry",
    "missing_fields",
]
