"""Shared fixtures: temporary storage, mock answer tables and a synthetic email corpus."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import pytest

from semopt.config.schema import Config
from semopt.core.cache import ResultCache
from semopt.core.datasources import DataSourceDescriptor, DataSourceRegistry, scan
from semopt.core.schemas import SchemaRegistry
from semopt.executor.engine import PlanExecutor
from semopt.generators.manager import BackendManager
from semopt.generators.mock import MockBackend, MockModelTable
from semopt.planner.logical import LogicalPlan, compile_pipeline
from semopt.planner.physical import ParamSpace
from semopt.planner.pipeline import PipelineDescription
from semopt.planner.udfs import UdfRegistry, default_udfs

FRAUD = "The email refers to a fraudulent scheme"
NEWS = "The email is not quoting from a news article"

EMAIL_SCHEMA = {
    "name": "Email",
    "parent": "TextFile",
    "fields": [
        {"name": "sender", "desc": "The email address of the sender"},
        {"name": "subject", "desc": "The subject line of the email"},
    ],
}


def source_id(dataset: str, i: int) -> str:
    return f"{dataset}/e{i:03d}.txt"


def sender(i: int) -> str:
    return f"user{i:03d}@enron.example"


def subject(i: int) -> str:
    return f"Weekly update number {i}"


def write_emails(directory: Path, n: int) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    for i in range(n):
        body = f"Hello team,\nthis is message {i} about the pipeline contracts.\nRegards"
        (directory / f"e{i:03d}.txt").write_text(
            f"From: {sender(i)}\nSubject: {subject(i)}\n\n{body}\n", encoding="utf-8"
        )
    return directory


def legal_table(
    n: int,
    fraud: set[int],
    news: set[int],
    dataset: str = "emails",
    cheap_wrong_on_fraud: bool = True,
    mid_wrong_on_news: bool = True,
    latency_s: float = 0.0,
) -> MockModelTable:
    """Ground truth for every model, with planted mistakes for the cheap and mid tiers."""
    answers: list[dict[str, Any]] = [
        {"kind": "synthesis", "target": "sender", "answer": r"From: (\S+)"},
        {"kind": "synthesis", "target": "subject", "answer": r"Subject: (.+)"},
    ]
    for i in range(n):
        sid = source_id(dataset, i)
        answers.append({"kind": "convert", "target": "sender", "sourceId": sid, "answer": sender(i)})
        answers.append({"kind": "convert", "target": "subject", "sourceId": sid, "answer": subject(i)})
        answers.append({"kind": "filter", "target": FRAUD, "sourceId": sid, "answer": i in fraud})
        answers.append({"kind": "filter", "target": NEWS, "sourceId": sid, "answer": i not in news})
        if cheap_wrong_on_fraud:
            answers.append(
                {"model": "cheap-model", "kind": "filter", "target": FRAUD, "sourceId": sid, "answer": i not in fraud}
            )
        if mid_wrong_on_news:
            answers.append(
                {"model": "mid-model", "kind": "filter", "target": NEWS, "sourceId": sid, "answer": i in news}
            )
    return MockModelTable.model_validate(
        {"models": {"*": {"latencyS": latency_s}}, "answers": answers}
    )


def legal_pipeline(dataset: str = "emails") -> PipelineDescription:
    return PipelineDescription.model_validate(
        {
            "schemas": [EMAIL_SCHEMA],
            "dataset": dataset,
            "ops": [
                {"kind": "convert", "schema": "Email"},
                {"kind": "filter", "predicate": FRAUD},
                {"kind": "filter", "predicate": NEWS},
            ],
        }
    )


@pytest.fixture
def config(tmp_path: Path) -> Config:
    cfg = Config()
    cfg.storage.registry_path = str(tmp_path / "registry.json")
    cfg.storage.cache_dir = str(tmp_path / "cache")
    return cfg


@pytest.fixture
def schemas() -> SchemaRegistry:
    return SchemaRegistry.with_builtins()


@pytest.fixture
def register(config: Config) -> Callable[..., None]:
    """Register a directory as a dataset in the temporary registry."""

    def _register(
        dataset_id: str,
        location: Path,
        kind: str = "directory-of-text-files",
        base_schema: str = "TextFile",
    ) -> None:
        registry = DataSourceRegistry(config.registry_path, SchemaRegistry.with_builtins())
        registry.register(
            DataSourceDescriptor(
                dataset_id=dataset_id, kind=kind, location=str(location), base_schema=base_schema
            )
        )

    return _register


@pytest.fixture
def email_dataset(tmp_path: Path, register) -> Callable[[int], Path]:
    def _make(n: int, dataset_id: str = "emails") -> Path:
        directory = write_emails(tmp_path / dataset_id, n)
        register(dataset_id, directory)
        return directory

    return _make


@dataclass
class Bench:
    """Everything needed to compile and execute plans against the mock backend."""

    config: Config
    schemas: SchemaRegistry
    datasources: DataSourceRegistry
    udfs: UdfRegistry
    backend: MockBackend
    manager: BackendManager
    cache: ResultCache
    space: ParamSpace
    executor: PlanExecutor

    def compile(self, description: dict[str, Any] | PipelineDescription) -> LogicalPlan:
        if isinstance(description, dict):
            description = PipelineDescription.model_validate(description)
        return compile_pipeline(description, self.schemas, self.datasources, self.udfs)

    def scan(self, dataset_id: str):
        return scan(self.datasources.get(dataset_id), self.schemas)


@pytest.fixture
def make_bench(config: Config) -> Callable[..., Bench]:
    def _make(table: MockModelTable | None = None, cache: bool = True) -> Bench:
        schemas = SchemaRegistry.with_builtins()
        udfs = default_udfs()
        backend = MockBackend(config.backends.mock, table or MockModelTable())
        manager = BackendManager(config, {"mock": backend})
        result_cache = ResultCache(config.cache_path, enabled=cache)
        return Bench(
            config=config,
            schemas=schemas,
            datasources=DataSourceRegistry(config.registry_path, schemas),
            udfs=udfs,
            backend=backend,
            manager=manager,
            cache=result_cache,
            space=ParamSpace.from_config(config),
            executor=PlanExecutor(schemas, udfs, manager, result_cache),
        )

    return _make


@pytest.fixture
def write_json(tmp_path: Path) -> Callable[[str, Any], Path]:
    def _write(name: str, data: Any) -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(data, indent=2), encoding="utf-8")
        return path

    return _write
