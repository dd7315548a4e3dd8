"""Logical plans: compilation, dependency validation and reorderings."""

from __future__ import annotations

import hashlib
import itertools
import json
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Union

from loguru import logger

from semopt.core.datasources import DataSourceRegistry
from semopt.core.schemas import FieldSpec, SchemaRegistry
from semopt.errors import PipelineError, PlanError, SchemaError
from semopt.planner.pipeline import PipelineDescription
from semopt.planner.udfs import UdfRegistry

_AGGREGATE_RE = re.compile(r"^(count|sum|avg|min|max)(?:\((\w+)\))?$")


@dataclass(frozen=True)
class Scan:
    dataset_id: str
    schema: str


@dataclass(frozen=True)
class Convert:
    target_schema: str
    depends_on: tuple[str, ...] | None = None
    cardinality: str = "oneToOne"
    udf: str | None = None


@dataclass(frozen=True)
class Filter:
    predicate: str | None = None
    udf: str | None = None
    depends_on: tuple[str, ...] | None = None


@dataclass(frozen=True)
class Project:
    columns: tuple[str, ...]


@dataclass(frozen=True)
class GroupBy:
    group_fields: tuple[str, ...]
    aggregate: str


@dataclass(frozen=True)
class Limit:
    n: int


@dataclass(frozen=True)
class Aggregate:
    function: str


Variant = Union[Scan, Convert, Filter, Project, GroupBy, Limit, Aggregate]

_KIND_NAMES = {
    Scan: "scan",
    Convert: "convert",
    Filter: "filter",
    Project: "project",
    GroupBy: "groupby",
    Limit: "limit",
    Aggregate: "aggregate",
}


def parse_aggregate(spec: str) -> tuple[str, str | None, str]:
    """Split `avg(price)` into (function, field, output name)."""
    m = _AGGREGATE_RE.match(spec.strip())
    if not m:
        raise PipelineError(f"unknown aggregate {spec!r}")
    fn, field_name = m.group(1), m.group(2)
    if fn != "count" and field_name is None:
        raise PipelineError(f"aggregate {fn} needs a field")
    return fn, field_name, "count" if fn == "count" else f"{fn}_{field_name}"


@dataclass(frozen=True)
class LogicalOperator:
    op_id: str
    variant: Variant

    @property
    def kind(self) -> str:
        return _KIND_NAMES[type(self.variant)]

    @property
    def reorderable(self) -> bool:
        return isinstance(self.variant, (Convert, Filter))

    @property
    def depends_on(self) -> tuple[str, ...] | None:
        if isinstance(self.variant, (Convert, Filter)):
            return self.variant.depends_on
        return None

    def describe(self) -> dict:
        body = {"opId": self.op_id, "kind": self.kind}
        for name, value in vars(self.variant).items():
            body[name] = list(value) if isinstance(value, tuple) else value
        return body


@dataclass(frozen=True)
class OpContext:
    """Position-dependent facts about one operator inside a plan."""

    index: int
    op: LogicalOperator
    input_schema: str
    output_schema: str
    available_before: dict[str, FieldSpec]
    available_after: dict[str, FieldSpec]
    target_fields: tuple[FieldSpec, ...] = ()
    reads: tuple[FieldSpec, ...] = ()
    violations: tuple[str, ...] = ()

    @property
    def reads_bytes(self) -> bool:
        return any(f.reads_bytes for f in self.reads)


@dataclass(frozen=True)
class LogicalPlan:
    operators: tuple[LogicalOperator, ...]
    schemas: SchemaRegistry = field(compare=False, repr=False, hash=False)

    @cached_property
    def fingerprint(self) -> str:
        raw = json.dumps([op.describe() for op in self.operators], sort_keys=True)
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()

    @property
    def dataset_id(self) -> str:
        return self.operators[0].variant.dataset_id  # type: ignore[union-attr]

    @property
    def op_ids(self) -> tuple[str, ...]:
        return tuple(op.op_id for op in self.operators)

    def __len__(self) -> int:
        return len(self.operators)

    def reordered(self, operators: tuple[LogicalOperator, ...]) -> "LogicalPlan":
        return LogicalPlan(operators=operators, schemas=self.schemas)

    @cached_property
    def contexts(self) -> tuple[OpContext, ...]:
        return tuple(_analyse(self))

    def context(self, op_id: str) -> OpContext:
        for ctx in self.contexts:
            if ctx.op.op_id == op_id:
                return ctx
        raise KeyError(op_id)


def _analyse(plan: LogicalPlan) -> Iterator[OpContext]:
    registry = plan.schemas
    available: dict[str, FieldSpec] = {}
    label = ""
    for i, op in enumerate(plan.operators):
        v = op.variant
        before = dict(available)
        problems: list[str] = []
        targets: tuple[FieldSpec, ...] = ()
        reads: tuple[FieldSpec, ...] = ()
        in_label = label

        if isinstance(v, Scan):
            if i != 0:
                problems.append(f"{op.op_id}: scan must be the first operator")
            label = in_label = v.schema
            available = {f.name: f for f in registry.effective_fields(v.schema)}
        elif i == 0:
            problems.append(f"{op.op_id}: plan must start with a scan")

        if isinstance(v, (Convert, Filter)):
            deps = v.depends_on
            if deps is None:
                reads = tuple(before.values())
            else:
                missing = [d for d in deps if d not in before]
                if missing:
                    problems.append(
                        f"{op.op_id}: depends on {', '.join(missing)} not produced upstream"
                    )
                reads = tuple(before[d] for d in deps if d in before)
        if isinstance(v, Convert):
            targets = tuple(
                f for f in registry.effective_fields(v.target_schema) if f.name not in before
            )
            for f in registry.effective_fields(v.target_schema):
                available[f.name] = available.get(f.name, f)
            label = v.target_schema
        elif isinstance(v, Project):
            missing = [c for c in v.columns if c not in before]
            if missing:
                problems.append(f"{op.op_id}: projects unknown columns {', '.join(missing)}")
            available = {c: before[c] for c in v.columns if c in before}
        elif isinstance(v, GroupBy):
            missing = [g for g in v.group_fields if g not in before]
            fn, field_name, out = parse_aggregate(v.aggregate)
            if field_name is not None and field_name not in before:
                missing.append(field_name)
            if missing:
                problems.append(f"{op.op_id}: groups on unknown fields {', '.join(missing)}")
            available = {g: before[g] for g in v.group_fields if g in before}
            available[out] = FieldSpec(out, f"{v.aggregate} per group", kind="number")
            label = "GroupBy"
        elif isinstance(v, Aggregate):
            fn, field_name, out = parse_aggregate(v.function)
            if field_name is not None and field_name not in before:
                problems.append(f"{op.op_id}: aggregates unknown field {field_name}")
            available = {out: FieldSpec(out, f"{v.function} over all records", kind="number")}
            label = "Aggregate"

        yield OpContext(
            index=i,
            op=op,
            input_schema=in_label,
            output_schema=label,
            available_before=before,
            available_after=dict(available),
            target_fields=targets,
            reads=reads,
            violations=tuple(problems),
        )


def validate_dependencies(plan: LogicalPlan) -> list[str]:
    """Return the dependency violations of a plan (empty list = valid)."""
    problems: list[str] = []
    scans = sum(1 for op in plan.operators if isinstance(op.variant, Scan))
    if scans != 1:
        problems.append(f"plan has {scans} scans, expected exactly one")
    for ctx in plan.contexts:
        problems.extend(ctx.violations)
    return problems


def compile_pipeline(
    description: PipelineDescription,
    schemas: SchemaRegistry,
    datasources: DataSourceRegistry,
    udfs: UdfRegistry,
) -> LogicalPlan:
    """Compile a pipeline description into its canonical logical plan.

    Raises:
        SchemaError: invalid schema definitions.
        PipelineError: unknown schema, dataset or UDF.
        PlanError: dependency violations.
    """
    for s in description.schemas:
        schemas.define_schema(
            s.name,
            s.parent,
            [FieldSpec(f.name, f.description, kind=f.kind, required=f.required) for f in s.fields],
            doc=s.doc,
        )

    handle = datasources.get(description.dataset)
    ops = [LogicalOperator("op00", Scan(handle.dataset_id, handle.base_schema))]
    for i, d in enumerate(description.ops, start=1):
        op_id = f"op{i:02d}"
        deps = tuple(d.depends_on) if d.depends_on else None
        if d.kind == "convert":
            if d.target not in schemas:
                raise PipelineError(f"{op_id}: unknown schema {d.target}")
            if d.udf is not None:
                udfs.get_convert(d.udf)
            variant: Variant = Convert(d.target, deps, d.cardinality, d.udf)
        elif d.kind == "filter":
            if d.udf is not None:
                udfs.get_filter(d.udf)
            variant = Filter(d.predicate, d.udf, deps)
        elif d.kind == "project":
            variant = Project(tuple(d.columns or ()))
        elif d.kind == "groupby":
            parse_aggregate(d.aggregate or "")
            variant = GroupBy(tuple(d.group_fields or ()), d.aggregate or "")
        elif d.kind == "limit":
            variant = Limit(int(d.n or 0))
        else:
            parse_aggregate(d.function or "")
            variant = Aggregate(d.function or "")
        ops.append(LogicalOperator(op_id, variant))

    plan = LogicalPlan(tuple(ops), schemas)
    problems = validate_dependencies(plan)
    if problems:
        raise PlanError("dependency violation", problems)
    logger.info("Compiled {}-operator plan over {}", len(plan), handle.dataset_id)
    return plan


def compile(
    description: PipelineDescription,
    schemas: SchemaRegistry,
    datasources: DataSourceRegistry,
    udfs: UdfRegistry,
) -> LogicalPlan:
    """Alias of `compile_pipeline`."""
    return compile_pipeline(description, schemas, datasources, udfs)


@dataclass(frozen=True)
class Reorderings:
    """All dependency-respecting orderings of a plan (capped)."""

    plans: tuple[LogicalPlan, ...]
    truncated: bool = False

    def __iter__(self) -> Iterator[LogicalPlan]:
        return iter(self.plans)

    def __len__(self) -> int:
        return len(self.plans)

    @property
    def fingerprints(self) -> set[str]:
        return {p.fingerprint for p in self.plans}


def _blocks(plan: LogicalPlan) -> list[tuple[int, int]]:
    """(start, stop) index ranges of maximal convert/filter runs."""
    spans: list[tuple[int, int]] = []
    start: int | None = None
    for i, op in enumerate(plan.operators):
        if op.reorderable:
            if start is None:
                start = i
        elif start is not None:
            spans.append((start, i))
            start = None
    if start is not None:
        spans.append((start, len(plan.operators)))
    return spans


def precedence_edges(plan: LogicalPlan, start: int, stop: int) -> set[tuple[str, str]]:
    """Ordering constraints (a before b) inside one convert/filter block."""
    ops = plan.operators[start:stop]
    base = set(plan.contexts[start].available_before)
    produced: dict[str, set[str]] = {}
    for op in ops:
        if isinstance(op.variant, Convert):
            names = plan.schemas.field_names(op.variant.target_schema)
            produced[op.op_id] = set(names) - base
    # overlapping converts stay in declared order, so shared fields belong to the earlier one
    own = dict(produced)
    converts = [op.op_id for op in ops if op.op_id in produced]
    for i, a in enumerate(converts):
        for b in converts[i + 1 :]:
            if produced[a] & produced[b]:
                own[b] = own[b] - produced[a]
    edges: set[tuple[str, str]] = set()
    for i, a in enumerate(ops):
        for b in ops[i + 1 :]:
            if _constrained(a, b, produced, own):
                edges.add((a.op_id, b.op_id))
    return edges


def _constrained(
    a: LogicalOperator,
    b: LogicalOperator,
    produced: dict[str, set[str]],
    own: dict[str, set[str]],
) -> bool:
    a_conv = isinstance(a.variant, Convert)
    b_conv = isinstance(b.variant, Convert)
    if not a_conv and not b_conv:
        return False
    if a_conv and b_conv and produced[a.op_id] & produced[b.op_id]:
        return True
    if (a_conv and b.depends_on is None) or (b_conv and a.depends_on is None):
        return True
    if a_conv and b.depends_on is not None and own[a.op_id] & set(b.depends_on):
        return True
    if b_conv and a.depends_on is not None and own[b.op_id] & set(a.depends_on):
        return True
    return False


def linear_extensions(
    op_ids: list[str], edges: set[tuple[str, str]], cap: int | None = None
) -> Iterator[tuple[str, ...]]:
    """Topological orders of `op_ids` in lexicographic generation order."""
    preds = {o: {a for a, b in edges if b == o} for o in op_ids}
    emitted = 0

    def walk(prefix: list[str], remaining: set[str]) -> Iterator[tuple[str, ...]]:
        nonlocal emitted
        if not remaining:
            emitted += 1
            yield tuple(prefix)
            return
        placed = set(prefix)
        for o in sorted(remaining):
            if cap is not None and emitted >= cap:
                return
            if preds[o] <= placed:
                prefix.append(o)
                remaining.remove(o)
                yield from walk(prefix, remaining)
                remaining.add(o)
                prefix.pop()

    yield from walk([], set(op_ids))


def enumerate_reorderings(plan: LogicalPlan, cap: int = 5000) -> Reorderings:
    """Every dependency-respecting ordering of the plan's converts and filters.

    Non-reorderable operators (scan, project, groupby, limit, aggregate)
    keep their positions and split the plan into independent blocks.
    """
    by_id = {op.op_id: op for op in plan.operators}
    spans = _blocks(plan)
    per_block: list[list[tuple[str, ...]]] = []
    truncated = False
    for start, stop in spans:
        ids = [op.op_id for op in plan.operators[start:stop]]
        orders = list(linear_extensions(ids, precedence_edges(plan, start, stop), cap=cap + 1))
        if len(orders) > cap:
            truncated = True
            orders = orders[:cap]
        per_block.append(orders)

    plans: list[LogicalPlan] = []
    seen: set[str] = set()
    for combo in itertools.product(*per_block):
        if len(plans) >= cap:
            truncated = True
            break
        ops = list(plan.operators)
        for (start, stop), order in zip(spans, combo):
            ops[start:stop] = [by_id[o] for o in order]
        candidate = plan.reordered(tuple(ops))
        if candidate.fingerprint in seen:
            continue
        seen.add(candidate.fingerprint)
        plans.append(candidate)

    if truncated:
        logger.warning("Reordering enumeration truncated at {} plans", cap)
    if plan.fingerprint not in seen:
        # the cap cut the input plan off; it is always a member
        plans[-1] = plan
    logger.debug("Enumerated {} logical reorderings", len(plans))
    return Reorderings(tuple(plans), truncated)
