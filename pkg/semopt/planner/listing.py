"""Human-readable plan listings."""

from __future__ import annotations

from semopt.planner.logical import (
    Aggregate,
    Convert,
    Filter,
    GroupBy,
    Limit,
    LogicalPlan,
    OpContext,
    Project,
    Scan,
)
from semopt.planner.physical import PhysicalOpConfig, PhysicalPlan, Strategy

_OP_NAMES = {
    Scan: "ScanOp",
    Convert: "ConvertOp",
    Filter: "FilterOp",
    Project: "ProjectOp",
    GroupBy: "GroupByOp",
    Limit: "LimitOp",
    Aggregate: "AggregateOp",
}


def _fields_summary(names: list[str], width: int = 15) -> str:
    joined = ",".join(sorted(names))
    if len(joined) > width:
        joined = joined[:width] + "..."
    return f"({joined})"


def _header(ctx: OpContext) -> str:
    name = _OP_NAMES[type(ctx.op.variant)]
    if isinstance(ctx.op.variant, Scan):
        return f"{ctx.index:2d}. {name} -> {ctx.output_schema}"
    return f"{ctx.index:2d}. {ctx.input_schema} -> {name} -> {ctx.output_schema}"


def _body(ctx: OpContext, cfg: PhysicalOpConfig | None) -> list[str]:
    v = ctx.op.variant
    lines: list[str] = []
    if cfg is not None:
        if cfg.strategy is Strategy.UDF:
            lines.append(f"Using UDF {v.udf}")  # type: ignore[union-attr]
        elif cfg.strategy is Strategy.HARDCODED:
            if isinstance(v, Convert):
                lines.append("Using hardcoded function")
        else:
            lines.append(f"Using model {cfg.model_id}")
            lines.append(f"Token budget: {cfg.token_budget}")
            lines.append(f"Query strategy: {cfg.strategy.value}")
    if isinstance(v, Filter) and v.predicate is not None:
        lines.append(f'Filter: "{v.predicate}"')
    elif isinstance(v, Project):
        lines.append(f"Columns: {', '.join(v.columns)}")
    elif isinstance(v, GroupBy):
        lines.append(f"Group by: {', '.join(v.group_fields)}; {v.aggregate}")
    elif isinstance(v, Limit):
        lines.append(f"Limit: {v.n}")
    elif isinstance(v, Aggregate):
        lines.append(f"Aggregate: {v.function}")
    lines.append(
        f"{_fields_summary(list(ctx.available_before))} -> "
        f"{_fields_summary(list(ctx.available_after))}"
    )
    return lines


def render_plan(plan: PhysicalPlan | LogicalPlan) -> str:
    """Render a plan one operator per block, indented details below each header."""
    if isinstance(plan, PhysicalPlan):
        steps = list(plan.steps())
    else:
        steps = [(ctx, None) for ctx in plan.contexts]
    blocks = []
    for ctx, cfg in steps:
        if isinstance(ctx.op.variant, Scan):
            blocks.append(_header(ctx))
            continue
        body = "\n".join(f"    {line}" for line in _body(ctx, cfg))
        blocks.append(f"{_header(ctx)}\n{body}")
    return "\n\n".join(blocks)
