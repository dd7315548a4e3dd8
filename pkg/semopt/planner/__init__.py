"""Logical and physical planning."""

from semopt.planner.listing import render_plan
from semopt.planner.logical import (
    Aggregate,
    Convert,
    Filter,
    GroupBy,
    Limit,
    LogicalOperator,
    LogicalPlan,
    OpContext,
    Project,
    Reorderings,
    Scan,
    compile_pipeline,
    enumerate_reorderings,
    validate_dependencies,
)
from semopt.planner.physical import (
    ParamSpace,
    PhysicalOpConfig,
    PhysicalPlan,
    Strategy,
    enumerate_physical,
    make_sentinels,
    naive_eliminate,
)
from semopt.planner.pipeline import PipelineDescription, load_pipeline, parse_pipeline
from semopt.planner.udfs import UdfRegistry, default_udfs

__all__ = [
    "render_plan",
    "Aggregate",
    "Convert",
    "Filter",
    "GroupBy",
    "Limit",
    "LogicalOperator",
    "LogicalPlan",
    "OpContext",
    "Project",
    "Reorderings",
    "Scan",
    "compile_pipeline",
    "enumerate_reorderings",
    "validate_dependencies",
    "ParamSpace",
    "PhysicalOpConfig",
    "PhysicalPlan",
    "Strategy",
    "enumerate_physical",
    "make_sentinels",
    "naive_eliminate",
    "PipelineDescription",
    "load_pipeline",
    "parse_pipeline",
    "UdfRegistry",
    "default_udfs",
]
