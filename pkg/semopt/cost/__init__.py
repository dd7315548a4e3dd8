"""Statistics, estimation, Pareto pruning and policy choice."""

from semopt.cost.estimate import PlanEstimate, StatsResolver, budget_prior, estimate
from semopt.cost.pareto import dominates, pareto_frontier
from semopt.cost.policy import (
    Choice,
    MaxQualityAtFixedCost,
    MaxQualityAtFixedRuntime,
    MinCostAtFixedQuality,
    Policy,
    choose,
    describe_policy,
    parse_policy,
)
from semopt.cost.quality import score_quality_vs_champion, token_f1
from semopt.cost.stats import OperatorStats, StatsKey, StatsTable, aggregate_stats

__all__ = [
    "PlanEstimate",
    "StatsResolver",
    "budget_prior",
    "estimate",
    "dominates",
    "pareto_frontier",
    "Choice",
    "MaxQualityAtFixedCost",
    "MaxQualityAtFixedRuntime",
    "MinCostAtFixedQuality",
    "Policy",
    "choose",
    "describe_policy",
    "parse_policy",
    "score_quality_vs_champion",
    "token_f1",
    "OperatorStats",
    "StatsKey",
    "StatsTable",
    "aggregate_stats",
]
