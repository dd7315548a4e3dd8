"""Plan cost estimation from operator statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from loguru import logger

from semopt.config.schema import ModelSpec
from semopt.cost.stats import OperatorStats, StatsKey, StatsTable
from semopt.errors import EstimationError, ParamSpaceError
from semopt.planner.logical import Aggregate, Convert, Filter, GroupBy, Limit, OpContext, Scan
from semopt.planner.physical import (
    ParamSpace,
    PhysicalOpConfig,
    PhysicalPlan,
    Strategy,
    needs_model,
)

DEFAULT_BUDGET_PRIORS = {0.1: 0.7, 0.5: 0.9, 0.9: 0.97, 1.0: 1.0}


@dataclass(frozen=True)
class PlanEstimate:
    fingerprint: str
    est_runtime_s: float
    est_usd: float
    est_quality: float

    def __post_init__(self) -> None:
        for name in ("est_runtime_s", "est_usd", "est_quality"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise EstimationError(f"plan {self.fingerprint[:12]}: {name} is {value}")

    @property
    def triple(self) -> tuple[float, float, float]:
        return (self.est_runtime_s, self.est_usd, self.est_quality)


def budget_prior(budget: float, priors: Mapping[float, float] | None = None) -> float:
    """Quality multiplier for running at `budget` instead of the full input."""
    table = dict(DEFAULT_BUDGET_PRIORS)
    table.update(priors or {})
    table[1.0] = 1.0
    xs = sorted(table)
    return float(np.interp(budget, xs, [table[x] for x in xs]))


class StatsResolver:
    """Find statistics for an (operator, config), extrapolating when unsampled.

    Lookup order: the exact key; the same strategy and model at full budget,
    scaled to the budget; bonded stats for the same model (per-field converts
    pay once per target field); the sentinel model of the same tier.
    """

    def __init__(
        self,
        stats: StatsTable,
        space: ParamSpace | None = None,
        priors: Mapping[float, float] | None = None,
    ):
        self.stats = stats
        self.space = space
        self.priors = priors
        self._memo: dict[tuple[str, str], OperatorStats] = {}
        self._warned: set[str] = set()

    def resolve(self, ctx: OpContext, cfg: PhysicalOpConfig) -> OperatorStats:
        memo_key = (ctx.op.op_id, cfg.config_id)
        if memo_key not in self._memo:
            self._memo[memo_key] = self._resolve(ctx, cfg)
        return self._memo[memo_key]

    def _resolve(self, ctx: OpContext, cfg: PhysicalOpConfig) -> OperatorStats:
        key = StatsKey(ctx.op.op_id, cfg.strategy.value, cfg.model_id or "", cfg.token_budget)
        found = self._for_model(ctx, key, cfg.model_id or "")
        if found is not None:
            return found
        if cfg.model is not None and self.space is not None and cfg.strategy.is_llm:
            try:
                tier_model = self.space.tier_model(cfg.model.tier)
            except ParamSpaceError:
                tier_model = None
            if tier_model is not None and tier_model.model_id != cfg.model_id:
                borrowed = self._for_model(ctx, key, tier_model.model_id)
                if borrowed is not None:
                    return self._reprice(borrowed, key, cfg, tier_model)
        if cfg.strategy is Strategy.CODE_SYNTH:
            # never probed: unusable
            return OperatorStats(key=key, n_samples=0, mean_latency_s=0.0, mean_usd=0.0, quality=0.0)
        if ctx.op.op_id not in self._warned:
            self._warned.add(ctx.op.op_id)
            logger.warning("No sampled statistics reach {}; assuming a free pass-through", ctx.op.op_id)
        return OperatorStats(key=key, n_samples=0, mean_latency_s=0.0, mean_usd=0.0)

    def _for_model(self, ctx: OpContext, key: StatsKey, model_id: str) -> OperatorStats | None:
        exact = StatsKey(key.op_id, key.strategy, model_id, key.token_budget)
        found = self.stats.get(exact)
        if found is not None:
            return found.with_key(key)
        if key.strategy == Strategy.CODE_SYNTH.value:
            return None

        full = self.stats.get(StatsKey(key.op_id, key.strategy, model_id, 1.0))
        if full is not None:
            return self._scale_budget(full, key)

        if key.strategy == Strategy.PER_FIELD.value:
            bonded = self._for_model(
                ctx, StatsKey(key.op_id, Strategy.BONDED.value, model_id, key.token_budget), model_id
            )
            if bonded is not None:
                calls = max(1, len(ctx.target_fields)) if isinstance(ctx.op.variant, Convert) else 1
                return bonded.with_key(
                    key,
                    mean_usd=bonded.mean_usd * calls,
                    mean_latency_s=bonded.mean_latency_s * calls,
                )
        return None

    def _scale_budget(self, full: OperatorStats, key: StatsKey) -> OperatorStats:
        b = key.token_budget
        share = full.input_share
        return full.with_key(
            key,
            mean_usd=full.mean_usd * b,
            mean_latency_s=full.mean_latency_s * (share * b + (1 - share)),
            mean_input_tokens=full.mean_input_tokens * b,
            quality=min(1.0, full.quality * budget_prior(b, self.priors)),
        )

    @staticmethod
    def _reprice(
        borrowed: OperatorStats, key: StatsKey, cfg: PhysicalOpConfig, source: ModelSpec
    ) -> OperatorStats:
        theirs = source.usd_for(borrowed.mean_input_tokens, borrowed.mean_output_tokens)
        ours = cfg.model.usd_for(borrowed.mean_input_tokens, borrowed.mean_output_tokens)
        ratio = ours / theirs if theirs > 0 else 1.0
        return borrowed.with_key(key, mean_usd=borrowed.mean_usd * ratio)


def _next_cardinality(ctx: OpContext, s: OperatorStats, card: float) -> float:
    v = ctx.op.variant
    if isinstance(v, Filter):
        return card * s.selectivity
    if isinstance(v, Convert):
        return card * (s.fanout if v.cardinality == "oneToMany" else s.selectivity)
    if isinstance(v, GroupBy):
        return card * s.fanout
    if isinstance(v, Limit):
        return min(card, float(v.n))
    if isinstance(v, Aggregate):
        return 1.0
    return card


def estimate(
    plan: PhysicalPlan,
    stats: StatsTable | StatsResolver,
    input_count: int,
    mode: str = "serial",
    workers: int = 1,
) -> PlanEstimate:
    """Propagate cardinality front to back and sum per-operator cost.

    Quality is the product over model-requiring operators.

    Raises:
        EstimationError: a statistic is negative or NaN.
    """
    resolver = stats if isinstance(stats, StatsResolver) else StatsResolver(stats)
    card = float(input_count)
    runtime = usd = 0.0
    quality = 1.0
    for ctx, cfg in plan.steps():
        if isinstance(ctx.op.variant, Scan):
            continue
        s = resolver.resolve(ctx, cfg)
        if mode == "parallel":
            runtime += math.ceil(card / workers) * s.mean_latency_s
        else:
            runtime += card * s.mean_latency_s
        usd += card * s.mean_usd
        if needs_model(ctx):
            quality *= s.quality
        card = _next_cardinality(ctx, s, card)
    return PlanEstimate(plan.fingerprint, runtime, usd, quality)
