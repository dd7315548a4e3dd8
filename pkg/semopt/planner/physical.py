"""Physical plans: per-operator execution choices over a logical plan."""

from __future__ import annotations

import hashlib
import itertools
import json
import sys
from dataclasses import dataclass, field
if sys.version_info >= (3, 11):
    from enum import StrEnum
else:
    from enum import Enum

    class StrEnum(str, Enum):
        """Backport of enum.StrEnum (Python 3.11+)."""

        __str__ = str.__str__
        __format__ = str.__format__
from functools import cached_property
from typing import TYPE_CHECKING, Iterable, Iterator, Sequence

from loguru import logger

from semopt.config.schema import Config, ModelSpec
from semopt.errors import ParamSpaceError
from semopt.planner.logical import Convert, Filter, LogicalOperator, LogicalPlan, OpContext

if TYPE_CHECKING:
    from semopt.cost.stats import StatsTable


class Strategy(StrEnum):
    HARDCODED = "hardcoded"
    UDF = "udf"
    BONDED = "llm_bonded_with_fallback"
    PER_FIELD = "llm_per_field"
    CODE_SYNTH = "code_synth"

    @property
    def is_llm(self) -> bool:
        return self in (Strategy.BONDED, Strategy.PER_FIELD)


LLM_STRATEGIES = (Strategy.BONDED, Strategy.PER_FIELD)
SYNTH_KINDS = ("string", "number")


def requirement(ctx: OpContext) -> Strategy | None:
    """The fixed strategy of an operator, or None when it needs a model."""
    v = ctx.op.variant
    if isinstance(v, (Convert, Filter)) and v.udf is not None:
        return Strategy.UDF
    if isinstance(v, Filter):
        return None
    if isinstance(v, Convert) and ctx.target_fields:
        return None
    return Strategy.HARDCODED


def needs_model(ctx: OpContext) -> bool:
    return requirement(ctx) is None


def synthesizable(ctx: OpContext) -> bool:
    """Whether a convert can be replaced by a synthesized extraction rule."""
    v = ctx.op.variant
    return (
        isinstance(v, Convert)
        and needs_model(ctx)
        and v.cardinality == "oneToOne"
        and not ctx.reads_bytes
        and all(f.kind in SYNTH_KINDS for f in ctx.target_fields)
    )


@dataclass(frozen=True)
class PhysicalOpConfig:
    """How one logical operator is executed."""

    logical_op_id: str
    strategy: Strategy
    model: ModelSpec | None = None
    token_budget: float = 1.0

    @property
    def model_id(self) -> str | None:
        return self.model.model_id if self.model else None

    @property
    def config_id(self) -> str:
        if self.model is None:
            return self.strategy.value
        return f"{self.strategy.value}:{self.model.model_id}@{self.token_budget:g}"

    def describe(self) -> dict:
        return {
            "op": self.logical_op_id,
            "strategy": self.strategy.value,
            "model": self.model_id,
            "budget": self.token_budget,
        }

    def problems(self) -> list[str]:
        out: list[str] = []
        if self.strategy in (Strategy.HARDCODED, Strategy.UDF):
            if self.model is not None or self.token_budget != 1.0:
                out.append(f"{self.logical_op_id}: {self.strategy} takes no model and full budget")
        elif self.model is None:
            out.append(f"{self.logical_op_id}: {self.strategy} needs a model")
        if self.strategy is Strategy.CODE_SYNTH and self.token_budget != 1.0:
            out.append(f"{self.logical_op_id}: code_synth runs at full budget")
        if not 0 < self.token_budget <= 1:
            out.append(f"{self.logical_op_id}: token budget {self.token_budget} outside (0, 1]")
        return out


def prefix_fingerprint(
    steps: Iterable[tuple[OpContext, PhysicalOpConfig]], backend_identity: str
) -> str:
    """Hash over ordered (operator, config) pairs plus the backend identity.

    Converts contribute their target schema's field definitions so that two
    pipelines declaring the same schema name differently never share entries.
    """
    body = []
    for ctx, cfg in steps:
        entry = ctx.op.describe()
        if isinstance(ctx.op.variant, Convert):
            entry["targets"] = [[f.name, f.kind, f.description] for f in ctx.target_fields]
        entry["config"] = cfg.describe()
        body.append(entry)
    raw = json.dumps([backend_identity, body], sort_keys=True)
    return hashlib.sha256(raw.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class PhysicalPlan:
    """A logical plan bound to one config per operator."""

    logical_plan: LogicalPlan
    configs: tuple[PhysicalOpConfig, ...]
    label: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if len(self.configs) != len(self.logical_plan):
            raise ParamSpaceError(
                f"{len(self.configs)} configs for {len(self.logical_plan)} operators"
            )

    @cached_property
    def fingerprint(self) -> str:
        raw = json.dumps(
            [self.logical_plan.fingerprint, [c.describe() for c in self.configs]],
            sort_keys=True,
        )
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()

    @property
    def is_sentinel(self) -> bool:
        return self.label.startswith("sentinel")

    def steps(self) -> Iterator[tuple[OpContext, PhysicalOpConfig]]:
        return zip(self.logical_plan.contexts, self.configs)

    def config_for(self, op_id: str) -> PhysicalOpConfig:
        for cfg in self.configs:
            if cfg.logical_op_id == op_id:
                return cfg
        raise KeyError(op_id)

    def prefix_fingerprint(self, stop: int, backend_identity: str) -> str:
        """Fingerprint of operators [0, stop)."""
        return prefix_fingerprint(itertools.islice(self.steps(), stop), backend_identity)

    def problems(self) -> list[str]:
        out: list[str] = []
        for ctx, cfg in self.steps():
            if cfg.logical_op_id != ctx.op.op_id:
                out.append(f"config {cfg.logical_op_id} bound to operator {ctx.op.op_id}")
                continue
            out.extend(cfg.problems())
            fixed = requirement(ctx)
            if fixed is not None and cfg.strategy is not fixed:
                out.append(f"{ctx.op.op_id}: must use {fixed.value}")
            if fixed is None and cfg.strategy in (Strategy.HARDCODED, Strategy.UDF):
                out.append(f"{ctx.op.op_id}: needs an LLM or code_synth strategy")
            if cfg.strategy is Strategy.CODE_SYNTH and not synthesizable(ctx):
                out.append(f"{ctx.op.op_id}: code_synth not admissible")
        return out

    @property
    def model_ids(self) -> set[str]:
        return {c.model_id for c in self.configs if c.model_id}


@dataclass(frozen=True)
class ParamSpace:
    """Models, strategies and token budgets available to the enumerator."""

    models: tuple[ModelSpec, ...]
    strategies: tuple[Strategy, ...] = (Strategy.BONDED, Strategy.PER_FIELD, Strategy.CODE_SYNTH)
    budgets: tuple[float, ...] = (0.1, 0.5, 0.9, 1.0)

    @classmethod
    def from_config(cls, config: Config) -> "ParamSpace":
        return cls(
            models=tuple(config.models),
            strategies=tuple(Strategy(s) for s in config.optimizer.strategies),
            budgets=tuple(config.optimizer.budgets),
        )

    @property
    def champion(self) -> ModelSpec:
        for m in self.models:
            if m.tier == "champion":
                return m
        raise ParamSpaceError("no champion model configured")

    def get_model(self, model_id: str) -> ModelSpec:
        for m in self.models:
            if m.model_id == model_id:
                return m
        raise ParamSpaceError(f"unknown model {model_id}")

    def tier_model(self, tier: str) -> ModelSpec:
        for m in self.models:
            if m.tier == tier:
                return m
        raise ParamSpaceError(f"no {tier}-tier model configured")

    def vision_partner(self, model: ModelSpec) -> ModelSpec:
        if model.is_vision:
            return model
        if model.vision_model:
            return self.get_model(model.vision_model)
        return self.tier_model("vision")

    def admissible_models(self, ctx: OpContext) -> list[ModelSpec]:
        if ctx.reads_bytes:
            return [m for m in self.models if m.is_vision]
        return [m for m in self.models if not m.is_vision]

    def options(self, ctx: OpContext) -> list[PhysicalOpConfig]:
        """Every admissible config for one operator."""
        op_id = ctx.op.op_id
        fixed = requirement(ctx)
        if fixed is not None:
            return [PhysicalOpConfig(op_id, fixed)]
        out = [
            PhysicalOpConfig(op_id, strategy, model, budget)
            for strategy in self.strategies
            if strategy.is_llm
            for model in self.admissible_models(ctx)
            for budget in self.budgets
        ]
        if Strategy.CODE_SYNTH in self.strategies and synthesizable(ctx):
            out.append(PhysicalOpConfig(op_id, Strategy.CODE_SYNTH, self.champion, 1.0))
        return out


def enumerate_physical(
    logical_plans: Iterable[LogicalPlan], space: ParamSpace
) -> list[PhysicalPlan]:
    """Cartesian expansion of every logical plan over the parameter space.

    Raises:
        ParamSpaceError: the space is empty or leaves an operator without options.
    """
    if not space.models or not space.budgets or not any(s.is_llm for s in space.strategies):
        raise ParamSpaceError("parameter space needs models, budgets and an LLM strategy")
    seen: dict[str, PhysicalPlan] = {}
    n_logical = 0
    for plan in logical_plans:
        n_logical += 1
        per_op = []
        for ctx in plan.contexts:
            opts = space.options(ctx)
            if not opts:
                raise ParamSpaceError(f"{ctx.op.op_id}: no admissible model")
            per_op.append(opts)
        for combo in itertools.product(*per_op):
            candidate = PhysicalPlan(plan, tuple(combo))
            seen.setdefault(candidate.fingerprint, candidate)
    plans = sorted(seen.values(), key=lambda p: p.fingerprint)
    logger.info("Enumerated {} physical candidates from {} logical plans", len(plans), n_logical)
    return plans


def count_candidates(plan: LogicalPlan, space: ParamSpace) -> int:
    """Closed-form candidate count for one logical plan."""
    total = 1
    for ctx in plan.contexts:
        total *= len(space.options(ctx))
    return total


SENTINEL_TIERS = ("cheap", "mid", "champion")


def make_sentinels(plan: LogicalPlan, space: ParamSpace) -> list[PhysicalPlan]:
    """One plan per model tier, bonded at full budget, in declared order.

    A plan with no model-requiring operator yields a single sentinel.

    Raises:
        ParamSpaceError: a sentinel tier has no configured model.
    """
    tiers = [space.tier_model(t) for t in SENTINEL_TIERS]
    if not any(needs_model(ctx) for ctx in plan.contexts):
        tiers = [space.champion]
    sentinels = []
    for model in tiers:
        configs = []
        for ctx in plan.contexts:
            fixed = requirement(ctx)
            if fixed is not None:
                configs.append(PhysicalOpConfig(ctx.op.op_id, fixed))
                continue
            bound = space.vision_partner(model) if ctx.reads_bytes else model
            configs.append(PhysicalOpConfig(ctx.op.op_id, Strategy.BONDED, bound, 1.0))
        sentinels.append(PhysicalPlan(plan, tuple(configs), label=f"sentinel:{model.tier}"))
    return sentinels


def naive_eliminate(
    candidates: Sequence[PhysicalPlan],
    stats: "StatsTable | None" = None,
    sentinels: Sequence[PhysicalPlan] = (),
) -> list[PhysicalPlan]:
    """Drop duplicates, invalid plans and plans using a model that failed an op.

    Sentinels always survive. For non-empty input the result is never empty:
    with no sentinels and nothing valid, the plan with the fewest problems stays.
    """
    protected = {s.fingerprint for s in sentinels} | {c.fingerprint for c in candidates if c.is_sentinel}
    zero = stats.zero_quality_pairs() if stats is not None else set()
    kept: dict[str, PhysicalPlan] = {}
    dropped = 0
    for plan in candidates:
        if plan.fingerprint in kept:
            continue
        if plan.fingerprint not in protected:
            if plan.problems() or any(
                (cfg.logical_op_id, _family(cfg), cfg.model_id) in zero for cfg in plan.configs
            ):
                dropped += 1
                continue
        kept[plan.fingerprint] = plan
    if not kept and sentinels:
        kept = {s.fingerprint: s for s in sentinels}
    elif not kept and candidates:
        fallback = min(candidates, key=lambda p: len(p.problems()))
        logger.warning("Every candidate was eliminated; keeping {}", fallback.fingerprint[:12])
        kept = {fallback.fingerprint: fallback}
    logger.info("Naive elimination removed {} of {} candidates", dropped, len(candidates))
    return list(kept.values())


def _family(cfg: PhysicalOpConfig) -> str:
    return "code_synth" if cfg.strategy is Strategy.CODE_SYNTH else "llm"
