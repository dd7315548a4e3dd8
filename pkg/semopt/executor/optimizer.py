"""Optimizer driver: compile, sample, estimate, choose and execute.

This module wires the planner, the cost model and the executor into the
end-to-end plan selection loop.
"""

from __future__ import annotations

from dataclasses import dataclass

from loguru import logger

from semopt.config.schema import Config
from semopt.core.cache import ResultCache
from semopt.core.datasources import DataSourceRegistry, ScanResult, scan
from semopt.core.records import Record
from semopt.core.schemas import SchemaRegistry
from semopt.cost.estimate import PlanEstimate, StatsResolver, estimate
from semopt.cost.pareto import pareto_frontier
from semopt.cost.policy import Choice, Policy, choose, describe_policy
from semopt.executor.engine import ExecutionResult, PlanExecutor
from semopt.executor.report import CandidateEstimate, PlanCounts, RunReport, SamplingSummary
from semopt.executor.sampling import SamplingResult, SentinelSampler
from semopt.generators.base import BaseBackend
from semopt.generators.manager import BackendManager
from semopt.planner.listing import render_plan
from semopt.planner.logical import LogicalPlan, Reorderings, compile_pipeline, enumerate_reorderings
from semopt.planner.physical import (
    ParamSpace,
    PhysicalPlan,
    enumerate_physical,
    make_sentinels,
    naive_eliminate,
)
from semopt.planner.pipeline import PipelineDescription
from semopt.planner.udfs import UdfRegistry, default_udfs


@dataclass
class Optimization:
    """Everything the optimizer decided for one pipeline."""

    logical_plan: LogicalPlan
    reorderings: Reorderings
    scan: ScanResult
    sampling: SamplingResult
    candidates: list[PhysicalPlan]
    survivors: list[PhysicalPlan]
    estimates: list[PlanEstimate]
    frontier: list[PlanEstimate]
    choice: Choice
    policy: Policy

    @property
    def chosen(self) -> PhysicalPlan:
        fp = self.choice.estimate.fingerprint
        return next(p for p in self.survivors if p.fingerprint == fp)


class Optimizer:
    """Main optimizer runner."""

    def __init__(
        self,
        config: Config | None = None,
        backends: dict[str, BaseBackend] | None = None,
        udfs: UdfRegistry | None = None,
    ):
        self.config = config or Config()
        self._backends = backends
        self.udfs = udfs or default_udfs()
        self.schemas: SchemaRegistry | None = None
        self.datasources: DataSourceRegistry | None = None
        self.manager: BackendManager | None = None
        self.cache: ResultCache | None = None
        self.space: ParamSpace | None = None
        self.executor: PlanExecutor | None = None

    async def initialize(self) -> None:
        """Initialize registries, backends, cache and executor."""
        if self.executor is not None:
            return
        logger.info("Initializing optimizer...")

        self.schemas = SchemaRegistry.with_builtins()
        self.datasources = DataSourceRegistry(self.config.registry_path, self.schemas)
        self.manager = BackendManager(self.config, self._backends)
        self.cache = ResultCache(self.config.cache_path, self.config.storage.cache_enabled)
        self.space = ParamSpace.from_config(self.config)
        self.executor = PlanExecutor(
            self.schemas,
            self.udfs,
            self.manager,
            self.cache,
            max_output_tokens=self.config.backends.http.max_output_tokens,
        )

        logger.info("Optimizer initialized with {} models", len(self.space.models))

    async def stop(self) -> None:
        """Release backend resources."""
        if self.manager:
            await self.manager.stop()
        logger.info("Optimizer stopped")

    # ------------------------------------------------------------------

    async def optimize(self, description: PipelineDescription, policy: Policy) -> Optimization:
        """Select a plan without running it on the full dataset."""
        await self.initialize()
        plan = compile_pipeline(description, self.schemas, self.datasources, self.udfs)
        reorderings = enumerate_reorderings(plan, self.config.optimizer.reorder_cap)
        if reorderings.truncated:
            logger.warning("Reorderings truncated at {}", self.config.optimizer.reorder_cap)
        logger.info("{} logical plans", len(reorderings))

        data = scan(self.datasources.get(plan.dataset_id), self.schemas)
        execution = self.config.execution
        sentinels = make_sentinels(plan, self.space)
        sampler = SentinelSampler(
            self.executor, self.space, self.config.sampling, execution.mode, execution.workers
        )
        sampling = await sampler.run(sentinels, data)

        candidates = enumerate_physical(reorderings, self.space)
        # sentinels keep their labels when an enumerated twin shares the fingerprint
        known = {s.fingerprint for s in sentinels}
        pool = list(sentinels) + [c for c in candidates if c.fingerprint not in known]
        survivors = naive_eliminate(pool, sampling.stats, sentinels)

        resolver = StatsResolver(
            sampling.stats, self.space, self.config.optimizer.budget_quality_priors
        )
        estimates = [
            estimate(p, resolver, len(data), execution.mode, execution.workers) for p in survivors
        ]
        frontier = pareto_frontier(estimates)
        choice = choose(frontier, policy)
        logger.info(
            "{} candidates, {} after elimination, frontier of {}",
            len(candidates),
            len(survivors),
            len(frontier),
        )
        if not choice.constraint_met:
            logger.warning("No plan meets {}; using the closest one", describe_policy(policy))
        logger.info("Chose plan {}", choice.estimate.fingerprint[:12])
        return Optimization(
            logical_plan=plan,
            reorderings=reorderings,
            scan=data,
            sampling=sampling,
            candidates=candidates,
            survivors=survivors,
            estimates=estimates,
            frontier=frontier,
            choice=choice,
            policy=policy,
        )

    async def run(
        self, description: PipelineDescription, policy: Policy
    ) -> tuple[list[Record], RunReport]:
        """Optimize, then execute the chosen plan over the whole dataset."""
        opt = await self.optimize(description, policy)
        execution = self.config.execution
        result = await self.executor.execute(
            opt.chosen, opt.scan, mode=execution.mode, workers=execution.workers
        )
        return result.records, self.report(opt, result)

    async def explain(self, description: PipelineDescription, policy: Policy) -> RunReport:
        return self.report(await self.optimize(description, policy))

    def report(self, opt: Optimization, result: ExecutionResult | None = None) -> RunReport:
        frontier = {e.fingerprint for e in opt.frontier}
        labels = {p.fingerprint: p.label for p in opt.survivors}
        chosen_fp = opt.choice.estimate.fingerprint
        sampling = opt.sampling
        report = RunReport(
            dataset_id=opt.logical_plan.dataset_id,
            policy=describe_policy(opt.policy),
            constraint_met=opt.choice.constraint_met,
            chosen_fingerprint=chosen_fp,
            chosen_listing=render_plan(opt.chosen),
            counts=PlanCounts(
                logical_plans=len(opt.reorderings),
                reorder_truncated=opt.reorderings.truncated,
                physical_candidates=len(opt.candidates),
                after_elimination=len(opt.survivors),
                frontier=len(opt.frontier),
            ),
            sampling=SamplingSummary(
                sample_size=sampling.sample_size,
                dataset_size=len(opt.scan),
                usd=sampling.overhead_usd,
                runtime_s=sampling.overhead_runtime_s,
                backend_calls=sampling.trace.backend_calls,
                converters=sorted(sampling.converters),
            ),
            candidates=[
                CandidateEstimate(
                    fingerprint=e.fingerprint,
                    label=labels.get(e.fingerprint, ""),
                    est_runtime_s=e.est_runtime_s,
                    est_usd=e.est_usd,
                    est_quality=e.est_quality,
                    on_frontier=e.fingerprint in frontier,
                    chosen=e.fingerprint == chosen_fp,
                )
                for e in opt.estimates
            ],
            cache_hits=self.cache.hits if self.cache else 0,
        )
        if result is not None:
            report.executed = True
            report.output_records = len(result.records)
            report.realized_usd = result.trace.total_usd
            report.spent_usd = result.trace.spent_usd
            report.realized_runtime_s = result.trace.wall_time_s
            report.backend_calls = result.trace.backend_calls
        return report


async def optimize_and_run(
    description: PipelineDescription,
    policy: Policy,
    config: Config | None = None,
    backends: dict[str, BaseBackend] | None = None,
) -> tuple[list[Record], RunReport]:
    """One-shot optimize-and-execute."""
    optimizer = Optimizer(config, backends)
    try:
        return await optimizer.run(description, policy)
    finally:
        await optimizer.stop()
