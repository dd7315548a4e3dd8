"""Sentinel sampling: run one plan per model tier on a prefix of the data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

from loguru import logger

from semopt.config.schema import SampleConfig
from semopt.core.cache import CacheKey
from semopt.core.datasources import ScanResult
from semopt.core.records import Record
from semopt.cost.quality import score_quality_vs_champion
from semopt.cost.stats import StatsKey, StatsTable, aggregate_stats
from semopt.errors import SamplingError, SynthesisError
from semopt.executor.engine import PlanExecutor
from semopt.executor.trace import ExecutionTrace, TraceEntry
from semopt.generators.synthesis import (
    SynthesizedConverter,
    sample_fingerprint,
    synthesize_converter,
)
from semopt.planner.logical import Convert, OpContext
from semopt.planner.physical import (
    ParamSpace,
    PhysicalOpConfig,
    PhysicalPlan,
    Strategy,
    needs_model,
    prefix_fingerprint,
    synthesizable,
)

SYNTHESIS = "synthesis"


def sample_size(n: int, config: SampleConfig) -> int:
    """min(n, max_samples, max(min_samples, ceil(fraction * n)))."""
    if n <= 0:
        return 0
    want = max(config.min_samples, math.ceil(round(config.fraction * n, 9)))
    return min(n, config.max_samples, want)


@dataclass
class SamplingResult:
    sample_size: int
    stats: StatsTable
    trace: ExecutionTrace
    converters: dict[str, SynthesizedConverter] = field(default_factory=dict)
    qualities: dict[StatsKey, float] = field(default_factory=dict)

    @property
    def overhead_usd(self) -> float:
        return self.trace.total_usd

    @property
    def overhead_runtime_s(self) -> float:
        return self.trace.total_latency_s


def _champion(sentinels: Sequence[PhysicalPlan]) -> PhysicalPlan:
    for s in sentinels:
        if s.label == "sentinel:champion":
            return s
    return sentinels[-1]


def _filter_verdicts(entries: Sequence[TraceEntry]) -> dict[str, bool]:
    return {e.record_key: bool(e.passed) for e in entries if e.outcome != "error"}


def _convert_outputs(entries: Sequence[TraceEntry]) -> dict[str, list[dict[str, Any]]]:
    return {e.record_key: list(e.outputs) for e in entries if e.outcome != "error"}


def _score(ctx: OpContext, champion: Sequence[TraceEntry], candidate: Sequence[TraceEntry]) -> float:
    if isinstance(ctx.op.variant, Convert):
        theirs = _convert_outputs(champion)
        mine = {k: v for k, v in _convert_outputs(candidate).items() if k in theirs}
        return score_quality_vs_champion(mine, theirs, "convert", ctx.target_fields)
    theirs_f = _filter_verdicts(champion)
    mine_f = {k: v for k, v in _filter_verdicts(candidate).items() if k in theirs_f}
    return score_quality_vs_champion(mine_f, theirs_f, "filter")


class SentinelSampler:
    """Collects per-operator statistics from sentinel plans on the champion's stream.

    The champion sentinel runs end to end; every other sentinel's config for
    operator i is run on the champion's input to operator i and scored
    against the champion's outputs.
    """

    def __init__(
        self,
        executor: PlanExecutor,
        space: ParamSpace,
        config: SampleConfig,
        mode: str = "serial",
        workers: int = 1,
    ):
        self.executor = executor
        self.space = space
        self.config = config
        self.mode = mode
        self.workers = workers

    async def run(self, sentinels: Sequence[PhysicalPlan], scan_result: ScanResult) -> SamplingResult:
        """Run the sentinels over the sampled prefix and aggregate statistics.

        Raises:
            SamplingError: no sentinels, or the champion failed on every sampled record.
        """
        if not sentinels:
            raise SamplingError("no sentinel plans to sample")
        k = sample_size(len(scan_result), self.config)
        champion = _champion(sentinels)
        logger.info("Sampling {} of {} records with {} sentinels", k, len(scan_result), len(sentinels))

        base = await self.executor.execute(
            champion, scan_result, limit=k, mode=self.mode, workers=self.workers, keep_stages=True
        )
        trace = ExecutionTrace(plan_fingerprint=champion.fingerprint)
        trace.extend(base.trace.entries)
        slice_key = scan_result.slice_key(k)
        identity = self.executor.env.manager.identity
        steps = list(champion.steps())

        qualities: dict[StatsKey, float] = {}
        unavailable: set[tuple[str, str, str]] = set()
        converters: dict[str, SynthesizedConverter] = {}

        for i, (ctx, champ_cfg) in enumerate(steps):
            if i == 0 or not needs_model(ctx):
                continue
            op_id = ctx.op.op_id
            inputs = base.stage_outputs.get(i - 1, [])
            champ_entries = base.trace.for_op(op_id)
            if champ_entries and all(e.outcome == "error" for e in champ_entries):
                raise SamplingError(f"champion sentinel failed on every sampled record at {op_id}")

            probed = {champ_cfg}
            for sentinel in sentinels:
                cfg = sentinel.config_for(op_id)
                if cfg in probed:
                    continue
                probed.add(cfg)
                entries = await self._probe(steps[:i], ctx, cfg, inputs, slice_key, identity)
                trace.extend(entries)
                qualities[StatsKey.of_config(cfg)] = _score(ctx, champ_entries, entries)

            if Strategy.CODE_SYNTH in self.space.strategies and synthesizable(ctx):
                synth_cfg = PhysicalOpConfig(op_id, Strategy.CODE_SYNTH, self.space.champion, 1.0)
                samples = _synthesis_samples(inputs, champ_entries)
                if len(samples) < 2:
                    logger.warning("{}: only {} champion samples, code synthesis unavailable", op_id, len(samples))
                    unavailable.add((op_id, "code_synth", self.space.champion.model_id))
                    continue
                try:
                    converter, synth_entries = await self._synthesize(
                        steps[:i], ctx, samples, slice_key, identity
                    )
                except SynthesisError as e:
                    logger.warning("{}", e)
                    unavailable.add((op_id, "code_synth", self.space.champion.model_id))
                    continue
                trace.extend(synth_entries)
                converters[op_id] = converter
                self.executor.converters[op_id] = converter
                entries = await self._probe(steps[:i], ctx, synth_cfg, inputs, slice_key, identity)
                trace.extend(entries)
                qualities[StatsKey.of_config(synth_cfg)] = _score(ctx, champ_entries, entries)

        stats = aggregate_stats((e for e in trace.entries if e.strategy != SYNTHESIS), qualities)
        stats.unavailable |= unavailable
        logger.info(
            "Sampling produced {} stats rows (${:.4f}, {} backend calls)",
            len(stats),
            trace.total_usd,
            trace.backend_calls,
        )
        return SamplingResult(k, stats, trace, converters, qualities)

    async def _probe(self, prefix, ctx, cfg, inputs, slice_key, identity) -> list[TraceEntry]:
        fingerprint = prefix_fingerprint([*prefix, (ctx, cfg)], identity)
        result = await self.executor.run_operator(
            ctx, cfg, inputs, CacheKey(slice_key, fingerprint), self.workers
        )
        return result.entries

    async def _synthesize(
        self,
        prefix,
        ctx: OpContext,
        samples: list[tuple[Record, dict[str, Any]]],
        slice_key: str,
        identity: str,
    ) -> tuple[SynthesizedConverter, list[TraceEntry]]:
        model = self.space.champion
        op_id = ctx.op.op_id
        key = "|".join(
            [slice_key, prefix_fingerprint(prefix, identity), op_id, model.model_id, sample_fingerprint(samples)]
        )
        cache = self.executor.cache
        doc = cache.get_document("converters", key) if cache is not None else None
        if doc is not None:
            converter = SynthesizedConverter.from_dict(doc["converter"])
            entries = [TraceEntry.from_dict(d, cached=True) for d in doc.get("traceEntries", [])]
            logger.debug("Reusing synthesized converter for {}", op_id)
            return converter, entries

        outcome = await synthesize_converter(
            op_id, samples, ctx.reads, ctx.target_fields, model, self.executor.env.manager
        )
        entries = [
            TraceEntry(
                op_id=op_id,
                config_id=f"{SYNTHESIS}:{model.model_id}",
                strategy=SYNTHESIS,
                model_id=model.model_id,
                token_budget=1.0,
                source_id="<synthesis>",
                source_index=-1,
                emit_path=(n,),
                outcome="emitted",
                n_out=1,
                latency_s=call.latency_s,
                usd=call.usd,
                input_tokens=call.input_tokens,
                output_tokens=call.output_tokens,
                calls=1,
            )
            for n, call in enumerate(outcome.calls)
        ]
        if cache is not None:
            cache.put_document(
                "converters",
                key,
                {"converter": outcome.converter.to_dict(), "traceEntries": [e.to_dict() for e in entries]},
            )
        return outcome.converter, entries


def _synthesis_samples(
    inputs: Sequence[Record], champion: Sequence[TraceEntry]
) -> list[tuple[Record, dict[str, Any]]]:
    by_key = {f"{r.source_id}#{'.'.join(map(str, r.emit_path))}": r for r in inputs}
    samples = []
    for e in champion:
        if e.outcome == "emitted" and e.outputs and e.record_key in by_key:
            samples.append((by_key[e.record_key], dict(e.outputs[0])))
    return samples


async def run_sentinels(
    executor: PlanExecutor,
    sentinels: Sequence[PhysicalPlan],
    scan_result: ScanResult,
    config: SampleConfig,
    space: ParamSpace,
    mode: str = "serial",
    workers: int = 1,
) -> SamplingResult:
    return await SentinelSampler(executor, space, config, mode, workers).run(sentinels, scan_result)
