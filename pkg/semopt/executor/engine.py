"""Plan execution: serial iterator chain or stage-parallel worker pools."""

from __future__ import annotations

import asyncio
import time
from contextlib import aclosing
from dataclasses import dataclass, field
from typing import AsyncIterator, Sequence

from loguru import logger

from semopt.core.cache import CacheEntry, CacheKey, ResultCache
from semopt.core.datasources import ScanResult
from semopt.core.records import Record, sort_records
from semopt.core.schemas import SchemaRegistry
from semopt.executor.operators import OperatorEnv, OpOutput, PhysicalOperator, build_operator
from semopt.executor.trace import ExecutionTrace, TraceEntry
from semopt.generators.manager import BackendManager
from semopt.generators.synthesis import SynthesizedConverter
from semopt.planner.logical import Convert, Filter, Limit, OpContext, Project
from semopt.planner.physical import PhysicalOpConfig, PhysicalPlan
from semopt.planner.udfs import UdfRegistry


@dataclass
class ExecutionResult:
    records: list[Record]
    trace: ExecutionTrace
    # op index -> that operator's output; index 0 holds the scanned input
    stage_outputs: dict[int, list[Record]] = field(default_factory=dict)
    cached_prefix: int = 0


class PlanExecutor:
    """Runs physical plans against a scan, reusing cached plan prefixes."""

    def __init__(
        self,
        schemas: SchemaRegistry,
        udfs: UdfRegistry,
        manager: BackendManager,
        cache: ResultCache | None = None,
        converters: dict[str, SynthesizedConverter] | None = None,
        max_output_tokens: int = 512,
    ):
        self.env = OperatorEnv(
            schemas=schemas,
            udfs=udfs,
            manager=manager,
            converters=converters if converters is not None else {},
            max_output_tokens=max_output_tokens,
        )
        self.cache = cache

    @property
    def converters(self) -> dict[str, SynthesizedConverter]:
        return self.env.converters

    async def execute(
        self,
        plan: PhysicalPlan,
        scan_result: ScanResult,
        limit: int | None = None,
        mode: str = "serial",
        workers: int = 1,
        keep_stages: bool = False,
    ) -> ExecutionResult:
        """Execute `plan` over the first `limit` scanned records (all when None).

        Outputs are ordered by (source_index, emission order) in both modes.
        """
        started = time.perf_counter()
        records = scan_result.records[:limit] if limit is not None else list(scan_result.records)
        slice_key = scan_result.slice_key(limit)
        identity = self.env.manager.identity
        n_ops = len(plan.logical_plan)
        trace = ExecutionTrace(plan_fingerprint=plan.fingerprint)
        stages: dict[int, list[Record]] = {0: list(records)}

        start = 1
        cached: list[TraceEntry] = []
        for stop, entry in self._cached_prefixes(plan, slice_key, identity, n_ops, keep_stages):
            start = stop
            records = entry.records
            stages[stop - 1] = list(entry.records)
            cached = [TraceEntry.from_dict(d, cached=True) for d in entry.trace_entries]
        if start > 1:
            trace.extend(cached)
            logger.debug("Reusing cached prefix of {} operators", start)
        else:
            head = self._sampled_head(plan, scan_result, len(records), identity)
            if head is not None:
                start, records = await self._stitch(
                    plan, head, records, trace, stages, slice_key, identity, mode, workers
                )

        logger.info(
            "Executing plan {} ({} mode, {} records, from op {})",
            plan.fingerprint[:12],
            mode,
            len(records),
            start,
        )
        steps = list(plan.steps())
        if start < n_ops:
            if mode == "parallel":
                records = await self._run_parallel(
                    steps, start, records, trace, stages, plan, slice_key, identity, workers
                )
            else:
                records = await self._run_serial(
                    steps, start, records, trace, stages, plan, slice_key, identity
                )

        trace.wall_time_s = time.perf_counter() - started
        logger.info(
            "Plan {} produced {} records (${:.4f}, {:.2f}s)",
            plan.fingerprint[:12],
            len(records),
            trace.total_usd,
            trace.wall_time_s,
        )
        return ExecutionResult(
            records=records,
            trace=trace,
            stage_outputs=stages if keep_stages else {},
            cached_prefix=start,
        )

    def _cached_prefixes(self, plan, slice_key, identity, n_ops, ascending):
        """Yield (stop, entry) for usable cached prefixes, longest last.

        Descending search stops at the first (longest) hit; ascending search
        walks hits until the first miss so every cached stage is visible.
        """
        if self.cache is None or not self.cache.enabled or n_ops < 2:
            return
        stops = range(2, n_ops + 1) if ascending else range(n_ops, 1, -1)
        for stop in stops:
            entry = self.cache.get(CacheKey(slice_key, plan.prefix_fingerprint(stop, identity)))
            if entry is None:
                if ascending:
                    return
                continue
            yield stop, entry
            if not ascending:
                return

    def _sampled_head(
        self, plan: PhysicalPlan, scan_result: ScanResult, n_records: int, identity: str
    ) -> tuple[int, int, CacheEntry] | None:
        """(stop, k, entry) for the longest prefix cached on a shorter slice of this scan.

        Only record-at-a-time operators qualify, so the first k outputs of the
        prefix do not depend on the records after them.
        """
        if self.cache is None or not self.cache.enabled:
            return None
        streaming = 1
        for ctx, _ in list(plan.steps())[1:]:
            if not isinstance(ctx.op.variant, (Convert, Filter, Project)):
                break
            streaming += 1
        for stop in range(streaming, 1, -1):
            fingerprint = plan.prefix_fingerprint(stop, identity)
            sizes = {scan_result.slice_stop(s) for s in self.cache.slices(fingerprint)}
            for k in sorted((k for k in sizes if k and k < n_records), reverse=True):
                entry = self.cache.get(CacheKey(scan_result.slice_key(k), fingerprint))
                if entry is not None:
                    return stop, k, entry
        return None

    async def _stitch(self, plan, head, records, trace, stages, slice_key, identity, mode, workers):
        """Reuse a sampled prefix for the first k records and run it on the rest."""
        stop, k, entry = head
        logger.debug("Reusing prefix of {} operators cached for the first {} records", stop, k)
        trace.extend(TraceEntry.from_dict(d, cached=True) for d in entry.trace_entries)
        tail = list(records[k:])
        for ctx, cfg in list(plan.steps())[1:stop]:
            op = build_operator(ctx, cfg, self.env)
            result = await self._run_stage(op, tail, workers if mode == "parallel" else 1)
            trace.extend(result.entries)
            tail = result.records
        stitched = [*entry.records, *tail]
        stages[stop - 1] = stitched
        self._store_prefix(plan, stop, stitched, trace, slice_key, identity)
        return stop, stitched

    def _store_prefix(
        self,
        plan: PhysicalPlan,
        stop: int,
        records: list[Record],
        trace: ExecutionTrace,
        slice_key: str,
        identity: str,
    ) -> None:
        if self.cache is None or not self.cache.enabled:
            return
        op_ids = set(plan.logical_plan.op_ids[:stop])
        entries = [e for e in trace.entries if e.op_id in op_ids]
        if any(e.outcome == "error" and not e.cached for e in entries):
            # transient backend failures are not frozen into the cache
            return
        key = CacheKey(slice_key, plan.prefix_fingerprint(stop, identity))
        self.cache.put(key, records, [e.to_dict() for e in entries])

    # ------------------------------------------------------------------
    # Serial: a chain of async generators pulling one record at a time
    # ------------------------------------------------------------------

    async def _run_serial(self, steps, start, records, trace, stages, plan, slice_key, identity):
        complete: dict[int, bool] = {}
        outputs: dict[int, list[Record]] = {}

        async def source() -> AsyncIterator[Record]:
            for r in records:
                yield r

        def stage(i: int, upstream: AsyncIterator[Record]) -> AsyncIterator[Record]:
            ctx, cfg = steps[i]
            op = build_operator(ctx, cfg, self.env)
            outputs[i] = []
            if isinstance(ctx.op.variant, Limit):
                return self._limit_stage(i, op, upstream, trace, outputs[i], complete)
            if op.blocking:
                return self._blocking_stage(i, op, upstream, trace, outputs[i], complete)
            return self._record_stage(i, op, upstream, trace, outputs[i], complete)

        chain: AsyncIterator[Record] = source()
        for i in range(start, len(steps)):
            chain = stage(i, chain)
        async with aclosing(chain) as it:
            result = [r async for r in it]

        for i in range(start, len(steps)):
            stages[i] = outputs[i]
            if complete.get(i):
                self._store_prefix(plan, i + 1, outputs[i], trace, slice_key, identity)
        return result

    @staticmethod
    async def _record_stage(i, op, upstream, trace, out, complete):
        async with aclosing(upstream) as it:
            async for record in it:
                result = await op.process(record)
                trace.extend(result.entries)
                for r in result.records:
                    out.append(r)
                    yield r
        complete[i] = True

    @staticmethod
    async def _blocking_stage(i, op, upstream, trace, out, complete):
        async with aclosing(upstream) as it:
            buffered = [r async for r in it]
        result = await op.process_all(buffered)
        trace.extend(result.entries)
        out.extend(result.records)
        complete[i] = True
        for r in result.records:
            yield r

    @staticmethod
    async def _limit_stage(i, op, upstream, trace, out, complete):
        """Stop pulling from upstream once n records have passed."""
        n = op.ctx.op.variant.n
        if n > 0:
            async with aclosing(upstream) as it:
                async for record in it:
                    result = await op.process_all([record])
                    trace.extend(result.entries)
                    for r in result.records:
                        out.append(r)
                        yield r
                    if len(out) >= n:
                        break
        complete[i] = True

    # ------------------------------------------------------------------
    # Parallel: one worker pool per stage, barrier between stages
    # ------------------------------------------------------------------

    async def _run_parallel(
        self, steps, start, records, trace, stages, plan, slice_key, identity, workers
    ):
        for i in range(start, len(steps)):
            ctx, cfg = steps[i]
            op = build_operator(ctx, cfg, self.env)
            result = await self._run_stage(op, records, workers)
            trace.extend(result.entries)
            records = result.records
            stages[i] = records
            self._store_prefix(plan, i + 1, records, trace, slice_key, identity)
        return records

    @staticmethod
    async def _run_stage(op: PhysicalOperator, records: Sequence[Record], workers: int) -> OpOutput:
        if op.blocking:
            return await op.process_all(sort_records(records))
        n = len(records)
        if n == 0:
            return OpOutput([], [])

        queue: asyncio.Queue[tuple[int, Record]] = asyncio.Queue()
        for item in enumerate(records):
            queue.put_nowait(item)
        results: list[OpOutput | None] = [None] * n

        async def worker() -> None:
            while True:
                try:
                    idx, record = queue.get_nowait()
                except asyncio.QueueEmpty:
                    return
                try:
                    results[idx] = await op.process(record)
                finally:
                    queue.task_done()

        tasks = [asyncio.create_task(worker()) for _ in range(min(workers, n))]
        try:
            await asyncio.gather(*tasks)
        except BaseException:
            for t in tasks:
                t.cancel()
            raise

        out = OpOutput([], [])
        for r in results:
            out.records.extend(r.records)
            out.entries.extend(r.entries)
        out.records = sort_records(out.records)
        return out

    # ------------------------------------------------------------------
    # Single operators (sampling probes)
    # ------------------------------------------------------------------

    async def run_operator(
        self,
        ctx: OpContext,
        cfg: PhysicalOpConfig,
        records: Sequence[Record],
        cache_key: CacheKey | None = None,
        workers: int = 1,
    ) -> OpOutput:
        """Run one configured operator over `records`; only its own entries are cached."""
        if cache_key is not None and self.cache is not None:
            entry = self.cache.get(cache_key)
            if entry is not None:
                return OpOutput(
                    list(entry.records),
                    [TraceEntry.from_dict(d, cached=True) for d in entry.trace_entries],
                )
        op = build_operator(ctx, cfg, self.env)
        result = await self._run_stage(op, records, workers)
        if (
            cache_key is not None
            and self.cache is not None
            and not any(e.outcome == "error" for e in result.entries)
        ):
            self.cache.put(cache_key, result.records, [e.to_dict() for e in result.entries])
        return result
