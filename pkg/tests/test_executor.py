"""Plan execution: serial and parallel modes, blocking operators and prefix caching."""

import pytest

from semopt.errors import BackendError, SynthesisError
from semopt.executor.engine import PlanExecutor
from semopt.generators.manager import BackendManager
from semopt.generators.mock import MockBackend, MockModelTable
from semopt.generators.synthesis import ExtractionRule, SynthesizedConverter
from semopt.planner.logical import LogicalPlan, enumerate_reorderings
from semopt.planner.physical import PhysicalOpConfig, PhysicalPlan, Strategy, requirement

from tests.conftest import EMAIL_SCHEMA, FRAUD, legal_pipeline, legal_table, sender, subject

KEPT = {2, 5, 11}


def bind(bench, logical: LogicalPlan, model_id: str = "mid-model", strategy=Strategy.BONDED):
    """Fixed strategies where required, `strategy` on `model_id` elsewhere."""
    model = bench.space.get_model(model_id)
    configs = []
    for ctx in logical.contexts:
        fixed = requirement(ctx)
        if fixed is not None:
            configs.append(PhysicalOpConfig(ctx.op.op_id, fixed))
        elif strategy is Strategy.CODE_SYNTH:
            configs.append(PhysicalOpConfig(ctx.op.op_id, strategy, bench.space.champion, 1.0))
        else:
            configs.append(PhysicalOpConfig(ctx.op.op_id, strategy, model, 1.0))
    return PhysicalPlan(logical, tuple(configs))


def fraud_filter(extra_ops=()):
    return {
        "dataset": "emails",
        "ops": [{"kind": "filter", "predicate": FRAUD, "dependsOn": ["contents"]}, *extra_ops],
    }


def lines(records):
    return [r.to_json_line() for r in records]


@pytest.fixture
def emails(email_dataset, make_bench):
    def _make(n: int = 20, table: MockModelTable | None = None, cache: bool = False):
        email_dataset(n)
        bench = make_bench(table or legal_table(n, fraud=KEPT, news=set()), cache=cache)
        return bench, bench.scan("emails")

    return _make


# ----------------------------------------------------------------------
# Filters and converts
# ----------------------------------------------------------------------


@pytest.mark.parametrize("mode", ["serial", "parallel"])
async def test_filter_keeps_planted_records(emails, mode):
    bench, scan = emails()
    plan = bind(bench, bench.compile(fraud_filter()))
    result = await bench.executor.execute(plan, scan, mode=mode, workers=4)
    assert [r.source_index for r in result.records] == sorted(KEPT)
    counts = result.trace.outcome_counts("op01")
    assert (counts["inputs"], counts["emitted"], counts["dropped"]) == (20, 3, 17)
    assert result.trace.backend_calls == 20
    assert bench.backend.calls == 20


async def test_convert_extracts_fields(emails):
    bench, scan = emails(5)
    plan = bind(bench, bench.compile(legal_pipeline()))
    result = await bench.executor.execute(plan, scan, keep_stages=True)
    converted = result.stage_outputs[1]
    assert [r["sender"] for r in converted] == [sender(i) for i in range(5)]
    assert [r["subject"] for r in converted] == [subject(i) for i in range(5)]
    assert all(r.schema == "Email" and r.provenance["sender"] == "op01" for r in converted)


async def test_serial_and_parallel_agree(emails):
    bench, scan = emails(30, legal_table(30, fraud={1, 4, 9, 16, 25}, news={4, 16}))
    plan = bind(bench, bench.compile(legal_pipeline()))
    serial = await bench.executor.execute(plan, scan, mode="serial")
    parallel = await bench.executor.execute(plan, scan, mode="parallel", workers=8)
    assert lines(serial.records) == lines(parallel.records)
    # mid-model inverts the news predicate, so only the news-quoting frauds remain
    assert [r.source_index for r in serial.records] == [4, 16]


@pytest.mark.parametrize("mode", ["serial", "parallel"])
async def test_trace_conservation(emails, mode):
    bench, scan = emails(12, legal_table(12, fraud={0, 3, 7}, news={3}))
    plan = bind(bench, bench.compile(legal_pipeline()), "champion-model")
    result = await bench.executor.execute(plan, scan, mode=mode, workers=3)
    trace = result.trace
    op_ids = plan.logical_plan.op_ids[1:]
    assert len(trace.for_op(op_ids[0])) == 12
    for upstream, downstream in zip(op_ids, op_ids[1:]):
        emitted = sum(e.n_out for e in trace.for_op(upstream))
        assert emitted == len(trace.for_op(downstream))
    for op_id in op_ids:
        counts = trace.outcome_counts(op_id)
        assert counts["inputs"] == counts["emitted"] + counts["dropped"] + counts["error"]
    assert [r.source_index for r in result.records] == [0, 7]


async def test_one_to_many_convert_orders_children(emails):
    answers = [
        {"kind": "convert", "target": "name", "sourceId": f"emails/e{i:03d}.txt", "answer": [f"a{i}", f"b{i}"]}
        for i in range(4)
    ]
    bench, scan = emails(4, MockModelTable.model_validate({"answers": answers}))
    logical = bench.compile(
        {
            "schemas": [
                {"name": "Recipient", "parent": "TextFile", "fields": [{"name": "name", "desc": "A recipient"}]}
            ],
            "dataset": "emails",
            "ops": [{"kind": "convert", "schema": "Recipient", "cardinality": "oneToMany", "dependsOn": ["contents"]}],
        }
    )
    plan = bind(bench, logical)
    serial = await bench.executor.execute(plan, scan)
    parallel = await bench.executor.execute(plan, scan, mode="parallel", workers=4)
    assert [(r.source_index, r.emit_path, r["name"]) for r in serial.records][:3] == [
        (0, (0,), "a0"),
        (0, (1,), "b0"),
        (1, (0,), "a1"),
    ]
    assert len(serial.records) == 8
    assert lines(serial.records) == lines(parallel.records)


async def test_backend_failures_become_error_entries(emails):
    bench, scan = emails(6, MockModelTable.model_validate({"models": {"*": {"errorRate": 1.0}}}), cache=True)
    plan = bind(bench, bench.compile(fraud_filter()))
    result = await bench.executor.execute(plan, scan)
    assert result.records == []
    assert result.trace.outcome_counts("op01")["error"] == 6
    again = await bench.executor.execute(plan, scan)
    assert again.cached_prefix == 1
    assert bench.backend.calls == 12


class SubjectOutage(MockBackend):
    """Fails every per-field request for `subject` and tallies what it billed."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.billed = 0
        self.billed_usd = 0.0

    async def generate(self, model, request):
        if request.tag is not None and request.tag.target == "subject":
            self._count_call()
            raise BackendError("down")
        result = await super().generate(model, request)
        self.billed += 1
        self.billed_usd += result.usd
        return result


async def test_error_entries_keep_the_calls_already_paid(emails):
    bench, scan = emails(3)
    table = MockModelTable.model_validate({"models": {"*": {"default": "garbage"}}})
    backend = SubjectOutage(bench.config.backends.mock, table)
    executor = PlanExecutor(bench.schemas, bench.udfs, BackendManager(bench.config, {"mock": backend}))
    plan = bind(bench, bench.compile(legal_pipeline()))

    result = await executor.execute(plan, scan)
    assert result.records == []
    entries = result.trace.for_op("op01")
    assert [e.outcome for e in entries] == ["error"] * 3
    # bonded attempt plus the sender field, per record
    assert [e.calls for e in entries] == [2, 2, 2]
    assert backend.calls == 9
    assert result.trace.backend_calls == backend.billed == 6
    assert result.trace.total_usd == pytest.approx(backend.billed_usd)
    assert result.trace.total_usd > 0


@pytest.mark.parametrize("mode", ["serial", "parallel"])
async def test_reorderings_agree_record_for_record(emails, mode):
    bench, scan = emails(30)
    bench.udfs.convert("numbered")(lambda record: {"number": float(record.source_index)})
    bench.udfs.filter("even")(lambda record: record.source_index % 2 == 0)
    bench.udfs.filter("below_twenty")(lambda record: record["number"] < 20)
    bench.udfs.filter("no_sevens")(lambda record: "7" not in record["contents"])
    logical = bench.compile(
        {
            "schemas": [
                {"name": "Numbered", "parent": "TextFile", "fields": [{"name": "number", "desc": "N", "kind": "number"}]}
            ],
            "dataset": "emails",
            "ops": [
                {"kind": "convert", "schema": "Numbered", "udf": "numbered", "dependsOn": ["contents"]},
                {"kind": "filter", "udf": "even", "dependsOn": ["contents"]},
                {"kind": "filter", "udf": "below_twenty", "dependsOn": ["number"]},
                {"kind": "filter", "udf": "no_sevens", "dependsOn": ["contents"]},
            ],
        }
    )
    reorderings = enumerate_reorderings(logical)
    assert len(reorderings) == 12

    outputs = set()
    for plan in reorderings:
        result = await bench.executor.execute(bind(bench, plan), scan, mode=mode, workers=4)
        outputs.add(tuple(r.source_id for r in result.records))
    assert outputs == {tuple(f"emails/e{i:03d}.txt" for i in range(0, 20, 2))}
    assert bench.backend.calls == 0


# ----------------------------------------------------------------------
# Blocking operators
# ----------------------------------------------------------------------


async def test_serial_limit_stops_pulling_upstream(emails):
    bench, scan = emails()
    plan = bind(bench, bench.compile(fraud_filter([{"kind": "limit", "n": 2}])))
    result = await bench.executor.execute(plan, scan)
    assert [r.source_index for r in result.records] == [2, 5]
    # records 0..5 were enough to find two matches
    assert bench.backend.calls == 6


async def test_parallel_limit_sees_every_record(emails):
    bench, scan = emails()
    plan = bind(bench, bench.compile(fraud_filter([{"kind": "limit", "n": 2}])))
    result = await bench.executor.execute(plan, scan, mode="parallel", workers=5)
    assert [r.source_index for r in result.records] == [2, 5]
    assert bench.backend.calls == 20
    counts = result.trace.outcome_counts("op02")
    assert (counts["emitted"], counts["dropped"]) == (2, 1)


@pytest.mark.parametrize("mode", ["serial", "parallel"])
async def test_group_by_with_udf_convert(emails, mode):
    bench, scan = emails(10)
    bench.udfs.convert("bucket")(lambda record: {"bucket": str(record.source_index % 3)})
    logical = bench.compile(
        {
            "schemas": [
                {"name": "Bucketed", "parent": "TextFile", "fields": [{"name": "bucket", "desc": "Bucket"}]}
            ],
            "dataset": "emails",
            "ops": [
                {"kind": "convert", "schema": "Bucketed", "udf": "bucket", "dependsOn": ["contents"]},
                {"kind": "groupby", "groupFields": ["bucket"], "aggregate": "count"},
            ],
        }
    )
    result = await bench.executor.execute(bind(bench, logical), scan, mode=mode, workers=4)
    assert [r.values for r in result.records] == [
        {"bucket": "0", "count": 4},
        {"bucket": "1", "count": 3},
        {"bucket": "2", "count": 3},
    ]
    assert all(r.schema == "GroupBy" for r in result.records)
    assert bench.backend.calls == 0


async def test_aggregate_over_filter_output(emails):
    bench, scan = emails()
    plan = bind(bench, bench.compile(fraud_filter([{"kind": "aggregate", "function": "count"}])))
    result = await bench.executor.execute(plan, scan)
    [row] = result.records
    assert row.values == {"count": 3}
    assert row.source_index == 2


async def test_aggregate_over_nothing(emails):
    bench, scan = emails(4, legal_table(4, fraud=set(), news=set()))
    plan = bind(bench, bench.compile(fraud_filter([{"kind": "aggregate", "function": "count"}])))
    [row] = (await bench.executor.execute(plan, scan, mode="parallel", workers=2)).records
    assert row.values == {"count": 0}
    assert row.source_id == "<aggregate>"


async def test_project_keeps_named_columns(emails):
    bench, scan = emails(3)
    desc = {
        "schemas": [EMAIL_SCHEMA],
        "dataset": "emails",
        "ops": [{"kind": "convert", "schema": "Email"}, {"kind": "project", "columns": ["sender"]}],
    }
    result = await bench.executor.execute(bind(bench, bench.compile(desc)), scan)
    assert [r.values for r in result.records] == [{"sender": sender(i)} for i in range(3)]


# ----------------------------------------------------------------------
# Code synthesis
# ----------------------------------------------------------------------


async def test_code_synth_convert_issues_no_calls(emails):
    bench, scan = emails(8)
    logical = bench.compile(
        {"schemas": [EMAIL_SCHEMA], "dataset": "emails", "ops": [{"kind": "convert", "schema": "Email"}]}
    )
    plan = bind(bench, logical, strategy=Strategy.CODE_SYNTH)
    with pytest.raises(SynthesisError):
        await bench.executor.execute(plan, scan)

    bench.executor.converters["op01"] = SynthesizedConverter(
        "op01",
        "champion-model",
        (
            ExtractionRule("sender", "string", r"From: (\S+)", 1.0),
            ExtractionRule("subject", "string", r"Subject: (.+)", 1.0),
        ),
    )
    result = await bench.executor.execute(plan, scan)
    assert [r["sender"] for r in result.records] == [sender(i) for i in range(8)]
    assert bench.backend.calls == 0
    assert result.trace.total_usd == 0.0


# ----------------------------------------------------------------------
# Prefix cache
# ----------------------------------------------------------------------


async def test_second_identical_run_hits_the_cache(emails, make_bench):
    table = legal_table(20, fraud=KEPT, news={5})
    bench, scan = emails(20, table, cache=True)
    plan = bind(bench, bench.compile(legal_pipeline()))
    first = await bench.executor.execute(plan, scan)
    assert bench.backend.calls > 0

    rerun = make_bench(table, cache=True)
    second = await rerun.executor.execute(plan, rerun.scan("emails"))
    assert rerun.backend.calls == 0
    assert second.trace.backend_calls == 0
    assert second.cached_prefix == len(plan.logical_plan)
    assert lines(second.records) == lines(first.records)
    assert second.trace.total_usd == pytest.approx(first.trace.total_usd)
    assert second.trace.spent_usd == 0.0


async def test_shared_prefix_is_reused(emails):
    bench, scan = emails(10, cache=True)
    logical = bench.compile(legal_pipeline())
    await bench.executor.execute(bind(bench, logical), scan)
    calls = bench.backend.calls

    mid, champion = bench.space.get_model("mid-model"), bench.space.champion
    configs = list(bind(bench, logical).configs)
    configs[3] = PhysicalOpConfig("op03", Strategy.BONDED, champion, 1.0)
    variant = PhysicalPlan(logical, tuple(configs))
    assert variant.configs[1].model_id == mid.model_id
    result = await bench.executor.execute(variant, scan)
    assert result.cached_prefix == 3
    # only the changed last filter ran, once per record that reached it
    assert bench.backend.calls - calls == len(result.trace.for_op("op03"))


async def test_sampled_slice_prefix_is_reused(emails):
    bench, scan = emails(10, cache=True)
    plan = bind(bench, bench.compile(fraud_filter()))
    await bench.executor.execute(plan, scan, limit=4)
    assert bench.backend.calls == 4

    result = await bench.executor.execute(plan, scan)
    # only the six records past the sampled slice reach the backend
    assert bench.backend.calls == 10
    assert result.cached_prefix == 2
    assert [r.source_index for r in result.records] == [2, 5]
    assert result.trace.outcome_counts("op01")["inputs"] == 10
    assert len([e for e in result.trace.entries if e.cached]) == 4

    again = await bench.executor.execute(plan, scan)
    assert bench.backend.calls == 10
    assert lines(again.records) == lines(result.records)


async def test_sampled_prefix_stops_at_blocking_operators(emails):
    bench, scan = emails(10, cache=True)
    plan = bind(bench, bench.compile(fraud_filter([{"kind": "limit", "n": 1}])))
    await bench.executor.execute(plan, scan, limit=4, mode="parallel", workers=2)
    calls = bench.backend.calls

    result = await bench.executor.execute(plan, scan)
    assert result.cached_prefix == 2
    assert [r.source_index for r in result.records] == [2]
    assert bench.backend.calls - calls == 6


async def test_stitched_output_matches_an_uncached_run(emails, make_bench):
    table = legal_table(12, fraud=KEPT, news={5})
    bench, scan = emails(12, table, cache=True)
    plan = bind(bench, bench.compile(legal_pipeline()))
    await bench.executor.execute(plan, scan, limit=5)
    calls = bench.backend.calls
    stitched = await bench.executor.execute(plan, scan, mode="parallel", workers=4)
    assert stitched.cached_prefix == 4

    fresh = make_bench(table, cache=False)
    plain = await fresh.executor.execute(plan, fresh.scan("emails"))
    assert lines(stitched.records) == lines(plain.records)
    assert bench.backend.calls - calls < fresh.backend.calls


async def test_keep_stages_restores_cached_stage_outputs(emails):
    bench, scan = emails(6, cache=True)
    plan = bind(bench, bench.compile(legal_pipeline()))
    first = await bench.executor.execute(plan, scan, keep_stages=True)
    executor = PlanExecutor(bench.schemas, bench.udfs, bench.manager, bench.cache)
    again = await executor.execute(plan, scan, keep_stages=True)
    assert again.cached_prefix == 4
    for i in range(1, 4):
        assert lines(again.stage_outputs[i]) == lines(first.stage_outputs[i])


# ----------------------------------------------------------------------
# Parallel speedup
# ----------------------------------------------------------------------


async def test_parallel_speedup_on_slow_backend(emails):
    table = legal_table(200, fraud=set(range(0, 200, 7)), news=set(), latency_s=0.05)
    bench, scan = emails(200, table)
    plan = bind(bench, bench.compile(fraud_filter()))
    serial = await bench.executor.execute(plan, scan, mode="serial")
    parallel = await bench.executor.execute(plan, scan, mode="parallel", workers=32)
    assert lines(parallel.records) == lines(serial.records)
    assert parallel.trace.wall_time_s <= serial.trace.wall_time_s / 8
