"""Cost model: statistics, estimation, Pareto frontier and policy choice."""

import math

import numpy as np
import pytest

from semopt.core.schemas import FieldSpec
from semopt.cost.estimate import PlanEstimate, StatsResolver, budget_prior, estimate
from semopt.cost.pareto import dominates, pareto_frontier
from semopt.cost.policy import (
    MaxQualityAtFixedCost,
    MaxQualityAtFixedRuntime,
    MinCostAtFixedQuality,
    choose,
    describe_policy,
    parse_policy,
)
from semopt.cost.quality import score_convert, score_filter, token_f1
from semopt.cost.stats import OperatorStats, StatsKey, StatsTable, aggregate_stats
from semopt.errors import EstimationError, PolicyError
from semopt.executor.trace import TraceEntry
from semopt.planner.logical import enumerate_reorderings
from semopt.planner.physical import PhysicalOpConfig, PhysicalPlan, Strategy

from tests.conftest import FRAUD

BONDED = Strategy.BONDED.value


def _filter_then_convert(bench):
    return bench.compile(
        {
            "schemas": [
                {
                    "name": "Email",
                    "parent": "TextFile",
                    "fields": [{"name": "sender", "desc": "The sender"}],
                }
            ],
            "dataset": "emails",
            "ops": [
                {"kind": "filter", "predicate": FRAUD, "dependsOn": ["contents"]},
                {"kind": "convert", "schema": "Email", "dependsOn": ["contents"]},
            ],
        }
    )


def _bonded_plan(logical, model):
    configs = [PhysicalOpConfig("op00", Strategy.HARDCODED)]
    configs += [PhysicalOpConfig(op_id, Strategy.BONDED, model, 1.0) for op_id in logical.op_ids[1:]]
    return PhysicalPlan(logical, tuple(configs))


@pytest.fixture
def worked(email_dataset, make_bench):
    email_dataset(3)
    bench = make_bench()
    logical = _filter_then_convert(bench)
    mid = bench.space.get_model("mid-model")
    table = StatsTable()
    table.add(OperatorStats(StatsKey("op01", BONDED, "mid-model"), 10, 0.1, 0.001, selectivity=0.5))
    table.add(OperatorStats(StatsKey("op02", BONDED, "mid-model"), 10, 1.0, 0.01))
    return bench, _bonded_plan(logical, mid), table


# ----------------------------------------------------------------------
# Estimation
# ----------------------------------------------------------------------


def test_worked_example(worked):
    _, plan, table = worked
    est = estimate(plan, table, 100)
    assert est.est_usd == pytest.approx(0.60)
    assert est.est_runtime_s == pytest.approx(60.0)
    assert est.est_quality == 1.0


def test_estimate_is_linear_in_input(worked):
    _, plan, table = worked
    double = estimate(plan, table, 200)
    assert double.est_usd == pytest.approx(1.20)
    assert double.est_runtime_s == pytest.approx(120.0)


def test_parallel_runtime_uses_ceil_over_workers(worked):
    _, plan, table = worked
    est = estimate(plan, table, 100, mode="parallel", workers=10)
    assert est.est_runtime_s == pytest.approx(10 * 0.1 + 5 * 1.0)
    assert est.est_usd == pytest.approx(0.60)


def test_quality_is_product_over_model_ops(worked):
    _, plan, table = worked
    table.add(OperatorStats(StatsKey("op01", BONDED, "mid-model"), 10, 0.1, 0.001, selectivity=0.5, quality=0.9))
    table.add(OperatorStats(StatsKey("op02", BONDED, "mid-model"), 10, 1.0, 0.01, quality=0.8))
    assert estimate(plan, table, 100).est_quality == pytest.approx(0.72)


def test_udf_only_plan_costs_nothing(email_dataset, make_bench):
    email_dataset(2)
    bench = make_bench()
    logical = bench.compile(
        {"dataset": "emails", "ops": [{"kind": "filter", "udf": "in_price_range"}]}
    )
    plan = PhysicalPlan(
        logical,
        (PhysicalOpConfig("op00", Strategy.HARDCODED), PhysicalOpConfig("op01", Strategy.UDF)),
    )
    table = StatsTable()
    table.add(OperatorStats(StatsKey("op01", "udf"), 5, 0.002, 0.0, selectivity=0.4))
    est = estimate(plan, table, 50)
    assert est.est_usd == 0.0
    assert est.est_runtime_s == pytest.approx(0.1)


def test_ascending_selectivity_order_is_fastest(email_dataset, make_bench):
    email_dataset(2)
    bench = make_bench()
    logical = bench.compile(
        {
            "dataset": "emails",
            "ops": [{"kind": "filter", "udf": "in_price_range", "dependsOn": ["contents"]} for _ in range(4)],
        }
    )
    selectivity = {"op01": 0.9, "op02": 0.2, "op03": 0.6, "op04": 0.4}
    table = StatsTable()
    for op_id, s in selectivity.items():
        table.add(OperatorStats(StatsKey(op_id, "udf"), 10, 0.05, 0.0, selectivity=s))

    reorderings = enumerate_reorderings(logical)
    assert len(reorderings) == 24
    runtimes = {}
    for order in reorderings:
        configs = [PhysicalOpConfig("op00", Strategy.HARDCODED)]
        configs += [PhysicalOpConfig(op_id, Strategy.UDF) for op_id in order.op_ids[1:]]
        runtimes[order.op_ids[1:]] = estimate(PhysicalPlan(order, tuple(configs)), table, 1000).est_runtime_s
    fastest = min(runtimes, key=runtimes.get)
    assert fastest == tuple(sorted(selectivity, key=selectivity.get))
    assert sorted(runtimes.values())[0] < sorted(runtimes.values())[1]


def test_budget_scaling_follows_the_fraction(worked):
    bench, _, _ = worked
    logical = _filter_then_convert(bench)
    mid = bench.space.get_model("mid-model")
    table = StatsTable()
    table.add(
        OperatorStats(
            StatsKey("op01", BONDED, "mid-model"), 4, 0.0, 0.001, mean_input_tokens=1000.0
        )
    )
    table.add(OperatorStats(StatsKey("op02", BONDED, "mid-model"), 4, 0.0, 0.0))
    resolver = StatsResolver(table, bench.space)
    full = estimate(_bonded_plan(logical, mid), resolver, 100).est_usd
    for budget in (0.1, 0.5, 0.9):
        configs = list(_bonded_plan(logical, mid).configs)
        configs[1] = PhysicalOpConfig("op01", Strategy.BONDED, mid, budget)
        reduced = estimate(PhysicalPlan(logical, tuple(configs)), resolver, 100).est_usd
        assert reduced == pytest.approx(full * budget)


def test_per_field_filter_reuses_bonded_stats(worked):
    bench, _, table = worked
    logical = _filter_then_convert(bench)
    ctx = logical.contexts[1]
    table.add(
        OperatorStats(
            StatsKey("op01", BONDED, "cheap-model"),
            10,
            0.1,
            0.002,
            mean_input_tokens=1000.0,
            mean_output_tokens=0.0,
        )
    )
    resolver = StatsResolver(table, bench.space)
    cheap = bench.space.get_model("cheap-model")
    per_field = resolver.resolve(ctx, PhysicalOpConfig("op01", Strategy.PER_FIELD, cheap, 1.0))
    # a filter pays the bonded price once
    assert per_field.mean_usd == pytest.approx(0.002)


def test_unsampled_code_synth_is_unusable(worked):
    bench, _, table = worked
    logical = _filter_then_convert(bench)
    resolver = StatsResolver(table, bench.space)
    cfg = PhysicalOpConfig("op02", Strategy.CODE_SYNTH, bench.space.champion, 1.0)
    assert resolver.resolve(logical.contexts[2], cfg).quality == 0.0


def test_budget_prior_interpolates():
    assert budget_prior(1.0) == 1.0
    assert budget_prior(0.5) == pytest.approx(0.9)
    assert budget_prior(0.3) == pytest.approx(0.8)
    assert budget_prior(0.5, {0.5: 0.5}) == pytest.approx(0.5)


def test_negative_or_nan_stats_rejected():
    with pytest.raises(EstimationError):
        OperatorStats(StatsKey("op01", BONDED, "m"), 1, -1.0, 0.0)
    with pytest.raises(EstimationError):
        OperatorStats(StatsKey("op01", BONDED, "m"), 1, 0.0, math.nan)
    with pytest.raises(EstimationError):
        PlanEstimate("x", 1.0, -0.1, 1.0)


# ----------------------------------------------------------------------
# Statistics
# ----------------------------------------------------------------------


def _entry(op_id: str, n_out: int, usd: float, model: str = "mid-model") -> TraceEntry:
    return TraceEntry(
        op_id=op_id,
        config_id=f"{BONDED}:{model}@1",
        strategy=BONDED,
        model_id=model,
        token_budget=1.0,
        source_id="d/x",
        source_index=0,
        emit_path=(),
        outcome="emitted" if n_out else "dropped",
        n_out=n_out,
        latency_s=0.5,
        usd=usd,
        input_tokens=100,
        output_tokens=10,
        calls=1,
    )


def test_aggregate_stats_means_and_selectivity(tmp_path):
    entries = [_entry("op01", 1, 0.01), _entry("op01", 0, 0.03), _entry("op02", 2, 0.0)]
    key = StatsKey("op01", BONDED, "mid-model")
    table = aggregate_stats(entries, {key: 0.0})
    row = table.get(key)
    assert row.n_samples == 2
    assert row.mean_usd == pytest.approx(0.02)
    assert row.selectivity == 0.5
    assert table.get(StatsKey("op02", BONDED, "mid-model")).fanout == 2.0
    assert ("op01", "llm", "mid-model") in table.zero_quality_pairs()

    table.to_csv(tmp_path / "stats.csv")
    again = StatsTable.from_csv(tmp_path / "stats.csv")
    assert again.fingerprint == table.fingerprint


# ----------------------------------------------------------------------
# Quality scoring
# ----------------------------------------------------------------------


def test_token_f1():
    assert token_f1("Weekly update", "weekly update") == 1.0
    assert token_f1("", "") == 1.0
    assert token_f1("a b", "") == 0.0
    assert token_f1("a b c d", "a b") == pytest.approx(2 / 3)


def test_score_filter_counts_one_sided_records_as_mismatch():
    champion = {"a": True, "b": False, "c": True}
    assert score_filter(champion, champion) == 1.0
    assert score_filter({"a": True, "b": True}, champion) == pytest.approx(1 / 3)


def test_score_convert_by_cells():
    targets = [FieldSpec("sender", "The sender"), FieldSpec("count", "n", kind="number")]
    champion = {"a": [{"sender": "bob", "count": 1}], "b": []}
    assert score_convert(champion, champion, targets) == 1.0
    candidate = {"a": [{"sender": "bob", "count": 2}], "b": []}
    assert score_convert(candidate, champion, targets) == pytest.approx(0.75)


# ----------------------------------------------------------------------
# Pareto frontier
# ----------------------------------------------------------------------


def test_frontier_drops_dominated():
    a = PlanEstimate("a", 1.0, 1.0, 0.9)
    b = PlanEstimate("b", 2.0, 2.0, 0.8)
    c = PlanEstimate("c", 0.5, 3.0, 0.95)
    assert pareto_frontier([a, b, c]) == [a, c]
    assert pareto_frontier([b]) == [b]
    assert pareto_frontier([]) == []


def test_identical_triples_all_survive():
    a = PlanEstimate("a", 1.0, 1.0, 0.9)
    b = PlanEstimate("b", 1.0, 1.0, 0.9)
    assert pareto_frontier([a, b]) == [a, b]


def test_frontier_matches_pairwise_oracle():
    rng = np.random.default_rng(7)
    # coarse grid values force plenty of ties
    triples = np.round(rng.random((1000, 3)), 1)
    estimates = [PlanEstimate(f"p{i}", *map(float, t)) for i, t in enumerate(triples)]
    oracle = [p for p in estimates if not any(dominates(q, p) for q in estimates)]
    assert pareto_frontier(estimates) == oracle


# ----------------------------------------------------------------------
# Policies
# ----------------------------------------------------------------------


def test_parse_policy():
    policy = parse_policy("min-cost-at-quality=0.8")
    assert isinstance(policy, MinCostAtFixedQuality)
    assert policy.min_quality == 0.8
    assert describe_policy(parse_policy("max-quality-at-cost=2.5")) == "max-quality-at-cost=2.5"
    for bad in ("cheapest", "min-cost-at-quality=1.5", "max-quality-at-runtime=abc"):
        with pytest.raises(PolicyError):
            parse_policy(bad)


def test_choose_rejects_empty_frontier():
    with pytest.raises(PolicyError):
        choose([], MinCostAtFixedQuality(min_quality=0.5))


def test_unmet_constraint_falls_back_to_smallest_violation():
    frontier = [PlanEstimate("a", 1.0, 1.0, 0.5), PlanEstimate("b", 2.0, 3.0, 0.7)]
    choice = choose(frontier, MinCostAtFixedQuality(min_quality=0.9))
    assert not choice.constraint_met
    assert choice.estimate.fingerprint == "b"


def test_policy_choice_matches_exhaustive_search():
    rng = np.random.default_rng(11)
    policies = [
        MaxQualityAtFixedCost(max_usd=0.5),
        MaxQualityAtFixedRuntime(max_s=0.4),
        MinCostAtFixedQuality(min_quality=0.6),
    ]
    for trial in range(200):
        n = int(rng.integers(1, 40))
        rows = rng.random((n, 3))
        candidates = [
            PlanEstimate(f"t{trial}-{i}", float(r[0]), float(r[1]), float(r[2])) for i, r in enumerate(rows)
        ]
        frontier = pareto_frontier(candidates)
        for policy in policies:
            choice = choose(frontier, policy)
            assert choice.estimate in frontier
            eligible = [c for c in candidates if policy.satisfied_by(c)]
            assert choice.constraint_met == bool(eligible)
            if eligible:
                assert choice.estimate == min(eligible, key=policy.rank)
