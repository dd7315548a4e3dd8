"""Sentinel sampling: sample sizes, per-tier statistics and code synthesis."""

import pytest

from semopt.config.schema import SampleConfig
from semopt.cost.stats import StatsKey
from semopt.errors import SamplingError
from semopt.executor.sampling import SentinelSampler, run_sentinels, sample_size
from semopt.planner.physical import Strategy, make_sentinels

from tests.conftest import legal_pipeline, legal_table

FRAUD_IDS = {1, 4, 7, 15}
NEWS_IDS = {4}
BONDED = Strategy.BONDED.value


@pytest.mark.parametrize(
    "n, fraction, min_samples, expected",
    [
        (1000, 0.05, 3, 50),
        (11, 0.05, 1, 1),
        (10, 0.05, 3, 3),
        (2, 0.05, 3, 2),
        (100000, 0.05, 3, 100),
        (0, 0.05, 3, 0),
    ],
)
def test_sample_size(n, fraction, min_samples, expected):
    assert sample_size(n, SampleConfig(fraction=fraction, min_samples=min_samples)) == expected


@pytest.fixture
def sampled(email_dataset, make_bench):
    email_dataset(40)
    bench = make_bench(legal_table(40, fraud=FRAUD_IDS, news=NEWS_IDS))
    plan = bench.compile(legal_pipeline())
    sampler = SentinelSampler(bench.executor, bench.space, SampleConfig(fraction=0.25))
    return bench, sampler, make_sentinels(plan, bench.space)


async def test_sentinels_score_against_champion(sampled):
    bench, sampler, sentinels = sampled
    result = await sampler.run(sentinels, bench.scan("emails"))
    assert result.sample_size == 10

    q = result.qualities
    assert q[StatsKey("op01", BONDED, "cheap-model")] == 1.0
    assert q[StatsKey("op02", BONDED, "cheap-model")] == 0.0
    assert q[StatsKey("op02", BONDED, "mid-model")] == 1.0
    assert q[StatsKey("op03", BONDED, "cheap-model")] == 1.0
    assert q[StatsKey("op03", BONDED, "mid-model")] == 0.0

    champion = result.stats.get(StatsKey("op02", BONDED, "champion-model"))
    assert champion.n_samples == 10
    assert champion.quality == 1.0
    # records 1, 4 and 7 pass the fraud filter within the sampled prefix
    assert champion.selectivity == pytest.approx(0.3)
    assert result.stats.get(StatsKey("op03", BONDED, "champion-model")).n_samples == 3
    assert result.overhead_usd > 0


async def test_convert_is_synthesized_from_champion_outputs(sampled):
    bench, sampler, sentinels = sampled
    result = await sampler.run(sentinels, bench.scan("emails"))
    converter = result.converters["op01"]
    assert converter.validation_score == 1.0
    assert bench.executor.converters["op01"] is converter
    synth = result.stats.get(StatsKey("op01", "code_synth", "champion-model"))
    assert synth.quality == 1.0
    assert synth.mean_usd == 0.0
    assert all(s.key.strategy != "synthesis" for s in result.stats)


async def test_resampling_is_served_from_cache(sampled):
    bench, sampler, sentinels = sampled
    first = await sampler.run(sentinels, bench.scan("emails"))
    calls = bench.backend.calls
    again = await sampler.run(sentinels, bench.scan("emails"))
    assert bench.backend.calls == calls
    assert again.trace.backend_calls == 0
    assert again.qualities == first.qualities
    assert again.converters["op01"].rules == first.converters["op01"].rules


async def test_no_sentinels_is_an_error(sampled):
    bench, sampler, _ = sampled
    with pytest.raises(SamplingError):
        await sampler.run([], bench.scan("emails"))


async def test_run_sentinels_in_parallel_mode(sampled):
    bench, sampler, sentinels = sampled
    serial = await sampler.run(sentinels, bench.scan("emails"))
    parallel = await run_sentinels(
        bench.executor, sentinels, bench.scan("emails"), SampleConfig(fraction=0.25), bench.space, "parallel", 4
    )
    assert parallel.qualities == serial.qualities
    assert parallel.sample_size == serial.sample_size
