"""Smoke test against a real chat-completions endpoint.

Runs only with `-m live` and SEMOPT_LIVE_API_KEY set. SEMOPT_LIVE_BASE_URL
and SEMOPT_LIVE_MODEL select the endpoint and model.
"""

import os

import pytest

from semopt.config.schema import HttpBackendConfig, ModelSpec
from semopt.core.records import Record
from semopt.generators.http import HttpBackend
from semopt.generators.prompts import marshal_filter_prompt

pytestmark = [
    pytest.mark.live,
    pytest.mark.skipif(not os.environ.get("SEMOPT_LIVE_API_KEY"), reason="SEMOPT_LIVE_API_KEY not set"),
]


async def test_live_filter_call(schemas):
    backend = HttpBackend(
        HttpBackendConfig(
            enabled=True,
            base_url=os.environ.get("SEMOPT_LIVE_BASE_URL", "https://api.openai.com/v1"),
            api_key_env="SEMOPT_LIVE_API_KEY",
        )
    )
    model = ModelSpec(
        model_id=os.environ.get("SEMOPT_LIVE_MODEL", "gpt-4o-mini"),
        tier="cheap",
        usd_per_million_input_tokens=0.15,
        usd_per_million_output_tokens=0.6,
        backend="http",
    )
    record = Record.create(
        schemas, "TextFile", {"filename": "a.txt", "contents": "Invoice overdue, wire funds now."}, "d/a.txt", 0
    )
    request = marshal_filter_prompt(
        record, schemas.effective_fields("TextFile"), "The text asks for money", model
    )
    try:
        result = await backend.generate(model, request)
    finally:
        await backend.stop()
    assert result.text.strip()
    assert result.input_tokens > 0
    assert result.usd > 0
