"""HTTP backend against a local chat-completions stub."""

from dataclasses import dataclass, field

import pytest
from aiohttp import web

from semopt.config.schema import HttpBackendConfig
from semopt.core.records import Record
from semopt.core.schemas import FieldSpec
from semopt.errors import BackendError
from semopt.generators.http import HttpBackend, build_payload
from semopt.generators.prompts import PromptRequest, marshal_bonded_prompt


@dataclass
class Stub:
    """Replies with the queued statuses first, then with a completion."""

    statuses: list[int] = field(default_factory=list)
    body: dict | None = None
    requests: list[dict] = field(default_factory=list)
    headers: list[dict] = field(default_factory=list)
    base_url: str = ""

    async def handle(self, request: web.Request) -> web.Response:
        self.requests.append(await request.json())
        self.headers.append(dict(request.headers))
        if self.statuses:
            status = self.statuses.pop(0)
            return web.Response(status=status, text="stub error")
        return web.json_response(
            self.body
            or {
                "choices": [{"message": {"content": '{"sender": "a@x"}'}}],
                "usage": {"prompt_tokens": 1200, "completion_tokens": 30},
            }
        )


@pytest.fixture
async def stub():
    stub = Stub()
    app = web.Application()
    app.router.add_post("/v1/chat/completions", stub.handle)
    runner = web.AppRunner(app)
    await runner.setup()
    site = web.TCPSite(runner, "127.0.0.1", 0)
    await site.start()
    host, port = runner.addresses[0][:2]
    stub.base_url = f"http://{host}:{port}/v1"
    yield stub
    await runner.cleanup()


@pytest.fixture
async def backend(stub):
    backend = HttpBackend(HttpBackendConfig(base_url=stub.base_url, backoff_s=0.0, max_attempts=3))
    yield backend
    await backend.stop()


@pytest.fixture
def request_for(config, schemas):
    record = Record.create(
        schemas, "TextFile", {"filename": "a.txt", "contents": "From: a@x"}, "d/a.txt", 0
    )

    def _make(model):
        return marshal_bonded_prompt(
            record, schemas.effective_fields("TextFile"), [FieldSpec("sender", "The sender")], model
        )

    return _make


async def test_completion_uses_reported_usage(config, stub, backend, request_for):
    model = config.get_model("mid-model")
    result = await backend.generate(model, request_for(model))
    assert result.text == '{"sender": "a@x"}'
    assert (result.input_tokens, result.output_tokens) == (1200, 30)
    assert result.usd == pytest.approx(model.usd_for(1200, 30))
    [payload] = stub.requests
    assert payload["model"] == "mid-model"
    assert payload["temperature"] == 0
    assert payload["messages"][0]["role"] == "system"


@pytest.mark.parametrize("status", [500, 503, 429])
async def test_retries_transient_failures(config, stub, backend, request_for, status):
    stub.statuses = [status, status]
    model = config.get_model("mid-model")
    result = await backend.generate(model, request_for(model))
    assert result.output_tokens == 30
    assert len(stub.requests) == 3
    assert backend.calls == 1


async def test_gives_up_after_max_attempts(config, stub, backend, request_for):
    stub.statuses = [500, 500, 500]
    model = config.get_model("mid-model")
    with pytest.raises(BackendError) as info:
        await backend.generate(model, request_for(model))
    assert info.value.retryable
    assert len(stub.requests) == 3


async def test_client_errors_are_not_retried(config, stub, backend, request_for):
    stub.statuses = [400]
    model = config.get_model("mid-model")
    with pytest.raises(BackendError) as info:
        await backend.generate(model, request_for(model))
    assert not info.value.retryable
    assert len(stub.requests) == 1


async def test_malformed_completion(config, stub, backend, request_for):
    stub.body = {"choices": []}
    model = config.get_model("mid-model")
    with pytest.raises(BackendError):
        await backend.generate(model, request_for(model))


async def test_bearer_token_from_environment(config, stub, backend, request_for, monkeypatch):
    monkeypatch.setenv("OPENAI_API_KEY", "sk-test")
    model = config.get_model("mid-model")
    await backend.generate(model, request_for(model))
    assert stub.headers[0]["Authorization"] == "Bearer sk-test"


async def test_model_endpoint_overrides_base_url(config, stub, request_for):
    backend = HttpBackend(HttpBackendConfig(base_url="http://127.0.0.1:9/none", max_attempts=1))
    model = config.get_model("mid-model").model_copy(update={"endpoint": stub.base_url})
    try:
        await backend.generate(model, request_for(model))
    finally:
        await backend.stop()
    assert len(stub.requests) == 1


def test_images_become_data_urls(config):
    vision = config.get_model("vision-model")
    payload = build_payload(
        vision,
        PromptRequest(
            model_id="vision-model",
            system_text="sys",
            user_text="describe",
            image_payloads=(b"\x89PNG\r\n", b"\xff\xd8\xff"),
        ),
    )
    content = payload["messages"][1]["content"]
    assert content[0] == {"type": "text", "text": "describe"}
    assert content[1]["image_url"]["url"].startswith("data:image/png;base64,")
    assert content[2]["image_url"]["url"].startswith("data:image/jpeg;base64,")
