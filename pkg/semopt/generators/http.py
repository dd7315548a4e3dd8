"""OpenAI-compatible chat-completions backend."""

from __future__ import annotations

import asyncio
import base64
import os
import time
from typing import Any

import httpx
from loguru import logger

from semopt.config.schema import HttpBackendConfig, ModelSpec
from semopt.errors import BackendError
from semopt.generators.base import BaseBackend
from semopt.generators.prompts import GenerationResult, PromptRequest
from semopt.generators.tokens import count_tokens


def _image_mime(blob: bytes) -> str:
    if blob.startswith(b"\x89PNG"):
        return "image/png"
    if blob.startswith(b"GIF8"):
        return "image/gif"
    if blob[:4] == b"RIFF" and blob[8:12] == b"WEBP":
        return "image/webp"
    return "image/jpeg"


def build_payload(model: ModelSpec, request: PromptRequest) -> dict[str, Any]:
    """Chat-completions request body for one prompt."""
    if request.image_payloads:
        content: Any = [{"type": "text", "text": request.user_text}]
        for blob in request.image_payloads:
            data = base64.b64encode(blob).decode("ascii")
            content.append(
                {"type": "image_url", "image_url": {"url": f"data:{_image_mime(blob)};base64,{data}"}}
            )
    else:
        content = request.user_text
    return {
        "model": model.model_id,
        "messages": [
            {"role": "system", "content": request.system_text},
            {"role": "user", "content": content},
        ],
        "max_tokens": request.max_output_tokens,
        "temperature": 0,
    }


class HttpBackend(BaseBackend):
    """Chat-completions over HTTP with retry on transport errors, 429 and 5xx."""

    name = "http"

    def __init__(self, config: HttpBackendConfig):
        super().__init__(config)
        self._http: httpx.AsyncClient | None = None

    @property
    def identity(self) -> str:
        return f"http:{self.config.base_url.rstrip('/')}{self.config.path}"

    async def start(self) -> None:
        if self._http is None:
            self._http = httpx.AsyncClient(timeout=self.config.timeout_s)

    async def stop(self) -> None:
        if self._http:
            await self._http.aclose()
            self._http = None

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.config.api_key_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _url(self, model: ModelSpec) -> str:
        base = (model.endpoint or self.config.base_url).rstrip("/")
        return f"{base}{self.config.path}"

    async def generate(self, model: ModelSpec, request: PromptRequest) -> GenerationResult:
        await self.start()
        self._count_call()
        url = self._url(model)
        payload = build_payload(model, request)
        attempts = self.config.max_attempts
        last_error = ""

        for attempt in range(attempts):
            started = time.perf_counter()
            try:
                response = await self._http.post(url, headers=self._headers(), json=payload)
                if response.status_code == 429 or response.status_code >= 500:
                    last_error = f"HTTP {response.status_code}"
                    raise BackendError(last_error, retryable=True)
                if response.status_code >= 400:
                    raise BackendError(
                        f"{model.model_id}: HTTP {response.status_code}: {response.text[:200]}"
                    )
                latency = time.perf_counter() - started
                try:
                    data = response.json()
                except ValueError as e:
                    raise BackendError(f"{model.model_id}: non-JSON completion: {e}") from e
                return self._parse(model, request, data, latency)
            except httpx.TransportError as e:
                last_error = f"{type(e).__name__}: {e}"
            except BackendError as e:
                if not e.retryable:
                    raise
            if attempt < attempts - 1:
                delay = self.config.backoff_s * (2**attempt)
                logger.warning(
                    "{} request failed ({}), retrying in {}s", model.model_id, last_error, delay
                )
                await asyncio.sleep(delay)

        logger.error("{} request failed after {} attempts: {}", model.model_id, attempts, last_error)
        raise BackendError(f"{model.model_id}: {last_error}", retryable=True)

    def _parse(
        self, model: ModelSpec, request: PromptRequest, data: dict[str, Any], latency: float
    ) -> GenerationResult:
        try:
            text = data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as e:
            raise BackendError(f"{model.model_id}: malformed completion: {e}") from e
        usage = data.get("usage") or {}
        input_tokens = int(usage.get("prompt_tokens", request.input_tokens))
        output_tokens = int(usage.get("completion_tokens", count_tokens(text)))
        return self.price(model, text, input_tokens, output_tokens, latency)
