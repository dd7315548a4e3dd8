"""Backend manager for routing requests to model backends."""

from __future__ import annotations

import asyncio

from loguru import logger

from semopt.config.schema import Config, ModelSpec
from semopt.errors import BackendError
from semopt.generators.base import BaseBackend
from semopt.generators.prompts import PROMPT_VERSION, GenerationResult, PromptRequest


class BackendManager:
    """
    Owns the configured backends and routes each model to its backend.

    Responsibilities:
    - Initialize enabled backends (mock, http)
    - Bound in-flight requests across all of them
    - Expose a stable identity used in cache keys
    """

    def __init__(self, config: Config, backends: dict[str, BaseBackend] | None = None):
        self.config = config
        self.backends: dict[str, BaseBackend] = dict(backends or {})
        self._semaphore: asyncio.Semaphore | None = None
        if backends is None:
            self._init_backends()

    def _init_backends(self) -> None:
        """Initialize backends based on config."""

        # Mock backend
        if self.config.backends.mock.enabled:
            from semopt.generators.mock import MockBackend

            self.backends["mock"] = MockBackend(self.config.backends.mock)
            logger.info("Mock backend enabled")

        # HTTP backend
        if self.config.backends.http.enabled:
            try:
                from semopt.generators.http import HttpBackend

                self.backends["http"] = HttpBackend(self.config.backends.http)
                logger.info("HTTP backend enabled")
            except ImportError as e:
                logger.warning("HTTP backend not available: {}", e)

    def backend_for(self, model: ModelSpec) -> BaseBackend:
        try:
            return self.backends[model.backend]
        except KeyError:
            raise BackendError(
                f"model {model.model_id} needs the {model.backend} backend, which is not enabled"
            ) from None

    @property
    def identity(self) -> str:
        parts = [f"{name}={b.identity}" for name, b in sorted(self.backends.items())]
        return f"prompts:{PROMPT_VERSION};" + ";".join(parts)

    @property
    def calls(self) -> int:
        return sum(b.calls for b in self.backends.values())

    async def generate(self, model: ModelSpec, request: PromptRequest) -> GenerationResult:
        """Dispatch one request, waiting for an in-flight slot first."""
        if self._semaphore is None:
            self._semaphore = asyncio.Semaphore(self.config.backends.in_flight_limit)
        backend = self.backend_for(model)
        async with self._semaphore:
            result = await backend.generate(model, request)
        logger.debug(
            "{} answered {} in {:.3f}s (${:.6f})",
            model.model_id,
            request.tag.op_kind if request.tag else "request",
            result.latency_s,
            result.usd,
        )
        return result

    async def stop(self) -> None:
        for name, backend in self.backends.items():
            try:
                await backend.stop()
            except Exception as e:
                logger.error("Error stopping {} backend: {}", name, e)
