"""Base backend interface for model providers."""

from __future__ import annotations

import threading
from abc import ABC, abstractmethod
from typing import Any

from semopt.config.schema import ModelSpec
from semopt.generators.prompts import GenerationResult, PromptRequest


class BaseBackend(ABC):
    """
    Abstract base class for model backends.

    Each backend (mock, http) turns a PromptRequest into a GenerationResult
    priced with the model's token rates.
    """

    name: str = "base"

    def __init__(self, config: Any):
        """
        Initialize the backend.

        Args:
            config: Backend-specific configuration section.
        """
        self.config = config
        self._calls = 0
        self._calls_lock = threading.Lock()

    async def start(self) -> None:
        """Acquire connections; the default backend needs none."""

    async def stop(self) -> None:
        """Release connections."""

    @property
    @abstractmethod
    def identity(self) -> str:
        """Stable identity of the backend; part of every cache key."""

    @abstractmethod
    async def generate(self, model: ModelSpec, request: PromptRequest) -> GenerationResult:
        """
        Produce one completion.

        Raises:
            BackendError: the request failed (after retries, where applicable).
        """

    def _count_call(self) -> None:
        with self._calls_lock:
            self._calls += 1

    @property
    def calls(self) -> int:
        """Number of generate() invocations so far."""
        return self._calls

    @staticmethod
    def price(
        model: ModelSpec, text: str, input_tokens: int, output_tokens: int, latency_s: float
    ) -> GenerationResult:
        return GenerationResult(
            text=text,
            input_tokens=input_tokens,
            output_tokens=output_tokens,
            latency_s=latency_s,
            usd=model.usd_for(input_tokens, output_tokens),
            model_id=model.model_id,
        )
