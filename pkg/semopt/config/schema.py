"""Configuration schema using Pydantic."""

from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic.alias_generators import to_camel
from pydantic_settings import BaseSettings


class Base(BaseModel):
    """Base model that accepts both camelCase and snake_case keys."""

    model_config = ConfigDict(alias_generator=to_camel, populate_by_name=True)


Tier = Literal["cheap", "mid", "champion", "vision"]
LlmStrategyName = Literal["llm_bonded_with_fallback", "llm_per_field", "code_synth"]


class ModelSpec(Base):
    """One entry of the model registry."""

    model_config = ConfigDict(
        alias_generator=to_camel, populate_by_name=True, frozen=True
    )

    model_id: str
    tier: Tier
    usd_per_million_input_tokens: float = Field(ge=0)
    usd_per_million_output_tokens: float = Field(ge=0)
    context_limit_tokens: int = Field(default=16384, gt=0)
    backend: Literal["mock", "http"] = "mock"
    endpoint: str | None = None  # http only; overrides backends.http.base_url
    vision_model: str | None = None  # paired vision model for image-reading ops

    @property
    def is_vision(self) -> bool:
        return self.tier == "vision"

    def usd_for(self, input_tokens: int, output_tokens: int) -> float:
        """Price a request from its token counts."""
        return (
            input_tokens * self.usd_per_million_input_tokens
            + output_tokens * self.usd_per_million_output_tokens
        ) / 1_000_000


def _default_models() -> list[ModelSpec]:
    return [
        ModelSpec(
            model_id="cheap-model",
            tier="cheap",
            usd_per_million_input_tokens=0.5,
            usd_per_million_output_tokens=1.5,
            vision_model="vision-model",
        ),
        ModelSpec(
            model_id="mid-model",
            tier="mid",
            usd_per_million_input_tokens=0.6,
            usd_per_million_output_tokens=0.6,
            vision_model="vision-model",
        ),
        ModelSpec(
            model_id="champion-model",
            tier="champion",
            usd_per_million_input_tokens=10.0,
            usd_per_million_output_tokens=30.0,
            context_limit_tokens=128000,
            vision_model="vision-model",
        ),
        ModelSpec(
            model_id="vision-model",
            tier="vision",
            usd_per_million_input_tokens=10.0,
            usd_per_million_output_tokens=30.0,
            context_limit_tokens=128000,
        ),
    ]


class OptimizerConfig(Base):
    """Physical parameter space and estimation priors."""

    budgets: list[float] = Field(default_factory=lambda: [0.1, 0.5, 0.9, 1.0])
    strategies: list[LlmStrategyName] = Field(
        default_factory=lambda: ["llm_bonded_with_fallback", "llm_per_field", "code_synth"]
    )
    reorder_cap: int = Field(default=5000, ge=1)
    # quality multiplier applied to stats borrowed from a full-budget sample
    budget_quality_priors: dict[float, float] = Field(
        default_factory=lambda: {0.1: 0.7, 0.5: 0.9, 0.9: 0.97}
    )

    @field_validator("budgets")
    @classmethod
    def _check_budgets(cls, v: list[float]) -> list[float]:
        for b in v:
            if not 0 < b <= 1:
                raise ValueError(f"token budget {b} outside (0, 1]")
        return sorted(set(v))


class SampleConfig(Base):
    """How many records the sentinel plans see."""

    fraction: float = Field(default=0.05, gt=0, le=1)
    min_samples: int = Field(default=3, ge=1)
    max_samples: int = Field(default=100, ge=1)


class ExecutionConfig(Base):
    """Plan execution mode."""

    mode: Literal["serial", "parallel"] = "serial"
    workers: int = Field(default=32, ge=1)


class MockBackendConfig(Base):
    """Deterministic mock backend driven by an answer table fixture."""

    enabled: bool = True
    table_path: str = ""  # JSON fixture; empty = no canned answers


class HttpBackendConfig(Base):
    """OpenAI-compatible chat-completions backend."""

    enabled: bool = False
    base_url: str = "https://api.openai.com/v1"
    path: str = "/chat/completions"
    api_key_env: str = "OPENAI_API_KEY"  # bearer token is read from this variable
    timeout_s: float = 60.0
    max_attempts: int = Field(default=3, ge=1)
    backoff_s: float = Field(default=1.0, ge=0)
    max_output_tokens: int = 512


class BackendsConfig(Base):
    """Model backend configuration."""

    in_flight_limit: int = Field(default=64, ge=1)
    mock: MockBackendConfig = Field(default_factory=MockBackendConfig)
    http: HttpBackendConfig = Field(default_factory=HttpBackendConfig)


class StorageConfig(Base):
    """Datasource registry and result cache locations."""

    registry_path: str = "~/.semopt/datasources.json"
    cache_dir: str = "~/.semopt/cache"
    cache_enabled: bool = True


class Config(BaseSettings):
    """Root configuration for semopt."""

    models: list[ModelSpec] = Field(default_factory=_default_models)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    sampling: SampleConfig = Field(default_factory=SampleConfig)
    execution: ExecutionConfig = Field(default_factory=ExecutionConfig)
    backends: BackendsConfig = Field(default_factory=BackendsConfig)
    storage: StorageConfig = Field(default_factory=StorageConfig)

    @model_validator(mode="after")
    def _check_models(self) -> "Config":
        ids = [m.model_id for m in self.models]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate model_id in model registry")
        champions = [m for m in self.models if m.tier == "champion"]
        if len(champions) != 1:
            raise ValueError(
                f"exactly one champion model required, found {len(champions)}"
            )
        known = set(ids)
        for m in self.models:
            if m.vision_model and m.vision_model not in known:
                raise ValueError(
                    f"model {m.model_id} pairs unknown vision model {m.vision_model}"
                )
        return self

    @property
    def registry_path(self) -> Path:
        return Path(self.storage.registry_path).expanduser()

    @property
    def cache_path(self) -> Path:
        return Path(self.storage.cache_dir).expanduser()

    def get_model(self, model_id: str) -> ModelSpec:
        for m in self.models:
            if m.model_id == model_id:
                return m
        raise KeyError(model_id)

    def models_of_tier(self, tier: str) -> list[ModelSpec]:
        return [m for m in self.models if m.tier == tier]

    @property
    def champion(self) -> ModelSpec:
        return self.models_of_tier("champion")[0]

    model_config = ConfigDict(env_prefix="SEMOPT_", env_nested_delimiter="__")
