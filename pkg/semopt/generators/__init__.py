"""Prompt marshaling, model backends and code synthesis."""

from semopt.generators.base import BaseBackend
from semopt.generators.manager import BackendManager
from semopt.generators.mock import MockBackend, MockModelTable
from semopt.generators.prompts import (
    PROMPT_VERSION,
    GenerationResult,
    ParseResult,
    PromptRequest,
    marshal_bonded_prompt,
    marshal_field_prompt,
    marshal_filter_prompt,
    parse_structured_response,
    parse_verdict,
)
from semopt.generators.synthesis import (
    ExtractionRule,
    SynthesizedConverter,
    apply_converter,
    synthesize_converter,
)
from semopt.generators.tokens import count_tokens, reduce_input

__all__ = [
    "BaseBackend",
    "BackendManager",
    "MockBackend",
    "MockModelTable",
    "PROMPT_VERSION",
    "GenerationResult",
    "ParseResult",
    "PromptRequest",
    "marshal_bonded_prompt",
    "marshal_field_prompt",
    "marshal_filter_prompt",
    "parse_structured_response",
    "parse_verdict",
    "ExtractionRule",
    "SynthesizedConverter",
    "apply_converter",
    "synthesize_converter",
    "count_tokens",
    "reduce_input",
]
