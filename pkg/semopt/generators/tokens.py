"""Whitespace token accounting and input token reduction."""

from __future__ import annotations

import math


def count_tokens(text: str) -> int:
    return len(text.split())


def kept_tokens(n_tokens: int, budget: float) -> int:
    """Number of leading tokens retained under `budget`."""
    if not 0 < budget <= 1:
        raise ValueError(f"token budget {budget} outside (0, 1]")
    # round first so 0.9 * 1000 keeps 900, not 901
    return min(n_tokens, math.ceil(round(budget * n_tokens, 9)))


def reduce_input(text: str, budget: float) -> str:
    """Keep the leading `budget` fraction of the text's tokens.

    A full budget returns the text unchanged, whitespace included.
    """
    if budget >= 1.0:
        return text
    tokens = text.split()
    return " ".join(tokens[: kept_tokens(len(tokens), budget)])
