"""Champion-agreement quality scores."""

from __future__ import annotations

from collections import Counter
from typing import Any, Mapping, Sequence

from semopt.core.schemas import FieldSpec
from semopt.errors import SamplingError


def token_f1(expected: str, actual: str) -> float:
    """F1 over lowercase whitespace tokens; two empty strings agree."""
    want = expected.lower().split()
    got = actual.lower().split()
    if not want and not got:
        return 1.0
    if not want or not got:
        return 0.0
    common = sum((Counter(want) & Counter(got)).values())
    if common == 0:
        return 0.0
    precision = common / len(got)
    recall = common / len(want)
    return 2 * precision * recall / (precision + recall)


def field_score(spec: FieldSpec, expected: Any, actual: Any) -> float:
    if expected is None and actual is None:
        return 1.0
    if expected is None or actual is None:
        return 0.0
    if spec.kind == "string" and isinstance(expected, str) and isinstance(actual, str):
        return token_f1(expected, actual)
    return 1.0 if expected == actual else 0.0


def score_filter(candidate: Mapping[str, bool], champion: Mapping[str, bool]) -> float:
    """Agreement rate on keep/drop; a record seen by only one side is a mismatch."""
    keys = set(candidate) | set(champion)
    if not keys:
        return 1.0
    agree = sum(
        1 for k in keys if k in candidate and k in champion and candidate[k] == champion[k]
    )
    return agree / len(keys)


def score_convert(
    candidate: Mapping[str, Sequence[Mapping[str, Any]]],
    champion: Mapping[str, Sequence[Mapping[str, Any]]],
    targets: Sequence[FieldSpec],
) -> float:
    """Mean field score over every (record, field) cell.

    Output rows of a record are aligned by index and the larger row count
    sets the number of cells; records both sides dropped agree fully.
    """
    keys = set(candidate) | set(champion)
    if not keys or not targets:
        return 1.0
    total = 0.0
    cells = 0
    for k in keys:
        if k not in candidate or k not in champion:
            rows = max(len(candidate.get(k, ())), len(champion.get(k, ())), 1)
            cells += rows * len(targets)
            continue
        mine, theirs = candidate[k], champion[k]
        rows = max(len(mine), len(theirs))
        if rows == 0:
            total += len(targets)
            cells += len(targets)
            continue
        for i in range(rows):
            a = mine[i] if i < len(mine) else None
            b = theirs[i] if i < len(theirs) else None
            for f in targets:
                if a is None or b is None:
                    continue
                total += field_score(f, b.get(f.name), a.get(f.name))
            cells += len(targets)
    return total / cells


def score_quality_vs_champion(
    candidate: Mapping[str, Any],
    champion: Mapping[str, Any] | None,
    op_kind: str,
    targets: Sequence[FieldSpec] = (),
) -> float:
    """Per-operator quality of a candidate against the champion's outputs.

    Raises:
        SamplingError: no champion outputs to compare against.
    """
    if champion is None:
        raise SamplingError("champion trace missing; sampling must include the champion")
    if op_kind == "filter":
        return score_filter(candidate, champion)
    return score_convert(candidate, champion, targets)
