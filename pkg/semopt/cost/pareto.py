"""Pareto frontier over (runtime, cost, quality)."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from semopt.cost.estimate import PlanEstimate


def dominates(a: PlanEstimate, b: PlanEstimate) -> bool:
    """a is no worse than b on every axis and strictly better on one."""
    no_worse = (
        a.est_runtime_s <= b.est_runtime_s
        and a.est_usd <= b.est_usd
        and a.est_quality >= b.est_quality
    )
    strictly = (
        a.est_runtime_s < b.est_runtime_s
        or a.est_usd < b.est_usd
        or a.est_quality > b.est_quality
    )
    return no_worse and strictly


def pareto_frontier(estimates: Sequence[PlanEstimate]) -> list[PlanEstimate]:
    """Non-dominated estimates, in input order; identical triples all survive.

    Sort-filter skyline: after a lexicographic sort on (runtime, usd, -quality)
    every dominator precedes what it dominates, so each point is only
    compared against the frontier accumulated so far.
    """
    n = len(estimates)
    if n == 0:
        return []
    points = np.array(
        [(e.est_runtime_s, e.est_usd, -e.est_quality) for e in estimates], dtype=float
    )
    order = np.lexsort((points[:, 2], points[:, 1], points[:, 0]))
    front = np.empty_like(points)
    size = 0
    keep: list[int] = []
    for idx in order:
        p = points[idx]
        if size:
            f = front[:size]
            if np.any(np.all(f <= p, axis=1) & np.any(f < p, axis=1)):
                continue
        front[size] = p
        size += 1
        keep.append(int(idx))
    return [estimates[i] for i in sorted(keep)]
