"""User policies and frontier plan choice."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Annotated, Literal, Sequence, Union

from pydantic import Field, TypeAdapter, ValidationError

from semopt.config.schema import Base
from semopt.cost.estimate import PlanEstimate
from semopt.errors import PolicyError

_EPS = 1e-12


class MaxQualityAtFixedCost(Base):
    kind: Literal["max-quality-at-cost"] = "max-quality-at-cost"
    max_usd: float = Field(gt=0)

    def satisfied_by(self, e: PlanEstimate) -> bool:
        return e.est_usd <= self.max_usd + _EPS

    def violation(self, e: PlanEstimate) -> float:
        return max(0.0, e.est_usd - self.max_usd)

    def rank(self, e: PlanEstimate) -> tuple:
        return (-e.est_quality, e.est_usd, e.est_runtime_s, e.fingerprint)

    @property
    def threshold(self) -> float:
        return self.max_usd


class MaxQualityAtFixedRuntime(Base):
    kind: Literal["max-quality-at-runtime"] = "max-quality-at-runtime"
    max_s: float = Field(gt=0)

    def satisfied_by(self, e: PlanEstimate) -> bool:
        return e.est_runtime_s <= self.max_s + _EPS

    def violation(self, e: PlanEstimate) -> float:
        return max(0.0, e.est_runtime_s - self.max_s)

    def rank(self, e: PlanEstimate) -> tuple:
        return (-e.est_quality, e.est_usd, e.est_runtime_s, e.fingerprint)

    @property
    def threshold(self) -> float:
        return self.max_s


class MinCostAtFixedQuality(Base):
    kind: Literal["min-cost-at-quality"] = "min-cost-at-quality"
    min_quality: float = Field(gt=0, le=1)

    def satisfied_by(self, e: PlanEstimate) -> bool:
        return e.est_quality >= self.min_quality - _EPS

    def violation(self, e: PlanEstimate) -> float:
        return max(0.0, self.min_quality - e.est_quality)

    def rank(self, e: PlanEstimate) -> tuple:
        return (e.est_usd, e.est_runtime_s, -e.est_quality, e.fingerprint)

    @property
    def threshold(self) -> float:
        return self.min_quality


Policy = Annotated[
    Union[MaxQualityAtFixedCost, MaxQualityAtFixedRuntime, MinCostAtFixedQuality],
    Field(discriminator="kind"),
]

_FIELDS = {
    "max-quality-at-cost": "max_usd",
    "max-quality-at-runtime": "max_s",
    "min-cost-at-quality": "min_quality",
}
_ADAPTER: TypeAdapter = TypeAdapter(Policy)


def parse_policy(spec: str) -> Policy:
    """Parse `min-cost-at-quality=0.8` style policy strings.

    Raises:
        PolicyError: unknown policy name or invalid threshold.
    """
    name, sep, value = spec.strip().partition("=")
    name = name.strip().lower()
    if not sep or name not in _FIELDS:
        raise PolicyError(
            f"invalid policy {spec!r}; expected one of "
            + ", ".join(f"{k}=<value>" for k in _FIELDS)
        )
    try:
        return _ADAPTER.validate_python({"kind": name, _FIELDS[name]: float(value)})
    except (ValueError, ValidationError) as e:
        raise PolicyError(f"invalid threshold in policy {spec!r}: {e}") from e


def describe_policy(policy: Policy) -> str:
    return f"{policy.kind}={policy.threshold:g}"


@dataclass(frozen=True)
class Choice:
    estimate: PlanEstimate
    constraint_met: bool


def choose(frontier: Sequence[PlanEstimate], policy: Policy) -> Choice:
    """Pick the policy-optimal estimate.

    When nothing meets the constraint, the estimate with the smallest
    violation is returned with `constraint_met=False`. Ties break on lower
    cost, then lower runtime, then fingerprint.

    Raises:
        PolicyError: empty frontier.
    """
    if not frontier:
        raise PolicyError("cannot choose from an empty frontier")
    eligible = [e for e in frontier if policy.satisfied_by(e)]
    if eligible:
        return Choice(min(eligible, key=policy.rank), True)
    fallback = min(
        frontier,
        key=lambda e: (
            policy.violation(e),
            e.est_usd,
            e.est_runtime_s,
            -e.est_quality,
            e.fingerprint,
        ),
    )
    return Choice(fallback, False)
