"""Named user-defined functions referenced by pipelines."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

from semopt.core.records import Record
from semopt.errors import PipelineError

FilterUdf = Callable[[Record], bool]
ConvertUdf = Callable[[Record], "dict[str, Any] | list[dict[str, Any]]"]

# Localities within two miles of the MIT campus.
_NEAR_MIT = (
    "cambridge",
    "cambridgeport",
    "kendall square",
    "central square",
    "east cambridge",
    "back bay",
    "beacon hill",
    "charlestown",
    "somerville",
    "west end",
)

PRICE_RANGE = (100_000, 2_000_000)


@dataclass
class UdfRegistry:
    """Filter and convert UDFs by name."""

    filters: dict[str, FilterUdf] = field(default_factory=dict)
    converts: dict[str, ConvertUdf] = field(default_factory=dict)

    def filter(self, name: str | None = None):
        def decorator(fn: FilterUdf) -> FilterUdf:
            self.filters[name or fn.__name__] = fn
            return fn

        return decorator

    def convert(self, name: str | None = None):
        def decorator(fn: ConvertUdf) -> ConvertUdf:
            self.converts[name or fn.__name__] = fn
            return fn

        return decorator

    def get_filter(self, name: str) -> FilterUdf:
        try:
            return self.filters[name]
        except KeyError:
            raise PipelineError(f"unknown filter UDF {name}") from None

    def get_convert(self, name: str) -> ConvertUdf:
        try:
            return self.converts[name]
        except KeyError:
            raise PipelineError(f"unknown convert UDF {name}") from None


def within_two_miles_of_mit(record: Record) -> bool:
    address = str(record.get("address") or "").lower()
    return any(place in address for place in _NEAR_MIT)


def in_price_range(record: Record) -> bool:
    price = record.get("price")
    if isinstance(price, bool) or not isinstance(price, (int, float)):
        return False
    low, high = PRICE_RANGE
    return low <= price <= high


def default_udfs() -> UdfRegistry:
    registry = UdfRegistry()
    registry.filter()(within_two_miles_of_mit)
    registry.filter()(in_price_range)
    return registry
