"""Run reports: what the optimizer considered, what it chose, what it cost."""

from __future__ import annotations

from pathlib import Path

from loguru import logger
from pydantic import Field

from semopt.config.schema import Base


class CandidateEstimate(Base):
    fingerprint: str
    label: str = ""
    est_runtime_s: float
    est_usd: float
    est_quality: float
    on_frontier: bool = False
    chosen: bool = False


class PlanCounts(Base):
    logical_plans: int = 0
    reorder_truncated: bool = False
    physical_candidates: int = 0
    after_elimination: int = 0
    frontier: int = 0


class SamplingSummary(Base):
    sample_size: int = 0
    dataset_size: int = 0
    usd: float = 0.0
    runtime_s: float = 0.0
    backend_calls: int = 0
    converters: list[str] = Field(default_factory=list)


class RunReport(Base):
    """Structured report of one optimize (and optionally run) invocation."""

    dataset_id: str
    policy: str
    constraint_met: bool
    chosen_fingerprint: str
    chosen_listing: str
    counts: PlanCounts = Field(default_factory=PlanCounts)
    sampling: SamplingSummary = Field(default_factory=SamplingSummary)
    candidates: list[CandidateEstimate] = Field(default_factory=list)
    executed: bool = False
    output_records: int = 0
    realized_usd: float = 0.0
    spent_usd: float = 0.0
    realized_runtime_s: float = 0.0
    backend_calls: int = 0
    cache_hits: int = 0

    @property
    def chosen(self) -> CandidateEstimate | None:
        for c in self.candidates:
            if c.chosen:
                return c
        return None

    @property
    def frontier(self) -> list[CandidateEstimate]:
        return [c for c in self.candidates if c.on_frontier]

    def to_json(self) -> str:
        return self.model_dump_json(by_alias=True, indent=2)

    def write(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() + "\n", encoding="utf-8")
        logger.info("Report written to {}", path)

    def render_text(self, all_frontier: bool = True) -> str:
        c = self.counts
        s = self.sampling
        lines = [
            f"Dataset: {self.dataset_id}",
            f"Policy: {self.policy}",
            f"Logical plans: {c.logical_plans}" + (" (truncated)" if c.reorder_truncated else ""),
            f"Physical candidates: {c.physical_candidates}",
            f"After elimination: {c.after_elimination}",
            f"Frontier size: {c.frontier}",
            f"Sampled {s.sample_size} of {s.dataset_size} records "
            f"(${s.usd:.4f}, {s.runtime_s:.2f}s, {s.backend_calls} calls)",
        ]
        if all_frontier:
            lines.append("")
            lines.append("Frontier:")
            for e in self.frontier:
                mark = "*" if e.chosen else " "
                lines.append(
                    f" {mark} {e.fingerprint[:12]}  runtime={e.est_runtime_s:.2f}s  "
                    f"cost=${e.est_usd:.4f}  quality={e.est_quality:.3f}"
                )
        lines.append("")
        status = "met" if self.constraint_met else "NOT met"
        lines.append(f"Chosen plan {self.chosen_fingerprint[:12]} (constraint {status}):")
        lines.append(self.chosen_listing)
        if self.executed:
            lines.append("")
            lines.append(
                f"Output records: {self.output_records}; cost ${self.realized_usd:.4f} "
                f"(spent ${self.spent_usd:.4f}); runtime {self.realized_runtime_s:.2f}s; "
                f"{self.backend_calls} backend calls"
            )
        return "\n".join(lines)
