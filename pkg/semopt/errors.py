"""Exception hierarchy for semopt."""

from __future__ import annotations


class SemoptError(Exception):
    """Base class for every error raised by semopt."""


class SchemaError(SemoptError):
    """Invalid schema definition or lookup."""


class DataSourceError(SemoptError):
    """Datasource registration or scan failure."""


class DuplicateDatasetError(DataSourceError):
    """A datasource with the same id is already registered."""


class MissingLocationError(DataSourceError):
    """The datasource location does not exist."""


class CacheError(SemoptError):
    """Malformed cache key or unwritable cache directory."""


class PipelineError(SemoptError):
    """Malformed pipeline description."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class PlanError(SemoptError):
    """A logical plan violates its dependency rules."""

    def __init__(self, message: str, violations: list[str] | None = None):
        self.violations = violations or []
        if self.violations:
            message = f"{message}: " + "; ".join(self.violations)
        super().__init__(message)


class ParamSpaceError(SemoptError):
    """The physical parameter space cannot produce any candidate."""


class SamplingError(SemoptError):
    """Sentinel sampling could not produce a quality reference."""


class EstimationError(SemoptError):
    """Statistics unusable for estimation (negative or NaN)."""


class PolicyError(SemoptError):
    """Invalid policy specification or empty frontier."""


class BackendError(SemoptError):
    """A model backend failed to produce a completion."""

    def __init__(self, message: str, retryable: bool = False, calls: list | None = None):
        self.retryable = retryable
        # completions already paid for on the same record before the failure
        self.calls = list(calls or [])
        super().__init__(message)


class PromptTooLargeError(SemoptError):
    """The prompt does not fit the model context even after reduction."""

    def __init__(self, message: str, calls: list | None = None):
        self.calls = list(calls or [])
        super().__init__(message)


class SynthesisError(SemoptError):
    """Code synthesis preconditions are not met."""
