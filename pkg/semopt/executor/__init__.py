"""Plan execution, sampling and the optimizer driver.

Only the trace and engine are re-exported here; `sampling`, `optimizer`
and `report` import the cost model, which itself imports `trace`.
"""

from semopt.executor.engine import ExecutionResult, PlanExecutor
from semopt.executor.trace import ExecutionTrace, TraceEntry

__all__ = ["ExecutionResult", "PlanExecutor", "ExecutionTrace", "TraceEntry"]
