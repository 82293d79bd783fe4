# Copyright (c) 2024. All rights reserved.
"""Timing metrics for solves, training runs and sweep cells.

Every recorded operation becomes one JSON line in
``<metrics_dir>/operations_<session>.jsonl``; the CLI writes a session
summary with per-component totals and the slowest cell on exit. Result
tables never carry timings, so reruns stay byte-identical.

Cells run in worker processes report their own duration back to the parent
(see ``record_cell``), so the session covers parallel sweeps as well.
"""

import functools
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Callable, Generator, TypeVar

logger = logging.getLogger("syncrate.metrics")

DEFAULT_METRICS_DIR = Path("metrics")


@dataclass
class OperationMetric:
    """One timed solve, training run or sweep cell."""
    operation: str
    component: str
    start_time: str
    duration_seconds: float
    success: bool = True
    error_message: str | None = None
    experiment: str | None = None
    cell: str | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass
class ComponentTotals:
    """Operation count, failures and wall time of one component."""
    count: int = 0
    failed: int = 0
    seconds: float = 0.0

    def add(self, metric: OperationMetric) -> None:
        self.count += 1
        self.failed += 0 if metric.success else 1
        self.seconds += metric.duration_seconds


@dataclass
class SessionMetrics:
    """Everything recorded during one CLI run."""
    session_id: str
    session_start: str
    operations: list[OperationMetric] = field(default_factory=list)
    components: dict[str, ComponentTotals] = field(default_factory=dict)

    @property
    def total_operations(self) -> int:
        return len(self.operations)

    @property
    def failed_operations(self) -> int:
        return sum(1 for op in self.operations if not op.success)

    @property
    def total_duration_seconds(self) -> float:
        return sum(op.duration_seconds for op in self.operations)

    def add_operation(self, metric: OperationMetric) -> None:
        self.operations.append(metric)
        self.components.setdefault(metric.component, ComponentTotals()).add(metric)

    def slowest_cell(self) -> OperationMetric | None:
        cells = [op for op in self.operations if op.cell is not None]
        return max(cells, key=lambda op: op.duration_seconds, default=None)

    def to_dict(self) -> dict[str, Any]:
        slowest = self.slowest_cell()
        return {
            "session_id": self.session_id,
            "session_start": self.session_start,
            "total_operations": self.total_operations,
            "failed_operations": self.failed_operations,
            "total_duration_seconds": round(self.total_duration_seconds, 3),
            "components": {
                name: {"count": t.count, "failed": t.failed, "seconds": round(t.seconds, 3)}
                for name, t in sorted(self.components.items())
            },
            "slowest_cell": slowest.to_dict() if slowest else None,
        }


class MetricsCollector:
    """Collects operation timings for one session.

    A disabled collector records nothing and never touches the filesystem.
    """

    def __init__(self, metrics_dir: Path | str | None = None, enabled: bool = True):
        self._metrics_dir = Path(metrics_dir) if metrics_dir else DEFAULT_METRICS_DIR
        self._enabled = enabled

        now = datetime.now(timezone.utc)
        self._session = SessionMetrics(
            session_id=now.strftime("%Y%m%d_%H%M%S"),
            session_start=now.isoformat(),
        )

        if self._enabled:
            self._metrics_dir.mkdir(parents=True, exist_ok=True)
            logger.debug(f"Metrics collector initialized: {self._metrics_dir}")

    @property
    def enabled(self) -> bool:
        return self._enabled

    @property
    def session(self) -> SessionMetrics:
        return self._session

    @property
    def operations_file(self) -> Path:
        return self._metrics_dir / f"operations_{self._session.session_id}.jsonl"

    def record(
        self,
        operation: str,
        component: str,
        duration_seconds: float,
        success: bool = True,
        error_message: str | None = None,
        experiment: str | None = None,
        cell: str | None = None,
        metadata: dict[str, Any] | None = None,
    ) -> OperationMetric | None:
        """Record a finished operation.

        Args:
            operation: What ran ("solve_exact_dp", "stochastic_greedy", "cell").
            component: Module that ran it ("mck", "learn", "harness").
            duration_seconds: Wall time.
            success: False when the operation raised.
            error_message: The exception text of a failed operation.
            experiment: Experiment name, for sweep cells.
            cell: Cell label, for sweep cells.
            metadata: Extra JSON-ready details (slots used, rows produced, ...).

        Returns:
            The recorded metric, or None if the collector is disabled.
        """
        if not self._enabled:
            return None

        end = datetime.now(timezone.utc)
        metric = OperationMetric(
            operation=operation,
            component=component,
            start_time=(end - timedelta(seconds=duration_seconds)).isoformat(),
            duration_seconds=round(duration_seconds, 3),
            success=success,
            error_message=error_message,
            experiment=experiment,
            cell=cell,
            metadata=metadata or {},
        )
        self._session.add_operation(metric)
        logger.debug(f"{component}.{operation}: {duration_seconds:.3f}s, success={success}")
        self._append(metric)
        return metric

    def record_cell(
        self,
        experiment: str,
        cell: str,
        duration_seconds: float,
        error: str | None = None,
        rows: int = 0,
    ) -> OperationMetric | None:
        """Record a sweep cell timed wherever it ran."""
        return self.record(
            "cell",
            "harness",
            duration_seconds,
            success=error is None,
            error_message=error,
            experiment=experiment,
            cell=cell,
            metadata={"rows": rows},
        )

    def _append(self, metric: OperationMetric) -> None:
        try:
            with open(self.operations_file, "a", encoding="utf-8") as f:
                f.write(json.dumps(metric.to_dict(), sort_keys=True) + "\n")
        except OSError as e:
            logger.warning(f"Failed to append metric: {e}")

    def save_session(self) -> Path | None:
        """Write the session summary; None if disabled, empty or unwritable."""
        if not self._enabled or self._session.total_operations == 0:
            return None

        session_file = self._metrics_dir / f"session_{self._session.session_id}.json"
        try:
            session_file.write_text(json.dumps(self._session.to_dict(), indent=2), encoding="utf-8")
        except OSError as e:
            logger.error(f"Failed to save session metrics: {e}")
            return None
        logger.info(f"Session metrics saved: {session_file}")
        return session_file

    def get_summary(self) -> dict[str, Any]:
        """Short summary for printing."""
        return {
            "total_operations": self._session.total_operations,
            "failed": self._session.failed_operations,
            "total_time_seconds": round(self._session.total_duration_seconds, 2),
            "components": sorted(self._session.components),
        }

    @contextmanager
    def measure(
        self,
        operation: str,
        component: str,
        metadata: dict[str, Any] | None = None,
    ) -> Generator[dict[str, Any], None, None]:
        """Time a block; the yielded dict may be extended with details.

        Example:
            with collector.measure("brute_force_optimum", "learn") as meta:
                rates, value = brute_force_optimum(truth, 3, 2, 4)
                meta["value"] = value
        """
        meta = dict(metadata or {})
        start = time.perf_counter()
        error_message: str | None = None
        try:
            yield meta
        except Exception as e:
            error_message = f"{type(e).__name__}: {e}"
            raise
        finally:
            self.record(
                operation,
                component,
                time.perf_counter() - start,
                success=error_message is None,
                error_message=error_message,
                metadata=meta,
            )


# Disabled until the CLI configures it
_metrics_collector: MetricsCollector | None = None


def get_metrics_collector() -> MetricsCollector:
    global _metrics_collector
    if _metrics_collector is None:
        _metrics_collector = MetricsCollector(enabled=False)
    return _metrics_collector


def configure_metrics(metrics_dir: Path | str | None = None, enabled: bool = True) -> MetricsCollector:
    """Replace the global collector."""
    global _metrics_collector
    _metrics_collector = MetricsCollector(metrics_dir=metrics_dir, enabled=enabled)
    return _metrics_collector


F = TypeVar("F", bound=Callable[..., Any])


def track_operation(
    component: str,
    operation: str | None = None,
    describe: Callable[[Any], dict[str, Any]] | None = None,
) -> Callable[[F], F]:
    """Time every call of a library function with the global collector.

    Args:
        component: Module name ("mck", "learn").
        operation: Operation name; defaults to the function name.
        describe: Maps the return value to metadata, e.g. slots used by a
            training run.
    """
    def decorator(func: F) -> F:
        name = operation or func.__name__

        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            collector = get_metrics_collector()
            if not collector.enabled:
                return func(*args, **kwargs)
            with collector.measure(name, component) as meta:
                result = func(*args, **kwargs)
                if describe is not None:
                    meta.update(describe(result))
                return result

        return wrapper  # type: ignore
    return decorator
