# Copyright (c) 2024. All rights reserved.
"""Schema-versioned result tables.

Every row echoes its experiment, cell and full parameter tuple, so a table
can be plotted or filtered without any other context. Tables are written as
CSV with floats in ``repr`` form and parameters as sorted JSON, which keeps
output byte-identical for identical inputs.
"""

import csv
import io
import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

logger = logging.getLogger("syncrate.harness")

SCHEMA_VERSION = 1
COLUMNS = ["schema_version", "experiment", "cell", "params", "metric", "value", "dispersion", "error"]


def _format_number(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def canonical_params(params: dict[str, Any]) -> str:
    return json.dumps(params, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class ResultRow:
    """One metric value (or failure) of one cell."""
    experiment: str
    cell: str
    params: dict[str, Any]
    metric: str
    value: float | None
    dispersion: float | None = None
    error: str | None = None

    def to_csv_row(self) -> dict[str, str]:
        return {
            "schema_version": str(SCHEMA_VERSION),
            "experiment": self.experiment,
            "cell": self.cell,
            "params": canonical_params(self.params),
            "metric": self.metric,
            "value": _format_number(self.value),
            "dispersion": _format_number(self.dispersion),
            "error": self.error or "",
        }

    @classmethod
    def from_csv_row(cls, row: dict[str, str]) -> "ResultRow":
        return cls(
            experiment=row["experiment"],
            cell=row["cell"],
            params=json.loads(row["params"]),
            metric=row["metric"],
            value=float(row["value"]) if row["value"] else None,
            dispersion=float(row["dispersion"]) if row["dispersion"] else None,
            error=row["error"] or None,
        )


@dataclass
class ResultTable:
    """Append-only collection of result rows."""
    rows: list[ResultRow] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False, compare=False)

    def append(self, row: ResultRow) -> None:
        with self._lock:
            self.rows.append(row)

    def extend(self, rows: list[ResultRow]) -> None:
        with self._lock:
            self.rows.extend(rows)

    def __iter__(self) -> Iterator[ResultRow]:
        return iter(list(self.rows))

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def has_errors(self) -> bool:
        return any(row.error for row in self.rows)

    @property
    def errors(self) -> list[ResultRow]:
        return [row for row in self.rows if row.error]

    def select(self, metric: str | None = None, **params: Any) -> list[ResultRow]:
        """Rows matching a metric name and the given parameter values."""
        return [
            row for row in self.rows
            if (metric is None or row.metric == metric)
            and all(row.params.get(k) == v for k, v in params.items())
        ]

    def values(self, metric: str, **params: Any) -> list[float]:
        return [row.value for row in self.select(metric, **params) if row.value is not None]

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow(row.to_csv_row())
        return buffer.getvalue()

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv(), encoding="utf-8")
        logger.info(f"Wrote {len(self.rows)} result rows to {path}")
        return path

    @classmethod
    def read_csv(cls, path: str | Path) -> "ResultTable":
        with open(path, "r", encoding="utf-8", newline="") as f:
            rows = [ResultRow.from_csv_row(row) for row in csv.DictReader(f)]
        return cls(rows=rows)
