"""
Run reports and their JSON / CSV forms.

JSON carries the resolved config, one object per repetition and the
aggregate; CSV carries one row per repetition in CSV_COLUMNS order. The
aggregate is always recomputed from the repetitions, never stored as truth.
"""

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np

from backend.code.errors import UsageError
from backend.code.harness.metrics import CSV_COLUMNS, Metrics
from backend.code.structured_logging import harness_logger

# Columns that carry a per-repetition number
NUMERIC_COLUMNS = tuple(c for c in CSV_COLUMNS if c not in ("config_hash", "rep"))


@dataclass
class RunReport:
    config: Dict[str, Any]
    config_hash: str
    repetitions: List[Metrics] = field(default_factory=list)

    @property
    def all_converged(self) -> bool:
        return bool(self.repetitions) and all(m.converged for m in self.repetitions)

    @property
    def aborted(self) -> List[int]:
        return [rep for rep, m in enumerate(self.repetitions) if m.error is not None]

    def rows(self) -> List[Dict[str, Any]]:
        """One CSV row per repetition; converged is written as 0/1."""
        rows = []
        for rep, metrics in enumerate(self.repetitions):
            data = metrics.to_dict()
            row = {"config_hash": self.config_hash, "rep": rep}
            for column in NUMERIC_COLUMNS:
                row[column] = int(data[column]) if column == "converged" else data[column]
            rows.append(row)
        return rows

    @property
    def aggregate(self) -> Dict[str, Dict[str, float]]:
        return aggregate_rows(self.rows())

    def mean(self, column: str) -> float:
        return self.aggregate[column]["mean"]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config": dict(self.config),
            "config_hash": self.config_hash,
            "repetitions": [m.to_dict() for m in self.repetitions],
            "aggregate": self.aggregate,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunReport":
        try:
            return cls(
                config=dict(data["config"]),
                config_hash=data["config_hash"],
                repetitions=[Metrics.from_dict(m) for m in data["repetitions"]],
            )
        except (KeyError, TypeError) as e:
            raise UsageError(f"malformed run report: {e}") from e


def aggregate_rows(rows: List[Dict[str, Any]]) -> Dict[str, Dict[str, float]]:
    """
    Mean, population standard deviation and coefficient of variation per
    numeric column. Non-finite values (an unset residual) are skipped.
    """
    aggregate = {}
    for column in NUMERIC_COLUMNS:
        values = np.array([float(row[column]) for row in rows], dtype=np.float64)
        values = values[np.isfinite(values)]
        if values.size == 0:
            aggregate[column] = {"mean": math.nan, "stddev": math.nan, "cv": math.nan}
            continue
        mean = float(np.mean(values))
        stddev = float(np.std(values))
        aggregate[column] = {"mean": mean, "stddev": stddev, "cv": stddev / mean if mean != 0 else 0.0}
    return aggregate


def emit(report: RunReport, fmt: str, path: Union[str, Path]) -> Path:
    """
    Write `report` as json or csv.

    Raises:
        UsageError: unknown format
        OSError: the file could not be written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        with open(path, "w", encoding="utf-8") as f:
            json.dump(report.to_dict(), f, indent=2)
    elif fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(CSV_COLUMNS))
            writer.writeheader()
            writer.writerows(report.rows())
    else:
        raise UsageError(f"unknown report format '{fmt}', expected json or csv")
    harness_logger.info("report_written", path=str(path), format=fmt, reps=len(report.repetitions))
    return path


def load_report(path: Union[str, Path]) -> RunReport:
    """Read a JSON report written by `emit`."""
    path = Path(path)
    if not path.exists():
        raise UsageError(f"report not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise UsageError(f"{path} is not a JSON run report: {e}") from e
    return RunReport.from_dict(data)


def read_csv_rows(path: Union[str, Path]) -> List[Dict[str, Any]]:
    """CSV rows with numeric columns parsed back to numbers."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        rows = list(csv.DictReader(f))
    for row in rows:
        row["rep"] = int(row["rep"])
        for column in NUMERIC_COLUMNS:
            row[column] = float(row[column])
    return rows
