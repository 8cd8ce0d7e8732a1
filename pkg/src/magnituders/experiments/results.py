"""Result rows, CSV output and trend summaries shared by every experiment."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import astuple, dataclass, field, fields
from enum import Enum
from pathlib import Path

from ..errors import InvalidArgument


class Method(str, Enum):
    MAG_ORF = "MAG_ORF"
    MAG_IID = "MAG_IID"
    SNNK = "SNNK"
    BASELINE = "BASELINE"
    DENSE_DR = "DENSE_DR"


@dataclass(frozen=True)
class ResultRow:
    """One measurement.

    ``wall_time_s`` is informational and excluded from reproducibility
    comparisons; every other column is a deterministic function of the
    config and seed.
    """

    experiment: str
    seed: int
    m: int
    method: Method
    metric: str
    value: float
    wall_time_s: float = 0.0
    trainable_params: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "value", float(self.value))
        if not math.isfinite(self.value):
            raise InvalidArgument(f"metric {self.metric!r} is not finite: {self.value}")
        if not self.metric:
            raise InvalidArgument("metric name must not be empty")


COLUMNS = tuple(f.name for f in fields(ResultRow))
_METHOD_ORDER = {m: i for i, m in enumerate(Method)}


def sort_rows(rows) -> list[ResultRow]:
    """Canonical order: experiment, seed, m, then method and metric."""
    return sorted(rows, key=lambda r: (r.experiment, r.seed, r.m, _METHOD_ORDER[r.method], r.metric))


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in sort_rows(rows):
        values = list(astuple(row))
        values[3] = row.method.value
        values[5] = repr(row.value)
        values[6] = f"{row.wall_time_s:.6f}"
        writer.writerow(values)
    return buf.getvalue()


def write_csv(rows, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(rows_to_csv(rows), encoding="utf-8")
    return path


def read_csv(path: str | Path) -> list[ResultRow]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise InvalidArgument(f"unexpected CSV header {reader.fieldnames}")
        return [
            ResultRow(
                r["experiment"], int(r["seed"]), int(r["m"]), Method(r["method"]), r["metric"],
                float(r["value"]), float(r["wall_time_s"]), int(r["trainable_params"]),
            )
            for r in reader
        ]


@dataclass(frozen=True)
class TrendCheck:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}" + (f": {self.detail}" if self.detail else "")


@dataclass
class ExperimentResult:
    rows: list[ResultRow] = field(default_factory=list)
    checks: list[TrendCheck] = field(default_factory=list)
    artifacts: list[Path] = field(default_factory=list)

    def summary(self) -> str:
        return "\n".join(c.line() for c in self.checks)

    def select(self, *, method=None, metric=None, m=None, seed=None) -> list[ResultRow]:
        out = []
        for r in self.rows:
            if method is not None and r.method != Method(method):
                continue
            if metric is not None and r.metric != metric:
                continue
            if m is not None and r.m != m:
                continue
            if seed is not None and r.seed != seed:
                continue
            out.append(r)
        return out
