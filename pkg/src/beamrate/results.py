"""Tabular sweep results and their CSV/JSON serialization."""

import csv
import io
import json
import math
import sys
from dataclasses import astuple, dataclass, field

__all__ = ["Row", "SweepResult", "HEADER", "emit", "format_float", "to_csv", "to_json"]

HEADER = ("scheme", "N", "rho_db", "sum_rate_bps_hz", "relative_rate", "flag")


@dataclass(frozen=True)
class Row:
    scheme: str
    N: int
    rho_db: float
    sum_rate: float
    relative_rate: float
    flag: str = "ok"

    def key(self):
        return (self.scheme, self.N, self.rho_db, self.flag)


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)

    def add(self, *args, **kwargs):
        self.rows.append(Row(*args, **kwargs))

    def sorted_rows(self):
        return sorted(self.rows, key=Row.key)


def format_float(x):
    """Nine significant digits, '.' separator; NaN prints as ``nan``."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    return format(float(x), ".9g")


def _rounded(x):
    if x is None or math.isnan(x):
        return None
    return float(format_float(x))


def to_csv(result):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in result.sorted_rows():
        w.writerow([r.scheme, r.N, format_float(r.rho_db), format_float(r.sum_rate),
                    format_float(r.relative_rate), r.flag])
    return buf.getvalue()


def to_json(result):
    """Same records as the CSV; NaN becomes null."""
    records = []
    for r in result.sorted_rows():
        scheme, N, rho_db, rate, rel, flag = astuple(r)
        records.append(dict(zip(HEADER, (scheme, N, _rounded(rho_db), _rounded(rate),
                                         _rounded(rel), flag))))
    return json.dumps(records, indent=1) + "\n"


def emit(result, format="csv", path=None):
    """Write ``result`` to ``path`` (stdout when None)."""
    if format not in ("csv", "json"):
        raise ValueError(f"unknown output format {format!r}")
    text = to_csv(result) if format == "csv" else to_json(result)
    if path is None:
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
