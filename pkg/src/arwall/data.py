"""Tabular data core: loading, typing, filtering, and aggregation.

One immutable table is the joint basis for every visualization in a session.
Rows are identified by their zero-based load order and that identity is never
reassigned, so selections and cross-view linking can use row ids as a stable
join key. Empty CSV fields are missing values: they are excluded from
aggregation counts and do not affect column kind inference.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from datetime import date
from typing import Any, Callable, Iterable, Sequence

CATEGORICAL = "categorical"
NUMERIC = "numeric"
TEMPORAL = "temporal"

_ISO_DATE = re.compile(r"^\d{4}-\d{2}-\d{2}$")


class RaggedRow(ValueError):
    """A data row has a different field count than the header."""


class EmptyInput(ValueError):
    """The CSV stream contains no header record."""


class NonNumericDimension(ValueError):
    """Aggregation requested over a categorical column."""


class NonCategoricalKey(ValueError):
    """Group counting requested over a non-categorical column."""


def parse_number(text: str) -> float | None:
    """Parse a finite real number, or None if the text is not one."""
    try:
        value = float(text)
    except ValueError:
        return None
    if math.isnan(value) or math.isinf(value):
        return None
    return value


def parse_iso_date(text: str) -> date | None:
    """Parse a strict YYYY-MM-DD date, or None."""
    if not _ISO_DATE.match(text):
        return None
    try:
        return date.fromisoformat(text)
    except ValueError:
        return None


def infer_dimension(values: Iterable[str]) -> str:
    """Infer a column kind from raw text values.

    Numeric iff every non-empty value parses as a finite real; temporal iff
    every non-empty value is an ISO-8601 date; otherwise categorical. A
    column with no non-empty values is categorical.
    """
    non_empty = [v for v in values if v != ""]
    if not non_empty:
        return CATEGORICAL
    if all(parse_number(v) is not None for v in non_empty):
        return NUMERIC
    if all(parse_iso_date(v) is not None for v in non_empty):
        return TEMPORAL
    return CATEGORICAL


@dataclass(frozen=True)
class Column:
    """A named, typed column. Missing values are stored as None.

    Numeric values are finite floats, temporal values ISO date strings,
    categorical values non-empty text.
    """

    name: str
    kind: str
    values: tuple

    def numeric_value(self, row_id: int) -> float | None:
        """The value at row_id on a numeric axis (dates become ordinals)."""
        v = self.values[row_id]
        if v is None:
            return None
        if self.kind == NUMERIC:
            return float(v)
        if self.kind == TEMPORAL:
            return float(date.fromisoformat(v).toordinal())
        raise NonNumericDimension(f"column {self.name!r} is categorical")


@dataclass(frozen=True)
class DataTable:
    """An immutable table with stable zero-based row identities."""

    name: str
    columns: tuple[Column, ...]
    row_count: int
    _by_name: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate column names in table {self.name!r}")
        for c in self.columns:
            if len(c.values) != self.row_count:
                raise ValueError(
                    f"column {c.name!r} has {len(c.values)} values, expected {self.row_count}"
                )
        self._by_name.update({c.name: c for c in self.columns})

    def column(self, name: str) -> Column:
        try:
            return self._by_name[name]
        except KeyError:
            raise KeyError(f"no column {name!r} in table {self.name!r}") from None

    def has_column(self, name: str) -> bool:
        return name in self._by_name

    def row_ids(self) -> range:
        return range(self.row_count)

    def value(self, column: str, row_id: int):
        return self.column(column).values[row_id]


@dataclass(frozen=True)
class Histogram:
    """Binned counts of a numeric or temporal dimension.

    Bins are half-open [e_i, e_i+1) except the last, which is closed. The
    ``empty`` flag marks the degenerate no-rows case, where the edges span
    [0, 1] and every count is zero.
    """

    dimension: str
    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]
    empty: bool = False

    def __post_init__(self):
        if len(self.bin_edges) != len(self.counts) + 1:
            raise ValueError("bin_edges must have exactly one more entry than counts")
        if any(b >= a for a, b in zip(self.bin_edges[1:], self.bin_edges)):
            raise ValueError("bin_edges must be strictly increasing")
        if any(c < 0 for c in self.counts):
            raise ValueError("counts must be non-negative")

    def to_json(self) -> dict:
        return {
            "dimension": self.dimension,
            "edges": [float(e) for e in self.bin_edges],
            "counts": list(self.counts),
            "empty": self.empty,
        }


# A row predicate: serializable filter over table rows. ops on column values;
# "and"/"or" combine children; missing values never match a comparison.
_OPS: dict[str, Callable[[Any, Any], bool]] = {
    "eq": lambda v, t: v == t,
    "ne": lambda v, t: v != t,
    "lt": lambda v, t: v < t,
    "le": lambda v, t: v <= t,
    "gt": lambda v, t: v > t,
    "ge": lambda v, t: v >= t,
    "in": lambda v, t: v in t,
}


@dataclass(frozen=True)
class RowFilter:
    """Declarative row predicate; JSON round-trips for wire and scenario use."""

    op: str
    column: str | None = None
    value: Any = None
    children: tuple["RowFilter", ...] = ()

    def matches(self, table: DataTable, row_id: int) -> bool:
        if self.op == "true":
            return True
        if self.op == "and":
            return all(c.matches(table, row_id) for c in self.children)
        if self.op == "or":
            return any(c.matches(table, row_id) for c in self.children)
        if self.op == "not":
            return not self.children[0].matches(table, row_id)
        v = table.value(self.column, row_id)
        if v is None:
            return False
        return _OPS[self.op](v, self.value)

    def to_json(self) -> dict:
        if self.op in ("and", "or", "not"):
            return {"op": self.op, "children": [c.to_json() for c in self.children]}
        if self.op == "true":
            return {"op": "true"}
        return {"op": self.op, "column": self.column, "value": self.value}

    @classmethod
    def from_json(cls, data: dict) -> "RowFilter":
        op = data["op"]
        if op in ("and", "or", "not"):
            return cls(op=op, children=tuple(cls.from_json(c) for c in data["children"]))
        if op == "true":
            return cls(op="true")
        if op not in _OPS:
            raise ValueError(f"unknown filter op {op!r}")
        return cls(op=op, column=data["column"], value=data["value"])


MATCH_ALL = RowFilter(op="true")


def filtered_row_ids(table: DataTable, where: RowFilter | None = None) -> list[int]:
    """Row ids passing the filter, in load order."""
    if where is None or where.op == "true":
        return list(table.row_ids())
    return [r for r in table.row_ids() if where.matches(table, r)]


def load_table(source: io.TextIOBase | str, name: str) -> DataTable:
    """Load a table from CSV text (RFC-4180 quoting, first record = header).

    Column kinds are inferred per :func:`infer_dimension`; numeric values are
    parsed to floats, temporal values kept as ISO date strings, empty fields
    become missing (None). Row ids are assigned 0..N-1 in file order.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyInput("CSV stream has no header record") from None
    if not header:
        raise EmptyInput("CSV header record is empty")
    raw_rows: list[list[str]] = []
    for lineno, row in enumerate(reader, start=2):
        if not row:  # blank line
            continue
        if len(row) != len(header):
            raise RaggedRow(
                f"row at line {lineno} has {len(row)} fields, header has {len(header)}"
            )
        raw_rows.append(row)

    columns = []
    for i, col_name in enumerate(header):
        raw = [row[i] for row in raw_rows]
        kind = infer_dimension(raw)
        values: list[Any] = []
        for v in raw:
            if v == "":
                values.append(None)
            elif kind == NUMERIC:
                values.append(parse_number(v))
            else:
                values.append(v)
        columns.append(Column(name=col_name, kind=kind, values=tuple(values)))
    return DataTable(name=name, columns=tuple(columns), row_count=len(raw_rows))


def write_csv(table: DataTable) -> str:
    """Serialize a table back to CSV; value-preserving inverse of load_table."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow([c.name for c in table.columns])
    for r in table.row_ids():
        row = []
        for c in table.columns:
            v = c.values[r]
            if v is None:
                row.append("")
            elif c.kind == NUMERIC:
                row.append(repr(v))
            else:
                row.append(str(v))
        writer.writerow(row)
    return out.getvalue()


def aggregate(
    table: DataTable,
    dimension: str,
    bins: int | Sequence[float] = 10,
    where: RowFilter | None = None,
) -> Histogram:
    """Histogram of a numeric or temporal dimension over the filtered rows.

    When ``bins`` is a count, edges are equal-width over [min, max] of the
    filtered non-missing values; a degenerate range (min == max) becomes the
    single bin [v, v+1] so edges stay strictly increasing. When no rows pass
    the filter, returns a flagged all-zero histogram over [0, 1].
    """
    col = table.column(dimension)
    if col.kind == CATEGORICAL:
        raise NonNumericDimension(f"column {dimension!r} is categorical")

    values = [
        col.numeric_value(r)
        for r in filtered_row_ids(table, where)
        if col.values[r] is not None
    ]

    if isinstance(bins, int):
        if bins <= 0:
            raise ValueError("bin count must be positive")
        if not values:
            edges = [i / bins for i in range(bins + 1)]
            return Histogram(dimension, tuple(edges), tuple([0] * bins), empty=True)
        lo, hi = min(values), max(values)
        if lo == hi:
            hi = lo + 1.0
        edges = [lo + (hi - lo) * i / bins for i in range(bins + 1)]
        edges[-1] = hi
    else:
        edges = [float(e) for e in bins]
        if len(edges) < 2 or any(b >= a for a, b in zip(edges[1:], edges)):
            raise ValueError("explicit bin edges must be strictly increasing")
        if not values:
            return Histogram(dimension, tuple(edges), tuple([0] * (len(edges) - 1)), empty=True)

    counts = [0] * (len(edges) - 1)
    for v in values:
        counts[bin_index(edges, v)] += 1
    return Histogram(dimension, tuple(edges), tuple(counts))


def bin_index(edges: Sequence[float], v: float) -> int:
    """Index of the bin containing v; bins half-open, last closed.

    Values outside [edges[0], edges[-1]] clamp into the end bins (only
    reachable with explicit edges).
    """
    if v >= edges[-1]:
        return len(edges) - 2
    if v <= edges[0]:
        return 0
    lo, hi = 0, len(edges) - 2
    while lo < hi:
        mid = (lo + hi) // 2
        if v < edges[mid + 1]:
            hi = mid
        else:
            lo = mid + 1
    return lo


def group_count(
    table: DataTable,
    key: str,
    where: RowFilter | None = None,
) -> list[tuple[str, int]]:
    """Count filtered rows per category, sorted by category text ascending.

    Rows with a missing key value are excluded.
    """
    col = table.column(key)
    if col.kind != CATEGORICAL:
        raise NonCategoricalKey(f"column {key!r} is {col.kind}, expected categorical")
    tally: dict[str, int] = {}
    for r in filtered_row_ids(table, where):
        v = col.values[r]
        if v is None:
            continue
        tally[v] = tally.get(v, 0) + 1
    return sorted(tally.items())
