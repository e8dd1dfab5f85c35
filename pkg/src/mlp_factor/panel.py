"""Monthly panel ingestion, universe filters and leak-free standardization.

A :class:`Panel` is a dense ``months x columns`` float matrix where missing
cells are ``NaN``. Months are ``YYYY-MM`` strings on a gap-free grid.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CalendarError,
    DegenerateColumnError,
    EmptyFactorSetError,
    EmptyUniverseError,
    PanelError,
    ParseError,
    SchemaError,
)

PANEL_KINDS = ("returns", "factors", "marketcap", "riskfree")

_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})$")


# -- month arithmetic --------------------------------------------------------

def month_index(month: str) -> int:
    """Months since year 0, so consecutive months differ by one."""
    m = _MONTH_RE.match(month)
    if m is None:
        raise ValueError(f"malformed month {month!r}, expected YYYY-MM")
    year, mon = int(m.group(1)), int(m.group(2))
    if not 1 <= mon <= 12:
        raise ValueError(f"malformed month {month!r}, month out of range")
    return year * 12 + mon - 1


def month_from_index(index: int) -> str:
    year, mon = divmod(index, 12)
    return f"{year:04d}-{mon + 1:02d}"


def add_months(month: str, n: int) -> str:
    return month_from_index(month_index(month) + n)


def month_span(start: str, end: str) -> list[str]:
    a, b = month_index(start), month_index(end)
    return [month_from_index(i) for i in range(a, b + 1)]


@dataclass(frozen=True)
class DateRange:
    start: str
    end: str

    def __post_init__(self):
        if month_index(self.start) > month_index(self.end):
            raise ValueError(f"DateRange start {self.start} after end {self.end}")

    def __len__(self):
        return month_index(self.end) - month_index(self.start) + 1

    def __contains__(self, month: str) -> bool:
        return month_index(self.start) <= month_index(month) <= month_index(self.end)

    def months(self) -> list[str]:
        return month_span(self.start, self.end)

    def overlaps(self, other: "DateRange") -> bool:
        return not (month_index(self.end) < month_index(other.start)
                    or month_index(other.end) < month_index(self.start))

    def __str__(self):
        return f"{self.start}..{self.end}"


@dataclass(frozen=True)
class UniverseFilterSpec:
    max_train_missing_frac: float = 0.5
    test_missing_allowed: bool = False
    min_factor_train_avail_frac: float = 0.6

    def __post_init__(self):
        for name in ("max_train_missing_frac", "min_factor_train_avail_frac"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")


# -- the panel ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Panel:
    dates: tuple[str, ...]
    columns: tuple[str, ...]
    values: np.ndarray
    kind: str = "returns"
    _row: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        dates = tuple(self.dates)
        columns = tuple(self.columns)
        values = np.array(self.values, dtype=np.float64, copy=True)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "columns", columns)
        if self.kind not in PANEL_KINDS:
            raise SchemaError(f"unknown panel kind {self.kind!r}")
        if values.ndim != 2 or values.shape != (len(dates), len(columns)):
            raise SchemaError(
                f"values shape {values.shape} does not match "
                f"{len(dates)} dates x {len(columns)} columns")
        seen = set()
        for c in columns:
            if not c:
                raise SchemaError("empty column name")
            if c in seen:
                raise SchemaError(f"duplicate column {c!r}", column=c)
            seen.add(c)
        idx = [month_index(d) for d in dates]
        for k in range(1, len(idx)):
            if idx[k] != idx[k - 1] + 1:
                raise CalendarError(
                    f"months must be consecutive: {dates[k - 1]} followed by {dates[k]}")
        if self.kind == "marketcap":
            bad = np.argwhere(values <= 0)
            if bad.size:
                r, c = bad[0]
                raise SchemaError(f"market cap must be positive, got {values[r, c]}",
                                  row=dates[r], column=columns[c])
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_row", {d: i for i, d in enumerate(dates)})

    # shape helpers
    @property
    def span(self) -> DateRange:
        return DateRange(self.dates[0], self.dates[-1])

    def row_of(self, month: str) -> int:
        try:
            return self._row[month]
        except KeyError:
            raise PanelError(f"month {month} outside panel span {self.span}") from None

    def rows(self, rng: DateRange) -> slice:
        self._check_within(rng)
        return slice(self.row_of(rng.start), self.row_of(rng.end) + 1)

    def _check_within(self, rng: DateRange):
        if not (rng.start in self.span and rng.end in self.span):
            raise PanelError(f"range {rng} outside panel span {self.span}")

    def slice(self, rng: DateRange) -> "Panel":
        s = self.rows(rng)
        return Panel(self.dates[s], self.columns, self.values[s], self.kind)

    def select(self, columns: Sequence[str]) -> "Panel":
        pos = {c: i for i, c in enumerate(self.columns)}
        try:
            idx = [pos[c] for c in columns]
        except KeyError as exc:
            raise PanelError(f"unknown column {exc.args[0]!r}") from None
        return Panel(self.dates, tuple(columns), self.values[:, idx], self.kind)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def equals(self, other: "Panel") -> bool:
        return (self.dates == other.dates and self.columns == other.columns
                and self.kind == other.kind
                and np.array_equal(self.values, other.values, equal_nan=True))

    def to_csv(self, path) -> None:
        Path(path).write_text(panel_to_csv_text(self), encoding="utf-8")


def panel_to_csv_text(panel: Panel) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("date",) + panel.columns)
    for d, row in zip(panel.dates, panel.values):
        writer.writerow([d] + ["" if np.isnan(v) else repr(float(v)) for v in row])
    return buf.getvalue()


# -- ingestion ---------------------------------------------------------------

def load_panel(path, kind: str = "returns") -> Panel:
    """Read a ``date,<col>,...`` CSV into a validated :class:`Panel`.

    Row numbers in errors are 1-based file lines (the header is line 1).
    """
    path = Path(path)
    if not path.exists():
        raise ParseError("file not found", path=str(path))
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty file", path=str(path)) from None
        if not header or header[0].strip().lstrip("﻿") != "date":
            raise SchemaError("first header cell must be 'date'", path=str(path), row=1)
        columns = [h.strip() for h in header[1:]]
        seen = set()
        for c in columns:
            if not c:
                raise SchemaError("empty column name", path=str(path), row=1)
            if c in seen:
                raise SchemaError("duplicate column", path=str(path), row=1, column=c)
            seen.add(c)

        records: dict[int, tuple[int, str, list[float]]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} cells, found {len(row)}",
                                 path=str(path), row=lineno)
            month = row[0].strip()
            try:
                key = month_index(month)
            except ValueError:
                raise ParseError(f"malformed date {month!r}", path=str(path),
                                 row=lineno, column="date") from None
            cells = []
            for col, raw in zip(columns, row[1:]):
                raw = raw.strip()
                if raw == "":
                    cells.append(np.nan)
                    continue
                try:
                    value = float(raw)
                except ValueError:
                    raise ParseError(f"non-numeric cell {raw!r}", path=str(path),
                                     row=lineno, column=col) from None
                if not np.isfinite(value):
                    raise ParseError(f"non-finite cell {raw!r}", path=str(path),
                                     row=lineno, column=col)
                cells.append(value)
            if key in records:
                raise CalendarError(f"duplicate date {month}", path=str(path), row=lineno)
            records[key] = (lineno, month, cells)

    if not records:
        raise SchemaError("no data rows", path=str(path))
    keys = sorted(records)
    for a, b in zip(keys, keys[1:]):
        if b != a + 1:
            raise CalendarError(
                f"month gap between {month_from_index(a)} and {month_from_index(b)}",
                path=str(path), row=records[b][0])
    dates = [records[k][1] for k in keys]
    values = np.array([records[k][2] for k in keys], dtype=np.float64).reshape(len(keys), len(columns))
    try:
        return Panel(tuple(dates), tuple(columns), values, kind)
    except ParseError as exc:
        lines = {records[k][1]: records[k][0] for k in keys}
        row = lines.get(exc.row, exc.row)
        raise type(exc)(exc.detail, path=str(path), row=row, column=exc.column) from exc


# -- universe filters --------------------------------------------------------

def filter_universe(returns: Panel, train: DateRange, test: DateRange,
                    spec: UniverseFilterSpec = UniverseFilterSpec()) -> Panel:
    """Keep stocks fully observed in ``test`` and mostly observed in ``train``."""
    if train.overlaps(test):
        raise PanelError(f"train {train} and test {test} overlap")
    tr = np.isnan(returns.values[returns.rows(train)])
    te = np.isnan(returns.values[returns.rows(test)])
    keep_train = tr.mean(axis=0) < spec.max_train_missing_frac
    keep_test = np.ones(len(returns.columns), bool) if spec.test_missing_allowed else ~te.any(axis=0)
    keep = [c for c, k in zip(returns.columns, keep_train & keep_test) if k]
    if not keep:
        raise EmptyUniverseError(f"no stock passes the filters over train {train}, test {test}")
    return returns.select(keep)


def filter_factors(factors: Panel, train: DateRange,
                   spec: UniverseFilterSpec = UniverseFilterSpec()) -> Panel:
    avail = (~np.isnan(factors.values[factors.rows(train)])).mean(axis=0)
    keep = [c for c, a in zip(factors.columns, avail) if a >= spec.min_factor_train_avail_frac]
    if not keep:
        raise EmptyFactorSetError(f"no factor reaches {spec.min_factor_train_avail_frac:.0%} "
                                  f"availability over {train}")
    return factors.select(keep)


# -- standardization ---------------------------------------------------------

@dataclass(frozen=True)
class ColumnStats:
    columns: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Mean-impute NaNs, then z-score with the stored statistics."""
        filled = np.where(np.isnan(values), self.mean, values)
        return (filled - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"columns": list(self.columns), "mean": self.mean.tolist(),
                "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnStats":
        return cls(tuple(d["columns"]), np.asarray(d["mean"], float), np.asarray(d["std"], float))


def fit_column_stats(values: np.ndarray, columns: Sequence[str]) -> ColumnStats:
    """Column means over observed cells, and sample std after mean-imputation."""
    values = np.asarray(values, dtype=np.float64)
    observed = ~np.isnan(values)
    counts = observed.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(observed, values, 0.0).sum(axis=0) / counts
    filled = np.where(observed, values, mean)
    if values.shape[0] >= 2:
        std = filled.std(axis=0, ddof=1)
    else:
        std = np.zeros(values.shape[1])
    for j, c in enumerate(columns):
        if counts[j] == 0 or not std[j] > 0:
            raise DegenerateColumnError(c)
    return ColumnStats(tuple(columns), mean, std)


def impute_and_standardize(panel: Panel, fit_range: DateRange) -> tuple[Panel, ColumnStats]:
    """Impute and z-score every month using statistics from ``fit_range`` only."""
    stats = fit_column_stats(panel.values[panel.rows(fit_range)], panel.columns)
    out = Panel(panel.dates, panel.columns, stats.apply(panel.values), panel.kind)
    return out, stats


def align_columns(panels: Iterable[Panel]) -> list[str]:
    """Columns present in every panel, in the order of the first."""
    panels = list(panels)
    common = set(panels[0].columns)
    for p in panels[1:]:
        common &= set(p.columns)
    return [c for c in panels[0].columns if c in common]
