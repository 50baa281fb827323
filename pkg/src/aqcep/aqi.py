"""Sub-index interpolation, worst-sub-index AQI and category classification.

Breakpoint rows step in whole units (PM2.5 ``0-30`` then ``31-60``), which
leaves concentrations such as 30.5 outside every printed range. A row owns
the half-open span ``[conc_lo, next_row.conc_lo)``; inside ``[conc_lo,
conc_hi]`` the sub-index is interpolated linearly between the printed
anchors and in the remaining gap it stays at the row's ``aqi_hi``.
"""

from __future__ import annotations

import bisect
import csv
import io
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from os import PathLike

from aqcep.errors import DomainError, TableError
from aqcep.pollutants import POLLUTANTS, PollutantKind


class AqiCategory(Enum):
    GOOD = ("Good", 0, 50)
    SATISFACTORY = ("Satisfactory", 51, 100)
    MODERATELY_POLLUTED = ("ModeratelyPolluted", 101, 200)
    POOR = ("Poor", 201, 300)
    VERY_POOR = ("VeryPoor", 301, 400)
    SEVERE = ("Severe", 401, 500)

    def __init__(self, label: str, lo: int, hi: int):
        self.label = label
        self.lo = lo
        self.hi = hi

    def __lt__(self, other: AqiCategory) -> bool:
        if not isinstance(other, AqiCategory):
            return NotImplemented
        return self.lo < other.lo

    def __str__(self) -> str:
        return self.label

    @classmethod
    def parse(cls, text: str) -> AqiCategory:
        """Resolve a category name; accepts ``Moderate`` and spaced forms like ``Very Poor``."""
        key = "".join(ch for ch in text.lower() if ch.isalnum())
        try:
            return _CATEGORY_ALIASES[key]
        except KeyError:
            raise ValueError(f"unknown AQI category {text!r}") from None


_CATEGORY_ALIASES = {c.label.lower(): c for c in AqiCategory}
_CATEGORY_ALIASES["moderate"] = AqiCategory.MODERATELY_POLLUTED


@dataclass(frozen=True)
class BreakpointRow:
    pollutant: PollutantKind
    conc_lo: float
    conc_hi: float
    aqi_lo: float
    aqi_hi: float
    category: AqiCategory

    def __post_init__(self):
        if not self.conc_lo < self.conc_hi:
            raise TableError(f"{self.pollutant.value}: conc_lo {self.conc_lo} >= conc_hi {self.conc_hi}")
        if not self.aqi_lo < self.aqi_hi:
            raise TableError(f"{self.pollutant.value}: aqi_lo {self.aqi_lo} >= aqi_hi {self.aqi_hi}")
        if not (0 <= self.aqi_lo and self.aqi_hi <= 500):
            raise TableError(f"{self.pollutant.value}: AQI range outside [0, 500]")

    def interpolate(self, c: float) -> float:
        if c >= self.conc_hi:
            return self.aqi_hi
        if c <= self.conc_lo:
            return self.aqi_lo
        return self.aqi_lo + (self.aqi_hi - self.aqi_lo) * (c - self.conc_lo) / (self.conc_hi - self.conc_lo)


class BreakpointTable:
    """Per-pollutant ordered breakpoint rows. Read-only after construction."""

    def __init__(self, rows: Iterable[BreakpointRow]):
        grouped: dict[PollutantKind, list[BreakpointRow]] = {}
        for row in rows:
            grouped.setdefault(row.pollutant, []).append(row)
        for p, prows in grouped.items():
            prows.sort(key=lambda r: r.conc_lo)
            for a, b in zip(prows, prows[1:]):
                if b.conc_lo < a.conc_hi or b.aqi_lo < a.aqi_hi:
                    raise TableError(f"{p.value}: rows {a} and {b} overlap or are out of order")
        self._rows = {p: tuple(grouped[p]) for p in POLLUTANTS if p in grouped}
        self._starts = {p: [r.conc_lo for r in rs] for p, rs in self._rows.items()}

    @property
    def pollutants(self) -> tuple[PollutantKind, ...]:
        return tuple(self._rows)

    def __contains__(self, p: PollutantKind) -> bool:
        return p in self._rows

    def rows(self, p: PollutantKind) -> tuple[BreakpointRow, ...]:
        try:
            return self._rows[p]
        except KeyError:
            raise TableError(f"no breakpoint rows for {p.value}") from None

    def row_for(self, p: PollutantKind, c: float) -> BreakpointRow:
        """The row whose half-open span ``[conc_lo, next conc_lo)`` contains ``c``."""
        rows = self.rows(p)
        i = bisect.bisect_right(self._starts[p], c) - 1
        return rows[max(i, 0)]

    def band_span(self, row: BreakpointRow) -> tuple[float, float]:
        """Concentration span owned by ``row``; the last row extends to infinity."""
        rows = self.rows(row.pollutant)
        i = rows.index(row)
        return row.conc_lo, rows[i + 1].conc_lo if i + 1 < len(rows) else math.inf

    @classmethod
    def from_csv(cls, source: str | PathLike | io.TextIOBase) -> BreakpointTable:
        if isinstance(source, io.TextIOBase):
            return cls(_read_rows(source))
        with open(source, newline="", encoding="utf-8") as fh:
            return cls(_read_rows(fh))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["pollutant", "conc_lo", "conc_hi", "aqi_lo", "aqi_hi", "category"])
        for rs in self._rows.values():
            for r in rs:
                w.writerow([r.pollutant.value, r.conc_lo, r.conc_hi, r.aqi_lo, r.aqi_hi, r.category.label])
        return buf.getvalue()


def _read_rows(fh) -> list[BreakpointRow]:
    rows = []
    for rec in csv.DictReader(fh):
        try:
            rows.append(
                BreakpointRow(
                    pollutant=PollutantKind.parse(rec["pollutant"]),
                    conc_lo=float(rec["conc_lo"]),
                    conc_hi=float(rec["conc_hi"]),
                    aqi_lo=float(rec["aqi_lo"]),
                    aqi_hi=float(rec["aqi_hi"]),
                    category=AqiCategory.parse(rec["category"]),
                )
            )
        except (KeyError, ValueError) as exc:
            raise TableError(f"bad breakpoint row {rec}: {exc}") from exc
    return rows


_DEFAULT_TABLE: BreakpointTable | None = None


def default_table() -> BreakpointTable:
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        text = resources.files("aqcep.data").joinpath("breakpoints.csv").read_text(encoding="utf-8")
        _DEFAULT_TABLE = BreakpointTable.from_csv(io.StringIO(text))
    return _DEFAULT_TABLE


@dataclass(frozen=True)
class SubIndex:
    pollutant: PollutantKind
    value: float


@dataclass(frozen=True)
class AqiResult:
    aqi: float
    dominant: PollutantKind
    sub_indices: tuple[SubIndex, ...]
    category: AqiCategory

    @property
    def rounded(self) -> float:
        return round(self.aqi, 2)


def sub_index(table: BreakpointTable, p: PollutantKind, c: float) -> SubIndex:
    if not math.isfinite(c) or c < 0:
        raise DomainError(f"{p.value} concentration must be finite and >= 0, got {c}")
    return SubIndex(p, table.row_for(p, c).interpolate(c))


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def classify_category(aqi: float) -> AqiCategory:
    if not (math.isfinite(aqi) and 0 <= aqi <= 500):
        raise DomainError(f"AQI must lie in [0, 500], got {aqi}")
    n = round_half_up(aqi)
    for cat in AqiCategory:
        if cat.lo <= n <= cat.hi:
            return cat
    raise AssertionError("categories cover 0-500")


@dataclass(frozen=True)
class WindowSpec:
    pollutant: PollutantKind
    length: int
    min_samples: int

    def __post_init__(self):
        if self.length < 1 or not 1 <= self.min_samples <= self.length:
            raise ValueError(f"invalid window spec {self}")


def default_window_specs(daily: bool = False) -> dict[PollutantKind, WindowSpec]:
    """24-sample windows needing 16 present, 8/6 for CO and O3; 1/1 for daily data."""
    specs = {}
    for p in POLLUTANTS:
        if daily:
            specs[p] = WindowSpec(p, 1, 1)
        elif p in (PollutantKind.CO, PollutantKind.O3):
            specs[p] = WindowSpec(p, 8, 6)
        else:
            specs[p] = WindowSpec(p, 24, 16)
    return specs


def windowed_average(series: Sequence[float | None], spec: WindowSpec) -> float | None:
    recent = [v for v in list(series)[-spec.length :] if v is not None]
    if len(recent) < spec.min_samples:
        return None
    return math.fsum(recent) / len(recent)


def compute_aqi(
    table: BreakpointTable, readings: Mapping[PollutantKind, float | None]
) -> AqiResult | None:
    """Worst sub-index over the pollutants the table covers.

    Returns None unless at least three covered pollutants have values and
    one of them is PM2.5 or PM10.
    """
    available = [p for p in POLLUTANTS if p in table and readings.get(p) is not None]
    if len(available) < 3:
        return None
    if PollutantKind.PM25 not in available and PollutantKind.PM10 not in available:
        return None
    subs = tuple(sub_index(table, p, readings[p]) for p in available)
    worst = subs[0]
    for s in subs[1:]:
        if s.value > worst.value:
            worst = s
    return AqiResult(worst.value, worst.pollutant, subs, classify_category(worst.value))
