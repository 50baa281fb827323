"""CSV ingestion, median imputation and event-stream replay."""

from __future__ import annotations

import csv
import json
import logging
import math
import statistics
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field, replace
from datetime import datetime
from os import PathLike
from pathlib import Path

from aqcep.errors import ContractError, ImputationError, SchemaError
from aqcep.pollutants import POLLUTANTS, PollutantKind

log = logging.getLogger(__name__)

# Role markers for non-pollutant columns in a schema map.
CITY = "city"
DATE = "date"
AQI = "aqi"
AQI_BUCKET = "aqi_bucket"

DEFAULT_SCHEMA: dict[str, PollutantKind | str] = {
    "City": CITY,
    "Date": DATE,
    "PM2.5": PollutantKind.PM25,
    "PM10": PollutantKind.PM10,
    "NO": PollutantKind.NO,
    "NO2": PollutantKind.NO2,
    "NOx": PollutantKind.NOX,
    "NH3": PollutantKind.NH3,
    "CO": PollutantKind.CO,
    "SO2": PollutantKind.SO2,
    "O3": PollutantKind.O3,
    "AQI": AQI,
    "AQI_Bucket": AQI_BUCKET,
}


@dataclass(frozen=True)
class RawRecord:
    city: str
    date: datetime
    readings: Mapping[PollutantKind, float | None]
    extra_columns: Mapping[str, float | None] = field(default_factory=dict)
    aqi: float | None = None
    aqi_bucket: str | None = None
    # Pollutants whose value was filled in by imputation rather than measured.
    imputed: frozenset[PollutantKind] = frozenset()

    @property
    def is_complete(self) -> bool:
        return all(self.readings.get(p) is not None for p in POLLUTANTS)


@dataclass(frozen=True)
class RowIssue:
    row: int  # 1-based data row index (header excluded)
    message: str


@dataclass(frozen=True)
class Dataset:
    records: tuple[RawRecord, ...]
    column_medians: Mapping[PollutantKind, float] = field(default_factory=dict)
    skipped: tuple[RowIssue, ...] = ()
    columns: tuple[str, ...] = ()

    @property
    def row_count(self) -> int:
        return len(self.records)

    @property
    def column_count(self) -> int:
        return len(self.columns)

    @property
    def is_imputed(self) -> bool:
        return all(r.is_complete for r in self.records)


@dataclass(frozen=True)
class Event:
    seq: int
    timestamp: datetime
    station: str
    readings: Mapping[PollutantKind, float]

    def __getitem__(self, pollutant: PollutantKind) -> float:
        return self.readings[pollutant]

    def to_json(self) -> dict:
        out = {"seq": self.seq, "timestamp": self.timestamp.isoformat(), "station": self.station}
        for p in POLLUTANTS:
            out[p.value] = self.readings[p]
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> Event:
        return cls(
            seq=int(obj["seq"]),
            timestamp=datetime.fromisoformat(obj["timestamp"]),
            station=str(obj["station"]),
            readings={p: float(obj[p.value]) for p in POLLUTANTS},
        )


def _parse_date(text: str) -> datetime:
    text = text.strip()
    if not text:
        raise ValueError("empty date")
    # Daily data carries no time of day; fromisoformat yields midnight for it.
    return datetime.fromisoformat(text)


def _parse_number(text: str, column: str) -> float | None:
    text = text.strip()
    if not text:
        return None
    try:
        value = float(text)
    except ValueError:
        raise ValueError(f"malformed number {text!r} in column {column!r}") from None
    if not math.isfinite(value):
        raise ValueError(f"non-finite value {text!r} in column {column!r}")
    return value


def parse_dataset(
    path: str | PathLike, schema: Mapping[str, PollutantKind | str] | None = None
) -> Dataset:
    """Read a CPCB-style CSV file into a :class:`Dataset`.

    Headers found in ``schema`` map to pollutants or to the city/date/AQI
    roles; any other header is carried through as an extra numeric column.
    Rows with malformed cells are skipped and reported in ``Dataset.skipped``.
    """
    schema = DEFAULT_SCHEMA if schema is None else schema
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: missing header row") from None

        roles = {name: schema.get(name) for name in header}
        role_values = set(roles.values())
        for required in (CITY, DATE):
            if required not in role_values:
                raise SchemaError(f"{path}: no column mapped to {required!r}")

        records: list[RawRecord] = []
        skipped: list[RowIssue] = []
        for row_index, row in enumerate(reader, start=1):
            if not row:
                continue
            try:
                records.append(_parse_row(header, roles, row))
            except ValueError as exc:
                skipped.append(RowIssue(row_index, str(exc)))

    for issue in skipped:
        log.warning("%s: skipped row %d: %s", path, issue.row, issue.message)
    log.info("%s: %d rows, %d columns, %d skipped", path, len(records), len(header), len(skipped))
    return Dataset(records=tuple(records), skipped=tuple(skipped), columns=tuple(header))


def _parse_row(header: list[str], roles: Mapping[str, object], row: list[str]) -> RawRecord:
    if len(row) != len(header):
        raise ValueError(f"expected {len(header)} cells, found {len(row)}")
    city = ""
    date = None
    readings: dict[PollutantKind, float | None] = {p: None for p in POLLUTANTS}
    extra: dict[str, float | None] = {}
    aqi = None
    bucket = None
    for name, cell in zip(header, row):
        role = roles[name]
        if role == CITY:
            city = cell.strip()
        elif role == DATE:
            date = _parse_date(cell)
        elif role == AQI:
            aqi = _parse_number(cell, name)
        elif role == AQI_BUCKET:
            bucket = cell.strip() or None
        elif isinstance(role, PollutantKind):
            value = _parse_number(cell, name)
            if value is not None and value < 0:
                raise ValueError(f"negative concentration {value} in column {name!r}")
            readings[role] = value
        else:
            extra[name] = _parse_number(cell, name)
    if not city:
        raise ValueError("empty city")
    assert date is not None
    return RawRecord(city, date, readings, extra, aqi, bucket)


def impute_median(d: Dataset) -> Dataset:
    """Fill every missing pollutant value with that column's median.

    Medians are taken over originally measured values only, so applying
    this twice gives the same result as applying it once.
    """
    medians: dict[PollutantKind, float] = {}
    for p in POLLUTANTS:
        present = [
            r.readings[p] for r in d.records if r.readings.get(p) is not None and p not in r.imputed
        ]
        if present:
            medians[p] = statistics.median(present)
        elif any(r.readings.get(p) is None for r in d.records):
            raise ImputationError(f"column {p.value} has no present values to take a median of")

    records = []
    for r in d.records:
        missing = [p for p in POLLUTANTS if r.readings.get(p) is None]
        if not missing:
            records.append(r)
            continue
        readings = dict(r.readings)
        for p in missing:
            readings[p] = medians[p]
        records.append(replace(r, readings=readings, imputed=r.imputed | frozenset(missing)))
    return replace(d, records=tuple(records), column_medians=medians)


def to_event_stream(d: Dataset, station_filter: str | None = None) -> list[Event]:
    """Order records by (station, timestamp) and number them densely from 0."""
    if not d.is_imputed:
        raise ContractError("dataset has missing readings; run impute_median first")
    rows = [r for r in d.records if station_filter is None or r.city == station_filter]
    rows.sort(key=lambda r: (r.city, r.date))
    return [
        Event(seq=i, timestamp=r.date, station=r.city, readings={p: r.readings[p] for p in POLLUTANTS})
        for i, r in enumerate(rows)
    ]


def write_events_jsonl(events: Iterable[Event], path: str | PathLike) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for e in events:
            fh.write(json.dumps(e.to_json()) + "\n")
            n += 1
    return n


def iter_events_jsonl(path: str | PathLike) -> Iterator[Event]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield Event.from_json(json.loads(line))


def read_events_jsonl(path: str | PathLike) -> list[Event]:
    return list(iter_events_jsonl(path))


def labeled_rows(d: Dataset) -> tuple[list[list[float]], list[str]]:
    """Feature vectors (canonical pollutant order) and AQI_Bucket labels of labeled records."""
    features, labels = [], []
    for r in d.records:
        if r.aqi_bucket is None:
            continue
        features.append([r.readings[p] for p in POLLUTANTS])
        labels.append(r.aqi_bucket)
    return features, labels


def load_events(path: str | PathLike, station_filter: str | None = None) -> Sequence[Event]:
    """Events from either a CSV dataset (parsed and imputed) or a JSON Lines file."""
    if Path(path).suffix.lower() == ".csv":
        return to_event_stream(impute_median(parse_dataset(path)), station_filter)
    events = read_events_jsonl(path)
    if station_filter is not None:
        events = [e for e in events if e.station == station_filter]
    return events
