"""Seeded synthetic pollutant data shaped like the CPCB city-day dataset."""

from __future__ import annotations

import csv
from datetime import datetime, timedelta
from os import PathLike

import numpy as np

from aqcep.aqi import AqiCategory, compute_aqi, default_table
from aqcep.ingest import Event
from aqcep.pollutants import POLLUTANTS, PollutantKind

STATIONS = ("Ahmedabad", "Bengaluru", "Chennai", "Delhi", "Kolkata", "Lucknow", "Mumbai")

# (median, log-sigma) per pollutant, roughly matching city-day magnitudes
_PROFILE = {
    PollutantKind.PM25: (55.0, 0.75),
    PollutantKind.PM10: (110.0, 0.7),
    PollutantKind.NO: (10.0, 0.9),
    PollutantKind.NO2: (28.0, 0.7),
    PollutantKind.NOX: (30.0, 0.8),
    PollutantKind.NH3: (22.0, 0.8),
    PollutantKind.CO: (1.0, 0.9),
    PollutantKind.SO2: (12.0, 0.8),
    PollutantKind.O3: (33.0, 0.6),
}

# AQI_Bucket spellings used by the public city-day dataset
BUCKET_NAMES = {
    AqiCategory.GOOD: "Good",
    AqiCategory.SATISFACTORY: "Satisfactory",
    AqiCategory.MODERATELY_POLLUTED: "Moderate",
    AqiCategory.POOR: "Poor",
    AqiCategory.VERY_POOR: "Very Poor",
    AqiCategory.SEVERE: "Severe",
}

CSV_HEADER = [
    "City", "Date", "PM2.5", "PM10", "NO", "NO2", "NOx", "NH3", "CO", "SO2", "O3",
    "Benzene", "Toluene", "Xylene", "AQI", "AQI_Bucket",
]


def synthetic_readings(n: int, seed: int = 0) -> np.ndarray:
    """An (n, 9) array of non-negative concentrations in canonical pollutant order."""
    rng = np.random.default_rng(seed)
    cols = []
    for p in POLLUTANTS:
        median, sigma = _PROFILE[p]
        cols.append(np.round(median * rng.lognormal(0.0, sigma, n), 2))
    return np.column_stack(cols) if n else np.zeros((0, len(POLLUTANTS)))


def synthetic_events(
    n: int, seed: int = 0, stations: tuple[str, ...] = STATIONS, start: datetime = datetime(2015, 1, 1)
) -> list[Event]:
    """``n`` daily events spread over ``stations``, ordered by (station, date), seq 0..n-1."""
    values = synthetic_readings(n, seed).tolist()
    per_station, extra = divmod(n, len(stations))
    events = []
    k = 0
    for i, station in enumerate(stations):
        for day in range(per_station + (1 if i < extra else 0)):
            events.append(
                Event(k, start + timedelta(days=day), station, dict(zip(POLLUTANTS, values[k])))
            )
            k += 1
    return events


def write_synthetic_csv(path: str | PathLike, n: int, seed: int = 0, missing_rate: float = 0.05) -> None:
    """A city-day style CSV with 16 columns; about ``missing_rate`` of pollutant cells are blank.

    AQI and AQI_Bucket are computed from the complete readings with the
    default breakpoint table, so they can serve as mining labels.
    """
    rng = np.random.default_rng(seed + 1)
    table = default_table()
    events = synthetic_events(n, seed)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for e in events:
            result = compute_aqi(table, e.readings)
            cells = []
            for p in POLLUTANTS:
                cells.append("" if rng.random() < missing_rate else f"{e.readings[p]:.2f}")
            aromatics = [f"{x:.2f}" for x in rng.lognormal(0.5, 0.8, 3)]
            aqi = f"{round(result.aqi)}" if result else ""
            bucket = BUCKET_NAMES[result.category] if result else ""
            w.writerow([e.station, e.timestamp.date().isoformat(), *cells, *aromatics, aqi, bucket])
