import json
import os
from datetime import datetime

import pytest
from hypothesis import given
from hypothesis import strategies as st

from aqcep.errors import ContractError, ImputationError, SchemaError
from aqcep.ingest import (
    Event,
    impute_median,
    labeled_rows,
    load_events,
    parse_dataset,
    read_events_jsonl,
    to_event_stream,
    write_events_jsonl,
)
from aqcep.pollutants import POLLUTANTS, PollutantKind

HEADER = "City,Date,PM2.5,PM10,NO,NO2,NOx,NH3,CO,SO2,O3,Benzene,Toluene,Xylene,AQI,AQI_Bucket"


def write_csv(tmp_path, rows, header=HEADER, name="data.csv"):
    path = tmp_path / name
    path.write_text("\n".join([header, *rows]) + "\n", encoding="utf-8")
    return path


def row(city="Delhi", date="2015-01-01", pm25="10", rest="20,1,2,3,4,0.5,6,7,0.1,0.2,0.3,,"):
    return f"{city},{date},{pm25},{rest}"


class TestPollutantKind:
    def test_canonical_order(self):
        assert [p.value for p in POLLUTANTS] == ["PM25", "PM10", "NO", "NO2", "NOX", "NH3", "CO", "SO2", "O3"]
        assert [p.index for p in POLLUTANTS] == list(range(9))

    def test_parse_spellings(self):
        assert PollutantKind.parse("PM2.5") is PollutantKind.PM25
        assert PollutantKind.parse("nox") is PollutantKind.NOX
        with pytest.raises(ValueError):
            PollutantKind.parse("Benzene")

    def test_units(self):
        assert PollutantKind.CO.unit == "mg/m3"
        assert PollutantKind.PM10.unit == "ug/m3"


class TestParseDataset:
    def test_header_only(self, tmp_path):
        d = parse_dataset(write_csv(tmp_path, []))
        assert d.row_count == 0
        assert d.column_count == 16

    def test_malformed_cell_skips_row(self, tmp_path):
        path = write_csv(tmp_path, [row(), row(pm25="abc", date="2015-01-02"), row(date="2015-01-03")])
        d = parse_dataset(path)
        assert d.row_count == 2
        assert len(d.skipped) == 1
        assert d.skipped[0].row == 2

    def test_negative_concentration_skipped(self, tmp_path):
        d = parse_dataset(write_csv(tmp_path, [row(pm25="-1")]))
        assert d.row_count == 0 and len(d.skipped) == 1

    def test_wrong_cell_count_skipped(self, tmp_path):
        d = parse_dataset(write_csv(tmp_path, ["Delhi,2015-01-01,1,2"]))
        assert d.row_count == 0 and len(d.skipped) == 1

    def test_missing_header(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("", encoding="utf-8")
        with pytest.raises(SchemaError):
            parse_dataset(path)

    def test_missing_city_column(self, tmp_path):
        with pytest.raises(SchemaError):
            parse_dataset(write_csv(tmp_path, [], header="Date,PM2.5"))

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(OSError):
            parse_dataset(tmp_path / "nope.csv")

    def test_fields(self, tmp_path):
        d = parse_dataset(write_csv(tmp_path, [row(rest="20,1,2,3,4,0.5,6,,0.1,0.2,0.3,87,Satisfactory")]))
        r = d.records[0]
        assert r.city == "Delhi"
        assert r.date == datetime(2015, 1, 1)
        assert r.readings[PollutantKind.PM25] == 10.0
        assert r.readings[PollutantKind.O3] is None
        assert r.extra_columns == {"Benzene": 0.1, "Toluene": 0.2, "Xylene": 0.3}
        assert r.aqi == 87.0
        assert r.aqi_bucket == "Satisfactory"

    def test_custom_schema(self, tmp_path):
        path = write_csv(tmp_path, ["X,2016-02-02,5"], header="Station,Day,fine")
        d = parse_dataset(path, {"Station": "city", "Day": "date", "fine": PollutantKind.PM25})
        assert d.records[0].city == "X"
        assert d.records[0].readings[PollutantKind.PM25] == 5.0

    def test_synthetic_fixture(self, sample_csv):
        d = parse_dataset(sample_csv)
        assert d.row_count == 500
        assert d.column_count == 16
        assert not d.is_imputed


def dataset_with_column(tmp_path, values):
    rows = []
    for k, v in enumerate(values):
        cell = "" if v is None else str(v)
        rows.append(row(date=f"2015-01-{k + 1:02d}", pm25=cell))
    return parse_dataset(write_csv(tmp_path, rows))


class TestImputeMedian:
    def test_odd_count(self, tmp_path):
        d = impute_median(dataset_with_column(tmp_path, [1, 2, None, 4]))
        assert d.records[2].readings[PollutantKind.PM25] == 2.0
        assert d.column_medians[PollutantKind.PM25] == 2.0

    def test_even_count_takes_mean_of_middle(self, tmp_path):
        d = impute_median(dataset_with_column(tmp_path, [1, 3, None, 7, 9]))
        assert d.records[2].readings[PollutantKind.PM25] == 5.0

    def test_complete_dataset_unchanged(self, tmp_path):
        d = dataset_with_column(tmp_path, [1, 2, 3])
        d = impute_median(d)
        assert impute_median(d).records == d.records

    def test_idempotent(self, sample_csv):
        once = impute_median(parse_dataset(sample_csv))
        twice = impute_median(once)
        assert once.records == twice.records
        assert once.column_medians == twice.column_medians
        assert once.is_imputed

    def test_all_missing_column(self, tmp_path):
        with pytest.raises(ImputationError, match="PM25"):
            impute_median(dataset_with_column(tmp_path, [None, None]))

    def test_imputed_cells_tracked(self, tmp_path):
        d = impute_median(dataset_with_column(tmp_path, [1, None, 3]))
        assert d.records[1].imputed == frozenset({PollutantKind.PM25})
        assert d.records[0].imputed == frozenset()


class TestEventStream:
    def test_requires_imputation(self, sample_csv):
        with pytest.raises(ContractError):
            to_event_stream(parse_dataset(sample_csv))

    def test_seq_dense(self, tmp_path):
        rows = [row(date=f"2015-01-0{k + 1}") for k in range(5)]
        events = to_event_stream(impute_median(parse_dataset(write_csv(tmp_path, rows))))
        assert [e.seq for e in events] == [0, 1, 2, 3, 4]

    def test_filter_absent_city(self, sample_csv):
        assert to_event_stream(impute_median(parse_dataset(sample_csv)), "Atlantis") == []

    def test_grouped_by_city_then_time(self, tmp_path):
        rows = [
            row("Patna", "2015-01-03"), row("Agra", "2015-01-02"), row("Patna", "2015-01-01"),
            row("Agra", "2015-01-03"), row("Patna", "2015-01-02"), row("Agra", "2015-01-01"),
        ]
        events = to_event_stream(impute_median(parse_dataset(write_csv(tmp_path, rows))))
        assert [(e.station, e.timestamp.day) for e in events] == [
            ("Agra", 1), ("Agra", 2), ("Agra", 3), ("Patna", 1), ("Patna", 2), ("Patna", 3),
        ]

    def test_jsonl_roundtrip(self, tmp_path, events_500):
        path = tmp_path / "ev.jsonl"
        assert write_events_jsonl(events_500, path) == 500
        assert read_events_jsonl(path) == events_500
        first = json.loads(path.read_text().splitlines()[0])
        assert set(first) == {"seq", "timestamp", "station", *(p.value for p in POLLUTANTS)}

    def test_load_events_csv_and_jsonl(self, tmp_path, sample_csv):
        from_csv = load_events(sample_csv)
        path = tmp_path / "ev.jsonl"
        write_events_jsonl(from_csv, path)
        assert load_events(path) == from_csv
        assert len(load_events(path, "Delhi")) == sum(e.station == "Delhi" for e in from_csv)

    def test_labeled_rows(self, sample_csv):
        X, y = labeled_rows(impute_median(parse_dataset(sample_csv)))
        assert len(X) == len(y) == 500
        assert all(len(x) == 9 for x in X)


@given(
    st.integers(0, 10**6),
    st.datetimes(min_value=datetime(1990, 1, 1), max_value=datetime(2100, 1, 1)),
    st.text(min_size=1, max_size=12),
    st.lists(st.floats(0, 1e6, allow_nan=False), min_size=9, max_size=9),
)
def test_event_json_roundtrip(seq, ts, station, values):
    e = Event(seq, ts, station, dict(zip(POLLUTANTS, values)))
    assert Event.from_json(json.loads(json.dumps(e.to_json()))) == e


@pytest.mark.skipif("AQCEP_CPCB_CSV" not in os.environ, reason="set AQCEP_CPCB_CSV to the city-day CSV to run")
def test_real_dataset_smoke():
    d = impute_median(parse_dataset(os.environ["AQCEP_CPCB_CSV"]))
    events = to_event_stream(d)
    assert events
    assert all(v is not None for e in events for v in e.readings.values())
    assert [e.seq for e in events] == list(range(len(events)))
