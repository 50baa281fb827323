import csv
import json
import threading
from datetime import datetime
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aqcep.aqi import AqiCategory, WindowSpec, default_window_specs, windowed_average
from aqcep.cep import (
    CepEngine,
    JsonlSink,
    WebhookSink,
    collect_metrics,
    deploy_rules,
    process_event,
    run_stream,
    write_metrics_csv,
)
from aqcep.errors import DeploymentError, SinkError, StreamOrderError
from aqcep.ingest import Event
from aqcep.pollutants import POLLUTANTS
from aqcep.pollutants import PollutantKind as P
from aqcep.rdf import Graph, KnowledgeGraph
from aqcep.rules import Condition, Rule, RuleSet, bundled_rules, parse_rules
from aqcep.synthetic import synthetic_events


def event(seq, station="Delhi", **values):
    readings = {p: 1.0 for p in POLLUTANTS}
    for name, v in values.items():
        readings[P.parse(name)] = float(v)
    return Event(seq, datetime(2015, 1, 1 + seq % 28), station, readings)


def brute_force(rules, events):
    out = []
    for e in events:
        for r in rules:
            if all(
                {">=": e.readings[c.pollutant] >= c.threshold, "<=": e.readings[c.pollutant] <= c.threshold,
                 ">": e.readings[c.pollutant] > c.threshold, "<": e.readings[c.pollutant] < c.threshold}[c.comparator]
                for c in r.conditions
            ):
                out.append((e.seq, r.name))
    return out


class TestDeploy:
    def test_standard(self, standard_rules):
        engine = CepEngine()
        deployed = deploy_rules(engine, standard_rules)
        assert [d.id for d in deployed] == [0, 1, 2, 3, 4]
        assert [d.rule.name for d in deployed] == ["r1", "r2", "r3", "r4", "r5"]

    def test_empty(self, events_500):
        engine = CepEngine()
        assert engine.deploy_rules(RuleSet()) == []
        assert engine.run_stream(events_500).alerts_emitted == 0

    def test_duplicate(self, standard_rules):
        engine = CepEngine()
        engine.deploy_rules(standard_rules)
        with pytest.raises(DeploymentError):
            engine.deploy_rules([standard_rules["r2"]])
        assert len(engine.deployed) == 5

    def test_duplicate_in_batch_is_atomic(self, standard_rules):
        engine = CepEngine()
        with pytest.raises(DeploymentError):
            engine.deploy_rules([standard_rules["r1"], standard_rules["r1"]])
        assert engine.deployed == []

    def test_unsatisfiable_warns_but_deploys(self, events_500):
        engine = CepEngine()
        engine.deploy_rules(bundled_rules("standard_inverted.rules"))
        assert len(engine.deployed) == 5
        assert any("r3" in w for w in engine.warnings)
        assert engine.run_stream(events_500).per_rule_match_count["r3"] == 0


class TestProcessEvent:
    def test_rule1(self, standard_rules):
        engine = CepEngine()
        engine.deploy_rules([standard_rules["r1"]])
        (alert,) = process_event(engine, event(0, PM25=100, O3=60))
        assert alert.category is AqiCategory.MODERATELY_POLLUTED
        assert alert.matched_values == {P.PM25: 100.0, P.O3: 60.0}
        assert alert.advisory == KnowledgeGraph.default().advisory(AqiCategory.MODERATELY_POLLUTED)

    def test_rule5(self, standard_rules):
        engine = CepEngine()
        engine.deploy_rules(standard_rules)
        alerts = engine.process_event(event(0, PM25=5, NO2=10, NH3=12))
        assert [(a.rule_name, a.category) for a in alerts] == [("r5", AqiCategory.GOOD)]

    def test_no_match(self, standard_rules):
        engine = CepEngine()
        engine.deploy_rules(standard_rules)
        assert engine.process_event(event(0)) == []

    def test_deployment_order(self, standard_rules):
        engine = CepEngine()
        engine.deploy_rules(standard_rules)
        e = event(0, PM25=100, O3=60, PM10=1, SO2=25, NO2=100)
        engine.deploy_rules(parse_rules("RULE extra WHEN PM25 > 90 THEN CATEGORY Poor"))
        assert [a.rule_name for a in engine.process_event(e)] == ["r1", "extra"]

    def test_two_rules_in_order(self):
        rs = parse_rules("RULE r1 WHEN PM25 > 10 THEN CATEGORY Poor\nRULE r3 WHEN SO2 > 10 THEN CATEGORY Severe")
        engine = CepEngine()
        engine.deploy_rules(rs)
        assert [a.rule_name for a in engine.process_event(event(0, PM25=20, SO2=20))] == ["r1", "r3"]

    def test_stream_order(self):
        engine = CepEngine()
        engine.process_event(event(5))
        engine.process_event(event(3, station="Agra"))
        with pytest.raises(StreamOrderError):
            engine.process_event(event(5))

    def test_missing_advisory(self, caplog):
        engine = CepEngine(knowledge_graph=KnowledgeGraph(Graph()))
        engine.deploy_rules(parse_rules("RULE a WHEN PM25 > 1 THEN CATEGORY Poor"))
        (alert,) = engine.process_event(event(0, PM25=5))
        assert alert.advisory == ""
        assert "no advisory" in caplog.text


class TestRunStream:
    def test_counts(self, standard_rules, events_500):
        engine = CepEngine()
        engine.deploy_rules(standard_rules)
        alerts = []
        m = run_stream(engine, events_500, alerts.append)
        assert m.events_processed == 500
        assert m.alerts_emitted == len(alerts) == sum(m.per_rule_match_count.values())
        assert [(a.event_seq, a.rule_name) for a in alerts] == brute_force(standard_rules, events_500)

    def test_zero_events(self, standard_rules):
        engine = CepEngine()
        engine.deploy_rules(standard_rules)
        m = engine.run_stream([])
        assert (m.events_processed, m.alerts_emitted) == (0, 0)
        assert m.process_duration < 1e-3

    def test_sink_failure(self):
        engine = CepEngine()
        engine.deploy_rules(parse_rules("RULE a WHEN PM25 > 10 THEN CATEGORY Poor"))
        events = [event(k, PM25=20 if k == 3 else 1) for k in range(6)]

        def sink(alert):
            raise OSError("disk full")

        with pytest.raises(SinkError) as exc:
            engine.run_stream(events, sink)
        assert exc.value.event_seq == 3
        assert exc.value.metrics.events_processed == 4

    def test_determinism(self, standard_rules, events_500, tmp_path):
        outputs = []
        for k in range(2):
            engine = CepEngine()
            engine.deploy_rules(standard_rules)
            path = tmp_path / f"alerts{k}.jsonl"
            with JsonlSink(path) as sink:
                engine.run_stream(events_500, sink)
            outputs.append(path.read_bytes())
        assert outputs[0] == outputs[1]
        first = json.loads(outputs[0].splitlines()[0])
        assert set(first) == {"rule_name", "event_seq", "station", "timestamp", "category", "matched_values", "advisory"}

    def test_pipeline_matches_stream(self, standard_rules, events_500):
        a, b = CepEngine(), CepEngine()
        a.deploy_rules(standard_rules)
        b.deploy_rules(standard_rules)
        seq_a, seq_b = [], []
        a.run_stream(events_500, seq_a.append)
        b.run_pipeline(iter(events_500), seq_b.append, capacity=8)
        assert seq_a == seq_b

    def test_pipeline_propagates_sink_failure(self):
        engine = CepEngine()
        engine.deploy_rules(parse_rules("RULE a WHEN PM25 > 0 THEN CATEGORY Poor"))

        def sink(alert):
            raise RuntimeError("nope")

        with pytest.raises(SinkError):
            engine.run_pipeline((event(k) for k in range(5000)), sink, capacity=2)


class TestMetrics:
    def test_before_deploy(self):
        m = collect_metrics(CepEngine())
        assert (m.events_processed, m.alerts_emitted, dict(m.per_rule_match_count)) == (0, 0, {})
        assert m.deploy_duration == m.process_duration == 0.0

    def test_snapshots_stable(self, standard_rules, events_500):
        engine = CepEngine()
        engine.deploy_rules(standard_rules)
        engine.run_stream(events_500)
        assert engine.collect_metrics() == engine.collect_metrics()

    def test_csv(self, standard_rules, events_500, tmp_path):
        engine = CepEngine()
        engine.deploy_rules(standard_rules)
        m = engine.run_stream(events_500)
        path = tmp_path / "m.csv"
        write_metrics_csv(m, path, [r.name for r in standard_rules])
        header, values = list(csv.reader(path.open()))
        assert header == ["events_processed", "alerts_emitted", "deploy_seconds", "process_seconds",
                          "r1", "r2", "r3", "r4", "r5"]
        assert int(values[0]) == 500
        assert sum(int(v) for v in values[4:]) == int(values[1])

    def test_concurrent_snapshots(self, standard_rules):
        engine = CepEngine()
        engine.deploy_rules(standard_rules)
        events = synthetic_events(3000, seed=8)
        seen = []
        stop = threading.Event()

        def poll():
            while not stop.is_set():
                m = engine.collect_metrics()
                seen.append(m.alerts_emitted == sum(m.per_rule_match_count.values()))

        t = threading.Thread(target=poll)
        t.start()
        engine.run_stream(events)
        stop.set()
        t.join()
        assert seen and all(seen)


class TestWindowed:
    def test_length_one_is_stateless(self, standard_rules, events_500):
        a = CepEngine(windowed=True, window_specs=default_window_specs(daily=True))
        b = CepEngine()
        a.deploy_rules(standard_rules)
        b.deploy_rules(standard_rules)
        assert a.run_stream(events_500).per_rule_match_count == b.run_stream(events_500).per_rule_match_count

    def test_window_average_semantics(self):
        specs = {p: WindowSpec(p, 3, 2) for p in POLLUTANTS}
        engine = CepEngine(windowed=True, window_specs=specs)
        engine.deploy_rules(parse_rules("RULE hi WHEN PM25 >= 20 THEN CATEGORY Poor"))
        values = [30, 30, 0, 0, 90, 0]
        fired = [bool(engine.process_event(event(k, PM25=v))) for k, v in enumerate(values)]
        series, expected = [], []
        for v in values:
            series.append(float(v))
            avg = windowed_average(series, specs[P.PM25])
            expected.append(avg is not None and avg >= 20)
        assert fired == expected == [False, True, True, False, True, True]

    def test_windows_are_per_station(self):
        specs = {p: WindowSpec(p, 2, 2) for p in POLLUTANTS}
        engine = CepEngine(windowed=True, window_specs=specs)
        engine.deploy_rules(parse_rules("RULE hi WHEN PM25 >= 20 THEN CATEGORY Poor"))
        assert engine.process_event(event(0, "A", PM25=50)) == []
        assert engine.process_event(event(1, "B", PM25=50)) == []
        assert len(engine.process_event(event(2, "A", PM25=50))) == 1


@settings(max_examples=40)
@given(st.integers(0, 10**6), st.lists(st.tuples(st.sampled_from(POLLUTANTS), st.sampled_from([">=", "<=", ">", "<"]),
                                                 st.floats(0, 300)), min_size=1, max_size=4), st.integers(1, 6))
def test_oracle_equivalence(seed, conds, n_rules):
    rules = RuleSet(tuple(
        Rule(f"r{k}", tuple(Condition(p, op, t) for p, op, t in conds[k % len(conds):] + conds[: k % len(conds)]),
             AqiCategory.POOR)
        for k in range(n_rules)
    ))
    events = synthetic_events(60, seed=seed)
    engine = CepEngine()
    engine.deploy_rules(rules)
    alerts = []
    engine.run_stream(events, alerts.append)
    assert [(a.event_seq, a.rule_name) for a in alerts] == brute_force(rules, events)


class _Hook(BaseHTTPRequestHandler):
    received: list = []
    status = 204

    def do_POST(self):
        body = self.rfile.read(int(self.headers["Content-Length"]))
        type(self).received.append(json.loads(body))
        self.send_response(type(self).status)
        self.end_headers()

    def log_message(self, *args):
        pass


@pytest.fixture
def webhook():
    handler = type("Hook", (_Hook,), {"received": [], "status": 204})
    server = HTTPServer(("127.0.0.1", 0), handler)
    t = threading.Thread(target=server.serve_forever, daemon=True)
    t.start()
    yield f"http://127.0.0.1:{server.server_port}/alerts", handler
    server.shutdown()
    server.server_close()


class TestWebhook:
    def test_delivers(self, webhook):
        url, handler = webhook
        engine = CepEngine()
        engine.deploy_rules(parse_rules("RULE a WHEN PM25 > 10 THEN CATEGORY Poor"))
        engine.run_stream([event(0, PM25=20), event(1), event(2, PM25=30)], WebhookSink(url))
        assert [r["event_seq"] for r in handler.received] == [0, 2]

    def test_non_2xx_fails(self, webhook):
        url, handler = webhook
        handler.status = 500
        engine = CepEngine()
        engine.deploy_rules(parse_rules("RULE a WHEN PM25 > 10 THEN CATEGORY Poor"))
        with pytest.raises(SinkError) as exc:
            engine.run_stream([event(0), event(1, PM25=20)], WebhookSink(url))
        assert exc.value.event_seq == 1
