"""Rule deployment and per-event evaluation with alerting.

Every event is checked against every deployed rule in deployment order;
there is no shared match network. Alert timestamps come from the event so
identical input always yields identical alert output.
"""

from __future__ import annotations

import csv
import json
import logging
import queue
import threading
import time
import urllib.error
import urllib.request
from collections import deque
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field
from datetime import datetime
from os import PathLike

from aqcep.aqi import AqiCategory, WindowSpec, default_window_specs, windowed_average
from aqcep.errors import (
    AdvisoryLookupError,
    DeploymentError,
    SinkError,
    StreamOrderError,
)
from aqcep.ingest import Event
from aqcep.pollutants import POLLUTANTS, PollutantKind
from aqcep.rules import COMPARATORS, Rule, RuleSet, box_is_empty, condition_box

log = logging.getLogger(__name__)

AlertSink = Callable[["Alert"], None]


@dataclass(frozen=True)
class DeployedRule:
    rule: Rule
    deployed_at: float  # monotonic clock reading
    id: int


@dataclass(frozen=True)
class Alert:
    rule_name: str
    event_seq: int
    station: str
    timestamp: datetime
    category: AqiCategory
    matched_values: Mapping[PollutantKind, float]
    advisory: str

    def to_json(self) -> dict:
        return {
            "rule_name": self.rule_name,
            "event_seq": self.event_seq,
            "station": self.station,
            "timestamp": self.timestamp.isoformat(),
            "category": self.category.label,
            "matched_values": {p.value: v for p, v in self.matched_values.items()},
            "advisory": self.advisory,
        }

    def to_line(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


@dataclass(frozen=True)
class EngineMetrics:
    events_processed: int = 0
    alerts_emitted: int = 0
    per_rule_match_count: Mapping[str, int] = field(default_factory=dict)
    deploy_duration: float = 0.0
    process_duration: float = 0.0


class CepEngine:
    """Evaluates deployed rules against a stream of events.

    With ``windowed=True`` each rule sees the window average of every
    pollutant (per station) instead of the raw reading; a pollutant whose
    window lacks enough samples fails every condition on it.
    """

    def __init__(
        self,
        knowledge_graph=None,
        windowed: bool = False,
        window_specs: Mapping[PollutantKind, WindowSpec] | None = None,
    ):
        if knowledge_graph is None:
            from aqcep.rdf import KnowledgeGraph

            knowledge_graph = KnowledgeGraph.default()
        self.knowledge_graph = knowledge_graph
        self.windowed = windowed
        self.window_specs = dict(window_specs or default_window_specs(daily=False))
        self.deployed: list[DeployedRule] = []
        self.warnings: list[str] = []
        self._compiled: list[tuple[DeployedRule, tuple]] = []
        self._windows: dict[tuple[str, PollutantKind], deque] = {}
        self._last_seq: dict[str, int] = {}
        self._advisories: dict[AqiCategory, str] = {}
        self._lock = threading.Lock()
        self._events = 0
        self._alerts = 0
        self._matches: dict[str, int] = {}
        self._deploy_duration = 0.0
        self._process_duration = 0.0

    # -- deployment ---------------------------------------------------------

    def deploy_rules(self, rs: RuleSet | Iterable[Rule]) -> list[DeployedRule]:
        start = time.perf_counter()
        rules = list(rs)
        names = {d.rule.name for d in self.deployed}
        for r in rules:
            if r.name in names:
                raise DeploymentError(f"rule {r.name!r} is already deployed")
            names.add(r.name)
        added = []
        for r in rules:
            if box_is_empty(condition_box(r.conditions)):
                msg = f"rule {r.name!r} is unsatisfiable and will never fire"
                log.warning(msg)
                self.warnings.append(msg)
            d = DeployedRule(r, time.monotonic(), len(self.deployed))
            compiled = tuple((c.pollutant, COMPARATORS[c.comparator], c.threshold) for c in r.conditions)
            self.deployed.append(d)
            self._compiled.append((d, compiled))
            added.append(d)
            with self._lock:
                self._matches[r.name] = 0
        with self._lock:
            self._deploy_duration += time.perf_counter() - start
        return added

    # -- evaluation ---------------------------------------------------------

    def _advisory(self, category: AqiCategory) -> str:
        text = self._advisories.get(category)
        if text is None:
            try:
                text = self.knowledge_graph.advisory(category)
            except AdvisoryLookupError:
                log.warning("no advisory for %s; alerting without one", category.label)
                text = ""
            self._advisories[category] = text
        return text

    def _update_windows(self, e: Event) -> dict[PollutantKind, float | None]:
        values = {}
        for p in POLLUTANTS:
            spec = self.window_specs[p]
            key = (e.station, p)
            buf = self._windows.get(key)
            if buf is None:
                buf = self._windows[key] = deque(maxlen=spec.length)
            buf.append(e.readings.get(p))
            values[p] = windowed_average(buf, spec) if self.windowed else e.readings.get(p)
        return values

    def process_event(self, e: Event) -> list[Alert]:
        last = self._last_seq.get(e.station)
        if last is not None and e.seq <= last:
            raise StreamOrderError(f"event seq {e.seq} for {e.station!r} is not after {last}")
        self._last_seq[e.station] = e.seq
        values = self._update_windows(e)
        alerts = []
        for d, compiled in self._compiled:
            for p, op, threshold in compiled:
                v = values[p]
                if v is None or not op(v, threshold):
                    break
            else:
                rule = d.rule
                alerts.append(
                    Alert(
                        rule.name,
                        e.seq,
                        e.station,
                        e.timestamp,
                        rule.category,
                        {p: values[p] for p in rule.pollutants},
                        self._advisory(rule.category),
                    )
                )
        with self._lock:
            self._events += 1
            self._alerts += len(alerts)
            for a in alerts:
                self._matches[a.rule_name] += 1
        return alerts

    def run_stream(self, events: Iterable[Event], sink: AlertSink | None = None) -> EngineMetrics:
        """Process events in order, handing every alert to ``sink``.

        Only the evaluation loop is timed. If the sink raises, the run stops
        with a :class:`SinkError` carrying the failing event and partial metrics.
        """
        start = time.perf_counter()
        try:
            for e in events:
                for a in self.process_event(e):
                    if sink is not None:
                        try:
                            sink(a)
                        except Exception as exc:
                            self._add_process_time(time.perf_counter() - start)
                            start = None
                            raise SinkError(f"sink rejected alert for event {e.seq}: {exc}", e.seq,
                                            self.collect_metrics()) from exc
        finally:
            if start is not None:
                self._add_process_time(time.perf_counter() - start)
        return self.collect_metrics()

    def run_pipeline(
        self, events: Iterable[Event], sink: AlertSink | None = None, capacity: int = 1024
    ) -> EngineMetrics:
        """Like :meth:`run_stream`, but the calling thread produces events into a
        bounded queue drained by one consumer thread; a full queue blocks the producer."""
        q: queue.Queue = queue.Queue(maxsize=capacity)
        done = object()
        failure: list[BaseException] = []

        def consume():
            while True:
                item = q.get()
                if item is done:
                    return
                if failure:
                    continue  # drain so the producer never blocks on a dead consumer
                try:
                    self.run_stream((item,), sink)
                except BaseException as exc:
                    failure.append(exc)

        worker = threading.Thread(target=consume, name="cep-consumer", daemon=True)
        worker.start()
        try:
            for e in events:
                q.put(e)
                if failure:
                    break
        finally:
            q.put(done)
            worker.join()
        if failure:
            raise failure[0]
        return self.collect_metrics()

    def _add_process_time(self, dt: float):
        with self._lock:
            self._process_duration += dt

    def collect_metrics(self) -> EngineMetrics:
        with self._lock:
            return EngineMetrics(
                self._events, self._alerts, dict(self._matches), self._deploy_duration, self._process_duration
            )


def deploy_rules(engine: CepEngine, rs: RuleSet | Iterable[Rule]) -> list[DeployedRule]:
    return engine.deploy_rules(rs)


def process_event(engine: CepEngine, e: Event) -> list[Alert]:
    return engine.process_event(e)


def run_stream(engine: CepEngine, events: Iterable[Event], sink: AlertSink | None = None) -> EngineMetrics:
    return engine.run_stream(events, sink)


def collect_metrics(engine: CepEngine) -> EngineMetrics:
    return engine.collect_metrics()


# ---------------------------------------------------------------------------
# Sinks


class JsonlSink:
    """Appends one JSON alert object per line."""

    def __init__(self, path: str | PathLike):
        self._fh = open(path, "w", encoding="utf-8")

    def __call__(self, alert: Alert) -> None:
        self._fh.write(alert.to_line() + "\n")

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class WebhookSink:
    """POSTs each alert as JSON; anything but a 2xx response is a failure."""

    def __init__(self, url: str, timeout: float = 10.0):
        self.url = url
        self.timeout = timeout

    def __call__(self, alert: Alert) -> None:
        req = urllib.request.Request(
            self.url,
            data=alert.to_line().encode("utf-8"),
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                status = resp.status
        except urllib.error.HTTPError as exc:
            status = exc.code
        if not 200 <= status < 300:
            raise RuntimeError(f"webhook {self.url} answered HTTP {status}")


def write_metrics_csv(m: EngineMetrics, path: str | PathLike, rule_names: Iterable[str] | None = None) -> None:
    names = list(rule_names if rule_names is not None else m.per_rule_match_count)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["events_processed", "alerts_emitted", "deploy_seconds", "process_seconds", *names])
        w.writerow(
            [
                m.events_processed,
                m.alerts_emitted,
                f"{m.deploy_duration:.6f}",
                f"{m.process_duration:.6f}",
                *(m.per_rule_match_count.get(n, 0) for n in names),
            ]
        )
