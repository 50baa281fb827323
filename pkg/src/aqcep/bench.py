"""Benchmark scenarios over the engine, the triple store and the query evaluator.

Each repetition rebuilds engine state from scratch. Reports give the
median, min and max of the timed repetitions; warmup runs are discarded.
"""

from __future__ import annotations

import csv
import gc
import io
import itertools
import os
import platform
import statistics
import threading
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from importlib import resources
from os import PathLike
from pathlib import Path
from typing import TypeVar

from aqcep.cep import CepEngine
from aqcep.errors import BenchSpecError
from aqcep.ingest import Event, load_events
from aqcep.query import (
    QueryAst,
    bundled_queries,
    eval_static,
    eval_stream_batched,
    load_query,
)
from aqcep.rdf import TripleChunk, chunk_graph, chunk_label, merge_chunks
from aqcep.rules import RuleSet, bundled_rules, load_rules
from aqcep.synthetic import synthetic_events

T = TypeVar("T")

SCHEMA_TAG = "aqcep-bench/1"
SCENARIOS = ("event_scaling", "rule_deploy_scaling", "chunk_queries", "static_vs_stream", "chunk_event_processing")
COLUMNS = ("scenario", "configuration", "metric", "repetitions", "median", "min", "max", "units", "unreliable")

DEFAULT_EVENT_COUNTS = {
    "event_scaling": (5000, 10000, 15000),
    "rule_deploy_scaling": (1000, 2000, 3000, 4000, 5000, 6000, 7000, 8000),
}
# Chunk E at 25000 continues the A-D progression.
DEFAULT_CHUNK_SIZES = (5000, 10000, 15000, 20000, 25000)

# The default chunk groupings: every single chunk plus five pairs, triples and quadruples.
REFERENCE_COMBINATIONS = (
    ("A",), ("B",), ("C",), ("D",), ("E",),
    ("A", "B"), ("A", "C"), ("A", "D"), ("A", "E"), ("B", "C"),
    ("A", "B", "C"), ("A", "B", "D"), ("A", "B", "E"), ("A", "C", "D"), ("A", "C", "E"),
    ("A", "B", "C", "D"), ("A", "B", "C", "E"), ("A", "B", "D", "E"), ("A", "C", "D", "E"), ("B", "C", "D", "E"),
)


@dataclass(frozen=True)
class BenchSpec:
    scenario: str
    event_counts: tuple[int, ...] = ()
    rules: str | None = None
    queries: tuple[str, ...] = ()
    chunk_sizes: tuple[int, ...] = DEFAULT_CHUNK_SIZES
    all_combinations: bool = False
    batch_size: int | None = None
    repetitions: int = 5
    warmup: int = 1
    data: str | None = None
    seed: int = 7

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise BenchSpecError(f"unknown scenario {self.scenario!r}; expected one of {', '.join(SCENARIOS)}")
        if self.repetitions < 3:
            raise BenchSpecError(f"repetitions must be >= 3, got {self.repetitions}")
        if self.warmup < 1:
            raise BenchSpecError(f"warmup must be >= 1, got {self.warmup}")
        if any(n <= 0 for n in self.event_counts) or any(n <= 0 for n in self.chunk_sizes):
            raise BenchSpecError("event counts and chunk sizes must be positive")
        if self.batch_size is not None and self.batch_size <= 0:
            raise BenchSpecError("batch_size must be positive")

    @property
    def counts(self) -> tuple[int, ...]:
        return self.event_counts or DEFAULT_EVENT_COUNTS.get(self.scenario, ())


@dataclass(frozen=True)
class BenchRow:
    scenario: str
    configuration: str
    metric: str
    repetitions: int
    median: float
    min: float
    max: float
    units: str = "s"
    unreliable: bool = False


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)
    environment: dict[str, str] = field(default_factory=dict)

    def find(self, configuration: str, metric: str | None = None) -> BenchRow:
        for r in self.rows:
            if r.configuration == configuration and (metric is None or r.metric == metric):
                return r
        raise KeyError(configuration)


def environment_fingerprint() -> dict[str, str]:
    cpu = platform.processor()
    try:
        for line in Path("/proc/cpuinfo").read_text().splitlines():
            if line.startswith("model name"):
                cpu = line.split(":", 1)[1].strip()
                break
    except OSError:
        pass
    return {
        "cpu": cpu or "unknown",
        "cores": str(os.cpu_count() or 0),
        "os": platform.platform(),
        "build": f"{platform.python_implementation()} {platform.python_version()}",
    }


# ---------------------------------------------------------------------------
# Spec files


def _split_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def parse_bench_spec(text: str, base_dir: str | PathLike | None = None) -> tuple[list[BenchSpec], bool]:
    """Parse ``key = value`` lines into one spec per listed scenario.

    Returns the specs and whether the file asked for parallel execution.
    Relative file paths resolve against ``base_dir``.
    """
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise BenchSpecError(f"line {lineno}: expected key = value")
        values[key.strip().lower()] = value.strip()

    def path(p: str) -> str:
        return str(Path(base_dir, p)) if base_dir and not os.path.isabs(p) else p

    known = {"scenario", "event_counts", "rules", "queries", "chunk_sizes", "combinations", "batch_size",
             "repetitions", "warmup", "data", "seed", "parallel"}
    unknown = sorted(set(values) - known)
    if unknown:
        raise BenchSpecError(f"unknown keys: {', '.join(unknown)}")
    if "scenario" not in values:
        raise BenchSpecError("spec needs a scenario")
    try:
        common = dict(
            event_counts=tuple(int(v) for v in _split_list(values.get("event_counts", ""))),
            rules=path(values["rules"]) if "rules" in values else None,
            queries=tuple(path(q) for q in _split_list(values.get("queries", ""))),
            chunk_sizes=tuple(int(v) for v in _split_list(values["chunk_sizes"])) if "chunk_sizes" in values
            else DEFAULT_CHUNK_SIZES,
            all_combinations=values.get("combinations", "reference").lower() == "all",
            batch_size=int(values["batch_size"]) if "batch_size" in values else None,
            repetitions=int(values.get("repetitions", 5)),
            warmup=int(values.get("warmup", 1)),
            data=path(values["data"]) if "data" in values else None,
            seed=int(values.get("seed", 7)),
        )
    except ValueError as exc:
        raise BenchSpecError(f"bad value in spec: {exc}") from None
    specs = [BenchSpec(scenario=s, **common) for s in _split_list(values["scenario"])]
    return specs, values.get("parallel", "false").lower() in ("1", "true", "yes")


def load_bench_spec(path: str | PathLike) -> tuple[list[BenchSpec], bool]:
    return parse_bench_spec(Path(path).read_text(encoding="utf-8"), Path(path).parent)


# ---------------------------------------------------------------------------
# Running


def _timer_resolution() -> float:
    return time.get_clock_info("perf_counter").resolution


_gc_lock = threading.Lock()
_gc_holders = 0


@contextmanager
def _gc_paused():
    """Keep the cyclic collector out of timed regions, as timeit does.

    Counted so that scenarios running on parallel threads nest correctly.
    """
    global _gc_holders
    with _gc_lock:
        _gc_holders += 1
        gc.disable()
    try:
        yield
    finally:
        with _gc_lock:
            _gc_holders -= 1
            if _gc_holders == 0:
                gc.enable()


def _measure_many(spec: BenchSpec, runs: Sequence[Callable[[], T]]) -> list[list[T]]:
    """Warm each run up, then time the repetitions round-robin across runs.

    Interleaving spreads slow stretches of a shared host over every
    configuration instead of letting one configuration absorb them.
    """
    for run in runs:
        for _ in range(spec.warmup):
            with _gc_paused():
                run()
    out: list[list[T]] = [[] for _ in runs]
    for _ in range(spec.repetitions):
        for samples, run in zip(out, runs):
            with _gc_paused():
                samples.append(run())
    return out


def _row(spec: BenchSpec, configuration: str, metric: str, samples: Sequence[float]) -> BenchRow:
    med = statistics.median(samples)
    return BenchRow(
        spec.scenario, configuration, metric, len(samples), med, min(samples), max(samples),
        "s", med < 10 * _timer_resolution(),
    )


def _resolve_rules(spec: BenchSpec) -> RuleSet:
    if spec.rules is None:
        return bundled_rules("standard.rules")
    if not Path(spec.rules).exists():
        raise BenchSpecError(f"rule file {spec.rules} not found")
    return load_rules(spec.rules)


def _resolve_queries(spec: BenchSpec) -> dict[str, QueryAst]:
    if not spec.queries:
        return bundled_queries()
    out = {}
    for q in spec.queries:
        if not Path(q).exists():
            raise BenchSpecError(f"query file {q} not found")
        out[Path(q).stem] = load_query(q)
    return out


def _resolve_events(spec: BenchSpec, needed: int) -> list[Event]:
    if spec.data is None:
        return synthetic_events(needed, spec.seed)
    if not Path(spec.data).exists():
        raise BenchSpecError(f"data file {spec.data} not found")
    events = list(load_events(spec.data))
    if len(events) < needed:
        raise BenchSpecError(f"scenario needs {needed} events but {spec.data} holds {len(events)}")
    return events[:needed]


def _run_events(rules: RuleSet, events: Sequence[Event]) -> CepEngine:
    engine = CepEngine()
    engine.deploy_rules(rules)
    engine.run_stream(events)
    return engine


def _engine_rows(spec: BenchSpec, configs: Sequence[tuple[RuleSet, Sequence[Event], str]]) -> list[BenchRow]:
    """Deploy and process spans, measured together but reported separately."""
    runs = [lambda r=rules, e=events: _run_events(r, e).collect_metrics() for rules, events, _ in configs]
    rows = []
    for (_, _, configuration), spans in zip(configs, _measure_many(spec, runs)):
        deploy = [m.deploy_duration for m in spans]
        process = [m.process_duration for m in spans]
        total = [d + p for d, p in zip(deploy, process)]
        rows += [
            _row(spec, configuration, "deploy_seconds", deploy),
            _row(spec, configuration, "process_seconds", process),
            _row(spec, configuration, "deploy_process_seconds", total),
        ]
    return rows


def _event_scaling(spec: BenchSpec) -> list[BenchRow]:
    rules = _resolve_rules(spec)
    events = _resolve_events(spec, max(spec.counts))
    configs = [(RuleSet((rule,)), events[:n], f"rule={rule.name};events={n}") for rule in rules for n in spec.counts]
    return _engine_rows(spec, configs)


def _rule_deploy_scaling(spec: BenchSpec) -> list[BenchRow]:
    rules = _resolve_rules(spec)
    events = _resolve_events(spec, max(spec.counts))
    return _engine_rows(spec, [(rules, events[:n], f"events={n}") for n in spec.counts])


def _chunks(spec: BenchSpec) -> list[TripleChunk]:
    events = _resolve_events(spec, sum(spec.chunk_sizes))
    return chunk_graph(events, sizes=spec.chunk_sizes)


def chunk_combinations(labels: Sequence[str], all_combinations: bool = False) -> list[tuple[str, ...]]:
    if all_combinations:
        return [c for k in range(1, len(labels) + 1) for c in itertools.combinations(labels, k)]
    present = set(labels)
    return [c for c in REFERENCE_COMBINATIONS if set(c) <= present]


def _chunk_queries(spec: BenchSpec, chunks: list[TripleChunk] | None = None) -> list[BenchRow]:
    queries = _resolve_queries(spec)
    chunks = chunks or _chunks(spec)
    by_label = {c.label: c for c in chunks}
    rows = []
    for combo in chunk_combinations([c.label for c in chunks], spec.all_combinations):
        graph = merge_chunks([by_label[k] for k in combo]).graph
        graph.index()  # build the lazy index outside the timed region
        runs = [lambda q=q: eval_static(graph, q).eval_duration for q in queries.values()]
        for name, samples in zip(queries, _measure_many(spec, runs)):
            rows.append(_row(spec, f"query={name};chunks={'&'.join(combo)}", "eval_seconds", samples))
    return rows


def reference_timings() -> list[dict[str, str]]:
    text = resources.files("aqcep.data").joinpath("reference_timings.csv").read_text(encoding="utf-8")
    return list(csv.DictReader(io.StringIO(text)))


def _reference_static_stream_ratio(query: str) -> float | None:
    vals = {r["configuration"]: float(r["seconds"]) for r in reference_timings() if r["scenario"] == "static_vs_stream"}
    static, stream = vals.get(f"query={query};mode=static"), vals.get(f"query={query};mode=stream")
    return static / stream if static and stream else None


def _static_vs_stream(spec: BenchSpec, chunks: list[TripleChunk] | None = None) -> list[BenchRow]:
    queries = _resolve_queries(spec)
    chunks = chunks or _chunks(spec)
    merged = merge_chunks(chunks).graph
    merged.index()
    rows = []
    for name, q in queries.items():
        static, stream = _measure_many(spec, [
            lambda: eval_static(merged, q).eval_duration,
            lambda: eval_stream_batched(chunks, q, spec.batch_size).eval_duration,
        ])
        rows.append(_row(spec, f"query={name};mode=static", "eval_seconds", static))
        rows.append(_row(spec, f"query={name};mode=stream", "eval_seconds", stream))
        ratio = statistics.median(static) / statistics.median(stream)
        rows.append(BenchRow(spec.scenario, f"query={name}", "static_stream_ratio", len(static), ratio, ratio, ratio, "ratio"))
        ref = _reference_static_stream_ratio(name)
        if ref is not None:
            rows.append(BenchRow(spec.scenario, f"query={name}", "reference_static_stream_ratio", 1, ref, ref, ref, "ratio"))
    return rows


def _chunk_event_processing(spec: BenchSpec) -> list[BenchRow]:
    rules = _resolve_rules(spec)
    events = _resolve_events(spec, sum(spec.chunk_sizes))
    configs = []
    start = 0
    for k, n in enumerate(spec.chunk_sizes):
        configs.append((rules, events[start : start + n], f"chunk={chunk_label(k)};events={n}"))
        start += n
    return _engine_rows(spec, configs)


_RUNNERS = {
    "event_scaling": _event_scaling,
    "rule_deploy_scaling": _rule_deploy_scaling,
    "chunk_queries": _chunk_queries,
    "static_vs_stream": _static_vs_stream,
    "chunk_event_processing": _chunk_event_processing,
}


def run_bench_suite(spec: BenchSpec, chunks: list[TripleChunk] | None = None) -> BenchReport:
    """Run one scenario. ``chunks`` lets callers reuse prebuilt chunks for the query scenarios."""
    runner = _RUNNERS[spec.scenario]
    if chunks is not None and spec.scenario in ("chunk_queries", "static_vs_stream"):
        rows = runner(spec, chunks)
    else:
        rows = runner(spec)
    return BenchReport(rows, environment_fingerprint())


def run_bench_specs(specs: Sequence[BenchSpec], parallel: bool = False) -> BenchReport:
    """Run several scenarios into one report; sequential unless ``parallel``."""
    if parallel:
        with ThreadPoolExecutor() as pool:
            reports = list(pool.map(run_bench_suite, specs))
    else:
        reports = [run_bench_suite(s) for s in specs]
    return BenchReport([r for rep in reports for r in rep.rows], environment_fingerprint())


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def format_report(r: BenchReport) -> str:
    buf = io.StringIO()
    buf.write(f"# schema: {SCHEMA_TAG}\n")
    for key in sorted(r.environment):
        buf.write(f"# {key}: {r.environment[key]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in r.rows:
        w.writerow([row.scenario, row.configuration, row.metric, row.repetitions, _fmt(row.median),
                    _fmt(row.min), _fmt(row.max), row.units, int(row.unreliable)])
    return buf.getvalue()


def emit_report(r: BenchReport, path: str | PathLike) -> None:
    if not r.rows:
        raise BenchSpecError("refusing to write an empty report")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_report(r))


def read_report(path: str | PathLike) -> BenchReport:
    env, lines = {}, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            env[key] = value
        else:
            lines.append(line)
    rows = []
    for rec in csv.DictReader(lines):
        rows.append(BenchRow(rec["scenario"], rec["configuration"], rec["metric"], int(rec["repetitions"]),
                             float(rec["median"]), float(rec["min"]), float(rec["max"]), rec["units"],
                             rec["unreliable"] == "1"))
    env.pop("schema", None)
    return BenchReport(rows, env)


__all__ = [
    "BenchReport",
    "BenchRow",
    "BenchSpec",
    "chunk_combinations",
    "emit_report",
    "load_bench_spec",
    "parse_bench_spec",
    "run_bench_specs",
    "run_bench_suite",
]
