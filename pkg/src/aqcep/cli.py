"""Command-line entry point: ``aqcep <group> <command> [options]``.

Exit status is 0 on success, 1 when the library rejects the input and 2 on
usage errors (argparse's own convention).
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from collections import deque
from collections.abc import Sequence
from pathlib import Path

from aqcep import __version__
from aqcep.errors import AqcepError

log = logging.getLogger("aqcep")


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _positive(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if n <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {n}")
    return n


# ---------------------------------------------------------------------------
# Handlers


def cmd_ingest(args) -> int:
    from aqcep.ingest import (
        impute_median,
        parse_dataset,
        to_event_stream,
        write_events_jsonl,
    )

    d = parse_dataset(args.input)
    events = to_event_stream(impute_median(d), args.city)
    n = write_events_jsonl(events, args.out)
    print(f"{n} events written to {args.out} ({len(d.skipped)} rows skipped)")
    return 0


def cmd_aqi_compute(args) -> int:
    from aqcep.aqi import (
        BreakpointTable,
        compute_aqi,
        default_table,
        default_window_specs,
        windowed_average,
    )
    from aqcep.ingest import iter_events_jsonl
    from aqcep.pollutants import POLLUTANTS

    table = BreakpointTable.from_csv(args.breakpoints) if args.breakpoints else default_table()
    specs = default_window_specs(daily=args.daily)
    windows: dict[tuple, deque] = {}
    out = csv.writer(sys.stdout, delimiter="\t", lineterminator="\n")
    out.writerow(["seq", "station", "timestamp", "aqi", "category", "dominant"])
    for e in iter_events_jsonl(args.events):
        values = {}
        for p in POLLUTANTS:
            buf = windows.setdefault((e.station, p), deque(maxlen=specs[p].length))
            buf.append(e.readings.get(p))
            values[p] = windowed_average(buf, specs[p])
        r = compute_aqi(table, values)
        if r is None:
            out.writerow([e.seq, e.station, e.timestamp.isoformat(), "NA", "NA", "NA"])
        else:
            out.writerow([e.seq, e.station, e.timestamp.isoformat(), f"{r.rounded:.2f}", r.category.label,
                          r.dominant.value])
    return 0


def cmd_rules_mine(args) -> int:
    import numpy as np

    from aqcep.ingest import impute_median, labeled_rows, parse_dataset
    from aqcep.mining import MiningParams, holdout_split, mine_rules, rule_accuracy
    from aqcep.rules import print_rules

    features, labels = labeled_rows(impute_median(parse_dataset(args.data)))
    params = MiningParams(args.max_depth, args.min_leaf, args.holdout, args.seed)
    _, rules = mine_rules(features, labels, params)
    Path(args.out).write_text(print_rules(rules), encoding="utf-8")
    _, hold = holdout_split(len(labels), params.holdout_fraction, params.seed)
    if len(hold):
        acc = rule_accuracy(rules, np.asarray(features)[hold], [labels[i] for i in hold])
        print(f"{len(rules)} rules written to {args.out}; holdout accuracy {acc:.4f}")
    else:
        print(f"{len(rules)} rules written to {args.out}")
    return 0


def cmd_rules_validate(args) -> int:
    from aqcep.aqi import BreakpointTable, default_table
    from aqcep.rules import load_rules, validate_ruleset

    table = BreakpointTable.from_csv(args.breakpoints) if args.breakpoints else default_table()
    diags = validate_ruleset(load_rules(args.rules), table)
    for d in diags:
        print(d)
    errors = sum(d.level == "error" for d in diags)
    print(f"{len(diags)} diagnostics, {errors} errors")
    return 1 if errors else 0


def cmd_rdf_convert(args) -> int:
    from aqcep.ingest import read_events_jsonl
    from aqcep.rdf import chunk_graph, write_chunk_dir

    events = read_events_jsonl(args.events)
    if args.sizes:
        chunks = chunk_graph(events, sizes=args.sizes)
    else:
        chunks = chunk_graph(events, chunk_size=args.chunk_size or max(len(events), 1))
    write_chunk_dir(chunks, args.out)
    for c in chunks:
        print(f"chunk {c.label}: {c.event_count} events, {len(c.graph)} triples")
    return 0


def cmd_rdf_kg(args) -> int:
    from aqcep.rdf import KnowledgeGraph, write_ntriples

    write_ntriples(KnowledgeGraph.build_default().graph, args.out)
    return 0


def cmd_query_run(args) -> int:
    from aqcep.query import eval_static, eval_stream_batched, load_query
    from aqcep.rdf import TripleChunk, merge_chunks, read_chunk_dir, read_ntriples

    q = load_query(args.query)
    labels = [v.strip() for v in args.chunks.split(",")] if args.chunks else None
    path = Path(args.graph)
    if path.is_dir():
        chunks = read_chunk_dir(path, labels)
    else:
        if labels:
            raise SystemExit("--chunks needs --graph to be a chunk directory")
        g = read_ntriples(path)
        chunks = [TripleChunk("A", g, len(g.subjects()))]
    if args.stream:
        rs = eval_stream_batched(chunks, q, args.batch_size)
        mode = "stream"
    else:
        rs = eval_static(merge_chunks(chunks).graph, q)
        mode = "static"
    sys.stdout.write(rs.to_tsv())
    if args.timing:
        with open(args.timing, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["query", "chunks", "mode", "rows", "eval_seconds", "batches"])
            w.writerow([Path(args.query).stem, "&".join(c.label for c in chunks), mode, len(rs),
                        f"{rs.eval_duration:.9f}", len(rs.batch_durations) or 1])
    return 0


def cmd_cep_run(args) -> int:
    from aqcep.cep import CepEngine, JsonlSink, WebhookSink, write_metrics_csv
    from aqcep.ingest import iter_events_jsonl
    from aqcep.rules import load_rules

    rules = load_rules(args.rules)
    engine = CepEngine(windowed=args.windowed)
    engine.deploy_rules(rules)
    names = [r.name for r in rules]
    if args.webhook:
        sink = WebhookSink(args.webhook)
        m = engine.run_pipeline(iter_events_jsonl(args.events), sink)
    elif args.alerts:
        with JsonlSink(args.alerts) as sink:
            m = engine.run_pipeline(iter_events_jsonl(args.events), sink)
    else:
        m = engine.run_pipeline(iter_events_jsonl(args.events), None)
    write_metrics_csv(m, args.metrics, names)
    print(f"{m.events_processed} events, {m.alerts_emitted} alerts")
    return 0


def cmd_bench_run(args) -> int:
    from dataclasses import replace

    from aqcep.bench import emit_report, load_bench_spec, run_bench_specs

    specs, parallel = load_bench_spec(args.spec)
    if args.all_combinations:
        specs = [replace(s, all_combinations=True) for s in specs]
    report = run_bench_specs(specs, parallel or args.parallel)
    emit_report(report, args.out)
    print(f"{len(report.rows)} rows written to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aqcep", description="Air-quality rules, RDF chunks and CEP benchmarks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    groups = parser.add_subparsers(dest="group", metavar="<group>", required=True)

    p = groups.add_parser("ingest", help="CSV dataset to imputed JSON Lines event stream")
    p.add_argument("--input", required=True, help="CPCB-style CSV file")
    p.add_argument("--out", required=True, help="JSON Lines output")
    p.add_argument("--city", help="keep only this station")
    p.set_defaults(func=cmd_ingest)

    aqi = groups.add_parser("aqi", help="AQI computation").add_subparsers(dest="command", metavar="<command>",
                                                                          required=True)
    p = aqi.add_parser("compute", help="AQI and category per event, tab-separated on stdout")
    p.add_argument("--events", required=True)
    p.add_argument("--breakpoints", help="breakpoint CSV (default: bundled table)")
    p.add_argument("--daily", action="store_true", help="events are daily averages; no further windowing")
    p.set_defaults(func=cmd_aqi_compute)

    rules = groups.add_parser("rules", help="rule mining and validation").add_subparsers(
        dest="command", metavar="<command>", required=True)
    p = rules.add_parser("mine", help="mine classification rules from a labelled CSV dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-depth", type=int, default=6)
    p.add_argument("--min-leaf", type=int, default=20)
    p.add_argument("--holdout", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_rules_mine)
    p = rules.add_parser("validate", help="report unsatisfiable, mismatched and conflicting rules")
    p.add_argument("--rules", required=True)
    p.add_argument("--breakpoints")
    p.set_defaults(func=cmd_rules_validate)

    rdf = groups.add_parser("rdf", help="RDF conversion").add_subparsers(dest="command", metavar="<command>",
                                                                         required=True)
    p = rdf.add_parser("convert", help="events to labelled N-Triples chunks")
    p.add_argument("--events", required=True)
    p.add_argument("--out", required=True, help="output directory")
    size = p.add_mutually_exclusive_group()
    size.add_argument("--chunk-size", type=_positive)
    size.add_argument("--sizes", type=_ints, help="comma-separated event counts per chunk")
    p.set_defaults(func=cmd_rdf_convert)
    p = rdf.add_parser("kg", help="write the default knowledge graph")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rdf_kg)

    query = groups.add_parser("query", help="query evaluation").add_subparsers(dest="command", metavar="<command>",
                                                                               required=True)
    p = query.add_parser("run", help="evaluate a query; bindings as TSV on stdout")
    p.add_argument("--graph", required=True, help="N-Triples file or chunk directory")
    p.add_argument("--chunks", help="comma-separated chunk labels, e.g. A,B")
    p.add_argument("--query", required=True)
    p.add_argument("--stream", action="store_true", help="batched stream evaluation")
    p.add_argument("--batch-size", type=_positive)
    p.add_argument("--timing", help="write evaluation timing CSV here")
    p.set_defaults(func=cmd_query_run)

    cep = groups.add_parser("cep", help="complex event processing").add_subparsers(
        dest="command", metavar="<command>", required=True)
    p = cep.add_parser("run", help="deploy rules and process an event stream")
    p.add_argument("--rules", required=True)
    p.add_argument("--events", required=True)
    sink = p.add_mutually_exclusive_group()
    sink.add_argument("--alerts", help="JSON Lines alert file")
    sink.add_argument("--webhook", help="URL receiving one POST per alert")
    p.add_argument("--windowed", action="store_true", help="match rules against window averages")
    p.add_argument("--metrics", required=True, help="metrics CSV output")
    p.set_defaults(func=cmd_cep_run)

    bench = groups.add_parser("bench", help="benchmarks").add_subparsers(dest="command", metavar="<command>",
                                                                         required=True)
    p = bench.add_parser("run", help="run the scenarios of a spec file")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--all-combinations", action="store_true", help="every chunk combination, not the default subset")
    p.add_argument("--parallel", action="store_true", help="run scenarios concurrently")
    p.set_defaults(func=cmd_bench_run)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.group == "query" and args.batch_size and not args.stream:
        parser.error("--batch-size needs --stream")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except BrokenPipeError:
        # downstream closed early (e.g. piped into head); not an error
        sys.stderr.close()
        return 0
    except (AqcepError, OSError, ValueError) as exc:
        print(f"aqcep: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(f"aqcep: error: {exc.code}", file=sys.stderr)
            return 2
        raise


if __name__ == "__main__":
    sys.exit(main())
