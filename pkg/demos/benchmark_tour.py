"""
A small benchmark run
=====================

Each scenario rebuilds its state per repetition and reports median, min and max.
"""

import tempfile
from pathlib import Path

from aqcep.bench import BenchSpec, emit_report, format_report, run_bench_specs

specs = [
    BenchSpec("rule_deploy_scaling", event_counts=(1000, 2000, 4000), repetitions=3),
    BenchSpec("chunk_queries", chunk_sizes=(500, 1000), repetitions=3),
    BenchSpec("static_vs_stream", chunk_sizes=(500, 1000), batch_size=250, repetitions=3),
]
report = run_bench_specs(specs)
print(format_report(report))

# Processing time should grow with the stream length.
for n in (1000, 2000, 4000):
    row = report.find(f"events={n}", "deploy_process_seconds")
    print(f"{n:5d} events: {row.median * 1e3:6.2f} ms")

out = Path(tempfile.mkdtemp()) / "bench.csv"
emit_report(report, out)
print("written to", out)
