"""In-memory triple store: event triples, N-Triples I/O, chunking and the advisory graph."""

from __future__ import annotations

import itertools
import logging
import math
import re
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from decimal import Decimal
from importlib import resources
from os import PathLike
from pathlib import Path

from aqcep.aqi import AqiCategory
from aqcep.errors import AdvisoryLookupError, ChunkError, NTriplesError
from aqcep.ingest import Event
from aqcep.pollutants import POLLUTANTS

log = logging.getLogger(__name__)

EX = "http://example.org/"
AQ = "http://example.org/aq#"
XSD = "http://www.w3.org/2001/XMLSchema#"
PREFIXES = {"ex": EX, "aq": AQ, "xsd": XSD}

DECIMAL = XSD + "decimal"
DATETIME = XSD + "dateTime"
STRING = XSD + "string"
DATATYPES = (DECIMAL, DATETIME, STRING)
_BAD_IRI_CHAR = re.compile(r"[\s<>]")


@dataclass(frozen=True, slots=True)
class Iri:
    value: str

    def __post_init__(self):
        if not self.value or _BAD_IRI_CHAR.search(self.value):
            raise ValueError(f"invalid IRI {self.value!r}")

    def n3(self) -> str:
        return f"<{self.value}>"

    def __str__(self) -> str:
        return self.n3()


@dataclass(frozen=True, slots=True)
class Literal:
    lexical: str
    datatype: str = STRING
    number: float | None = field(default=None, compare=False, hash=False, repr=False)

    def __post_init__(self):
        if self.datatype not in DATATYPES:
            raise ValueError(f"unsupported datatype {self.datatype}")
        if self.datatype == DECIMAL:
            try:
                x = float(self.lexical)
            except ValueError:
                raise ValueError(f"invalid decimal {self.lexical!r}") from None
            if not math.isfinite(x):
                raise ValueError(f"non-finite decimal {self.lexical!r}")
            object.__setattr__(self, "number", x)

    @classmethod
    def decimal(cls, x: float) -> Literal:
        return cls(format_decimal(x), DECIMAL)

    def n3(self) -> str:
        return f'"{_escape(self.lexical)}"^^<{self.datatype}>'

    def __str__(self) -> str:
        return self.n3()


Term = Iri | Literal


def format_decimal(x: float) -> str:
    """Shortest round-tripping decimal text for ``x`` without an exponent."""
    text = repr(float(x))
    if "e" in text or "n" in text:
        text = format(Decimal(text), "f")
    return text if "." in text else text + ".0"


class Triple(tuple):
    __slots__ = ()

    def __new__(cls, subject: Iri, predicate: Iri, obj: Term):
        return tuple.__new__(cls, (subject, predicate, obj))

    subject = property(lambda self: self[0])
    predicate = property(lambda self: self[1])
    object = property(lambda self: self[2])

    def n3(self) -> str:
        return f"{self[0].n3()} {self[1].n3()} {self[2].n3()} ."


_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r", "\t": "\\t"}
_UNESCAPES = {"\\": "\\", '"': '"', "n": "\n", "r": "\r", "t": "\t"}


_NEEDS_ESCAPE = re.compile(r'[\\"\x00-\x1f\x7f-\x9f\u2028\u2029]')


def _escape(s: str) -> str:
    if not _NEEDS_ESCAPE.search(s):
        return s
    out = []
    for ch in s:
        if ch in _ESCAPES:
            out.append(_ESCAPES[ch])
        elif ord(ch) < 0x20 or 0x7F <= ord(ch) <= 0x9F or ch in "\u2028\u2029":
            # keep every serialized triple on a single physical line
            out.append(f"\\u{ord(ch):04X}")
        else:
            out.append(ch)
    return "".join(out)


def _unescape(s: str) -> str:
    def sub(m: re.Match) -> str:
        if m.group(1):
            return chr(int(m.group(1)[1:], 16))
        return _UNESCAPES[m.group(2)]

    return re.sub(r"\\(u[0-9A-Fa-f]{4}|U[0-9A-Fa-f]{8})|\\(.)", sub, s)


class Graph:
    """A frozen set of triples with a lazily built predicate -> subject -> objects index."""

    __slots__ = ("_triples", "_index", "_by_subject")

    def __init__(self, triples: Iterable[Triple] = ()):
        if not isinstance(triples, (frozenset, set)):
            triples = [t if type(t) is Triple else Triple(*t) for t in triples]
        elif not all(type(t) is Triple for t in triples):
            triples = [Triple(*t) for t in triples]
        self._triples = frozenset(triples)
        self._index = None
        self._by_subject = None

    def __len__(self) -> int:
        return len(self._triples)

    def __iter__(self) -> Iterator[Triple]:
        return iter(self._triples)

    def __contains__(self, t) -> bool:
        return t in self._triples

    def __eq__(self, other) -> bool:
        return isinstance(other, Graph) and self._triples == other._triples

    def __hash__(self) -> int:
        return hash(self._triples)

    def __repr__(self) -> str:
        return f"<Graph with {len(self)} triples>"

    @property
    def triples(self) -> frozenset[Triple]:
        return self._triples

    def union(self, *others: Graph) -> Graph:
        return Graph(self._triples.union(*(o._triples for o in others)))

    def index(self) -> dict[Iri, dict[Iri, list[Term]]]:
        if self._index is None:
            idx: dict[Iri, dict[Iri, list[Term]]] = {}
            for s, p, o in self._triples:
                idx.setdefault(p, {}).setdefault(s, []).append(o)
            self._index = idx
        return self._index

    def predicate_count(self, predicate: Iri) -> int:
        by_s = self.index().get(predicate)
        return sum(len(v) for v in by_s.values()) if by_s else 0

    def subjects(self) -> dict[Iri, list[Triple]]:
        if self._by_subject is None:
            by_s: dict[Iri, list[Triple]] = {}
            for t in self._triples:
                by_s.setdefault(t[0], []).append(t)
            self._by_subject = by_s
        return self._by_subject

    def objects(self, subject: Iri, predicate: Iri) -> list[Term]:
        return self.index().get(predicate, {}).get(subject, [])


class GraphBuilder:
    """Accumulates triples, then freezes them into a :class:`Graph`."""

    def __init__(self):
        self._triples: set[Triple] = set()

    def add(self, s: Iri, p: Iri, o: Term) -> GraphBuilder:
        self._triples.add(Triple(s, p, o))
        return self

    def extend(self, triples: Iterable[Triple]) -> GraphBuilder:
        self._triples.update(triples)
        return self

    def freeze(self) -> Graph:
        return Graph(self._triples)


# ---------------------------------------------------------------------------
# Events as triples

PREDICATES = {p: Iri(AQ + p.predicate_name) for p in POLLUTANTS}
CITY = Iri(AQ + "city")
DATE = Iri(AQ + "date")
ADVISORY = Iri(AQ + "advisory")
LABEL = Iri(AQ + "label")
AQI_MIN = Iri(AQ + "aqiMin")
AQI_MAX = Iri(AQ + "aqiMax")


def event_iri(seq: int) -> Iri:
    return Iri(f"{EX}event/{seq}")


def category_iri(c: AqiCategory) -> Iri:
    return Iri(f"{AQ}category/{c.label}")


def event_to_triples(e: Event) -> list[Triple]:
    s = event_iri(e.seq)
    triples = [Triple(s, PREDICATES[p], Literal.decimal(e.readings[p])) for p in POLLUTANTS]
    triples.append(Triple(s, CITY, Literal(e.station, STRING)))
    triples.append(Triple(s, DATE, Literal(e.timestamp.isoformat(), DATETIME)))
    return triples


def events_to_graph(events: Iterable[Event]) -> Graph:
    return Graph(itertools.chain.from_iterable(event_to_triples(e) for e in events))


# ---------------------------------------------------------------------------
# N-Triples

_IRI = r"<([^<>\s]+)>"
_LINE_RE = re.compile(
    rf'^{_IRI}[ \t]+{_IRI}[ \t]+(?:{_IRI}|"((?:[^"\\]|\\[\\"nrt]|\\u[0-9A-Fa-f]{{4}}|\\U[0-9A-Fa-f]{{8}})*)"(?:\^\^{_IRI})?)[ \t]*\.[ \t]*$'
)


def serialize_ntriples(g: Graph | Iterable[Triple]) -> str:
    lines = sorted(t.n3() for t in g)
    return "".join(line + "\n" for line in lines)


def parse_ntriples(text: str) -> Graph:
    triples = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        stripped = line.strip(" \t\r")
        if not stripped or stripped.startswith("#"):
            continue
        m = _LINE_RE.match(stripped)
        if m is None:
            raise NTriplesError(f"malformed triple: {stripped[:80]!r}", lineno)
        s, p, o_iri, lex, dtype = m.groups()
        try:
            if o_iri is not None:
                obj: Term = Iri(o_iri)
            else:
                obj = Literal(_unescape(lex), dtype or STRING)
            triples.append(Triple(Iri(s), Iri(p), obj))
        except ValueError as exc:
            raise NTriplesError(str(exc), lineno) from None
    return Graph(triples)


def write_ntriples(g: Graph, path: str | PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_ntriples(g))


def read_ntriples(path: str | PathLike) -> Graph:
    with open(path, encoding="utf-8") as fh:
        return parse_ntriples(fh.read())


# ---------------------------------------------------------------------------
# Chunks


@dataclass(frozen=True)
class TripleChunk:
    label: str
    graph: Graph
    event_count: int
    # Event subjects in stream order, used to re-batch a chunk.
    subjects: tuple[Iri, ...] = ()


def chunk_label(k: int) -> str:
    """A, B, ..., Z, AA, AB, ..."""
    label = ""
    k += 1
    while k:
        k, r = divmod(k - 1, 26)
        label = chr(ord("A") + r) + label
    return label


def chunk_graph(
    events: Sequence[Event], sizes: Sequence[int] | None = None, chunk_size: int | None = None
) -> list[TripleChunk]:
    """Split consecutive events into labelled chunks.

    Either ``sizes`` lists each chunk's event count (their sum may not exceed
    the stream length), or ``chunk_size`` tiles the whole stream.
    """
    if (sizes is None) == (chunk_size is None):
        raise ChunkError("give exactly one of sizes or chunk_size")
    if chunk_size is not None:
        if chunk_size <= 0:
            raise ChunkError("chunk size must be positive")
        sizes = [min(chunk_size, len(events) - i) for i in range(0, len(events), chunk_size)]
    if any(n <= 0 for n in sizes):
        raise ChunkError(f"chunk sizes must be positive, got {list(sizes)}")
    if sum(sizes) > len(events):
        raise ChunkError(f"chunk sizes sum to {sum(sizes)} but only {len(events)} events are available")
    chunks = []
    start = 0
    for k, n in enumerate(sizes):
        part = events[start : start + n]
        chunks.append(TripleChunk(chunk_label(k), events_to_graph(part), n, tuple(event_iri(e.seq) for e in part)))
        start += n
    return chunks


def merge_chunks(chunks: Sequence[TripleChunk]) -> TripleChunk:
    """Union of the member graphs, labelled like ``A&B``."""
    if not chunks:
        raise ChunkError("nothing to merge")
    if len(chunks) == 1:
        return chunks[0]
    return TripleChunk(
        "&".join(c.label for c in chunks),
        chunks[0].graph.union(*(c.graph for c in chunks[1:])),
        sum(c.event_count for c in chunks),
        tuple(itertools.chain.from_iterable(c.subjects for c in chunks)),
    )


def _event_order(g: Graph) -> tuple[Iri, ...]:
    """Event subjects ordered by their sequence number when it can be read off the IRI."""
    def key(s: Iri):
        tail = s.value.rsplit("/", 1)[-1]
        return (0, int(tail), "") if s.value.startswith(EX + "event/") and tail.isdigit() else (1, 0, s.value)

    return tuple(sorted(g.subjects(), key=key))


def write_chunk_dir(chunks: Sequence[TripleChunk], directory: str | PathLike) -> list[Path]:
    """One ``chunk_<label>.nt`` file per chunk."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for c in chunks:
        path = out / f"chunk_{c.label}.nt"
        write_ntriples(c.graph, path)
        paths.append(path)
    return paths


def read_chunk_dir(directory: str | PathLike, labels: Sequence[str] | None = None) -> list[TripleChunk]:
    """Chunks written by :func:`write_chunk_dir`, in label order or in the order of ``labels``."""
    base = Path(directory)
    found = {p.stem[len("chunk_"):]: p for p in base.glob("chunk_*.nt")}
    if labels is None:
        labels = sorted(found, key=lambda k: (len(k), k))
    chunks = []
    for label in labels:
        if label not in found:
            raise ChunkError(f"no chunk {label!r} in {base}")
        g = read_ntriples(found[label])
        order = _event_order(g)
        chunks.append(TripleChunk(label, g, len(order), order))
    if not chunks:
        raise ChunkError(f"no chunk files in {base}")
    return chunks


# ---------------------------------------------------------------------------
# Knowledge graph

ADVISORIES = {
    AqiCategory.GOOD: "Minimal impact. Outdoor activity is safe for everyone.",
    AqiCategory.SATISFACTORY: "Minor breathing discomfort possible for sensitive people.",
    AqiCategory.MODERATELY_POLLUTED: (
        "Breathing discomfort for people with lung disease such as asthma, and discomfort "
        "for people with heart disease, children and older adults. Sensitive groups should "
        "reduce prolonged outdoor exertion."
    ),
    AqiCategory.POOR: (
        "Breathing discomfort for most people on prolonged exposure. Limit outdoor exertion "
        "and keep sensitive groups indoors."
    ),
    AqiCategory.VERY_POOR: (
        "Respiratory illness likely on prolonged exposure. Avoid outdoor physical activity; "
        "use respiratory protection outdoors."
    ),
    AqiCategory.SEVERE: (
        "Affects healthy people and seriously impacts those with existing disease. Stay "
        "indoors, keep activity low and follow emergency advisories."
    ),
}


class KnowledgeGraph:
    """Category -> advisory facts plus category metadata."""

    def __init__(self, graph: Graph):
        self.graph = graph

    @classmethod
    def build_default(cls) -> KnowledgeGraph:
        b = GraphBuilder()
        for cat in AqiCategory:
            s = category_iri(cat)
            b.add(s, ADVISORY, Literal(ADVISORIES[cat]))
            b.add(s, LABEL, Literal(cat.label))
            b.add(s, AQI_MIN, Literal.decimal(cat.lo))
            b.add(s, AQI_MAX, Literal.decimal(cat.hi))
        return cls(b.freeze())

    @classmethod
    def default(cls) -> KnowledgeGraph:
        text = resources.files("aqcep.data").joinpath("knowledge_graph.nt").read_text(encoding="utf-8")
        return cls(parse_ntriples(text))

    @classmethod
    def load(cls, path: str | PathLike) -> KnowledgeGraph:
        return cls(read_ntriples(path))

    def advisory(self, c: AqiCategory) -> str:
        return advisory_lookup(self, c)


def advisory_lookup(kg: KnowledgeGraph, c: AqiCategory) -> str:
    texts = [o.lexical for o in kg.graph.objects(category_iri(c), ADVISORY) if isinstance(o, Literal)]
    if not texts:
        raise AdvisoryLookupError(f"no advisory for category {c.label}")
    return min(texts)
