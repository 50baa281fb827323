from datetime import datetime

import pytest
from hypothesis import given
from hypothesis import strategies as st
from strategies import graphs, triples

from aqcep.aqi import AqiCategory
from aqcep.errors import AdvisoryLookupError, ChunkError, NTriplesError
from aqcep.ingest import Event
from aqcep.pollutants import POLLUTANTS
from aqcep.pollutants import PollutantKind as P
from aqcep.rdf import (
    ADVISORY,
    DECIMAL,
    STRING,
    Graph,
    GraphBuilder,
    Iri,
    KnowledgeGraph,
    Literal,
    Triple,
    advisory_lookup,
    category_iri,
    chunk_graph,
    chunk_label,
    event_iri,
    event_to_triples,
    events_to_graph,
    format_decimal,
    merge_chunks,
    parse_ntriples,
    read_chunk_dir,
    serialize_ntriples,
    write_chunk_dir,
)
from aqcep.synthetic import synthetic_events


def event(seq=0, pm25=55.5):
    readings = {p: 1.0 for p in POLLUTANTS}
    readings[P.PM25] = pm25
    return Event(seq, datetime(2015, 1, 1), "Delhi", readings)


class TestTerms:
    def test_iri_validation(self):
        with pytest.raises(ValueError):
            Iri("http://a b")
        with pytest.raises(ValueError):
            Iri("<x>")
        with pytest.raises(ValueError):
            Iri("")

    def test_decimal_literal(self):
        lit = Literal.decimal(55.5)
        assert lit == Literal("55.5", DECIMAL)
        assert lit.number == 55.5
        assert lit.n3() == '"55.5"^^<http://www.w3.org/2001/XMLSchema#decimal>'

    @pytest.mark.parametrize("x, text", [(1.0, "1.0"), (1e-7, "0.0000001"), (1e20, "100000000000000000000.0")])
    def test_format_decimal(self, x, text):
        assert format_decimal(x) == text

    @given(st.floats(allow_nan=False, allow_infinity=False))
    def test_format_decimal_roundtrips(self, x):
        assert float(format_decimal(x)) == x
        assert "e" not in format_decimal(x).lower()

    def test_bad_literals(self):
        with pytest.raises(ValueError):
            Literal("abc", DECIMAL)
        with pytest.raises(ValueError):
            Literal("x", "http://example.org/unknownType")


class TestEventTriples:
    def test_eleven_triples(self):
        assert len(event_to_triples(event())) == 11

    def test_pm25_literal(self):
        t = [t for t in event_to_triples(event()) if t.predicate.value.endswith("#pm25")]
        assert t == [Triple(event_iri(0), Iri("http://example.org/aq#pm25"), Literal("55.5", DECIMAL))]

    def test_disjoint_subjects(self):
        a = {t.subject for t in event_to_triples(event(0))}
        b = {t.subject for t in event_to_triples(event(1))}
        assert a.isdisjoint(b)

    def test_graph_size(self, events_500):
        assert len(events_to_graph(events_500)) == 11 * 500


class TestNTriples:
    def test_empty(self):
        assert serialize_ntriples(Graph()) == ""
        assert len(parse_ntriples("")) == 0

    def test_one_event_eleven_lines(self):
        text = serialize_ntriples(events_to_graph([event()]))
        assert len(text.splitlines()) == 11
        assert text.splitlines() == sorted(text.splitlines())

    def test_missing_dot(self):
        text = serialize_ntriples(events_to_graph([event()])).splitlines()
        text[4] = text[4].rstrip(" .")
        with pytest.raises(NTriplesError) as exc:
            parse_ntriples("\n".join(text))
        assert exc.value.line == 5

    def test_comments_and_blank_lines(self):
        g = parse_ntriples("# c\n\n<http://a/x> <http://a/p> <http://a/y> .\n")
        assert len(g) == 1

    def test_plain_literal_defaults_to_string(self):
        (t,) = parse_ntriples('<http://a/x> <http://a/p> "hi" .\n')
        assert t.object == Literal("hi", STRING)

    def test_control_characters_escaped(self):
        g = Graph([Triple(Iri("http://a/x"), Iri("http://a/p"), Literal("a\x0bb c\nd\"\\"))])
        text = serialize_ntriples(g)
        assert text.count("\n") == 1
        assert parse_ntriples(text) == g

    @given(graphs)
    def test_roundtrip(self, g):
        assert parse_ntriples(serialize_ntriples(g)) == g

    @given(st.lists(triples, max_size=20), st.randoms())
    def test_order_independent(self, ts, rnd):
        shuffled = list(ts)
        rnd.shuffle(shuffled)
        assert serialize_ntriples(Graph(ts)) == serialize_ntriples(Graph(shuffled))


class TestGraph:
    def test_builder_freeze(self):
        b = GraphBuilder()
        b.add(Iri("http://a/x"), Iri("http://a/p"), Literal("1", DECIMAL))
        b.add(Iri("http://a/x"), Iri("http://a/p"), Literal("1", DECIMAL))
        g = b.freeze()
        assert len(g) == 1
        assert g.objects(Iri("http://a/x"), Iri("http://a/p")) == [Literal("1", DECIMAL)]

    def test_index(self, events_500):
        g = events_to_graph(events_500)
        assert g.predicate_count(Iri("http://example.org/aq#pm25")) == 500
        assert len(g.subjects()) == 500


class TestChunks:
    def test_sizes(self):
        events = synthetic_events(100, seed=1)
        chunks = chunk_graph(events, sizes=[10, 20, 30, 40])
        assert [c.label for c in chunks] == ["A", "B", "C", "D"]
        assert [c.event_count for c in chunks] == [10, 20, 30, 40]
        assert [len(c.graph) for c in chunks] == [110, 220, 330, 440]

    def test_tiling(self):
        events = synthetic_events(25932, seed=1)
        chunks = chunk_graph(events, chunk_size=5000)
        assert [c.event_count for c in chunks] == [5000] * 5 + [932]

    def test_errors(self):
        events = synthetic_events(10, seed=1)
        with pytest.raises(ChunkError):
            chunk_graph(events, sizes=[5, 0])
        with pytest.raises(ChunkError):
            chunk_graph(events, sizes=[8, 8])
        with pytest.raises(ChunkError):
            chunk_graph(events, chunk_size=0)

    def test_event_locality(self):
        events = synthetic_events(60, seed=2)
        chunks = chunk_graph(events, chunk_size=7)
        owner = {}
        for c in chunks:
            for t in c.graph:
                assert owner.setdefault(t.subject, c.label) == c.label
        assert all(len(c.graph) == 11 * c.event_count for c in chunks)

    def test_labels(self):
        assert [chunk_label(k) for k in (0, 25, 26, 27, 701, 702)] == ["A", "Z", "AA", "AB", "ZZ", "AAA"]

    def test_merge_algebra(self):
        a, b, c = chunk_graph(synthetic_events(30, seed=4), sizes=[10, 10, 10])
        assert merge_chunks([a]).graph == a.graph
        ab = merge_chunks([a, b])
        assert ab.label == "A&B"
        assert len(ab.graph) == len(a.graph) + len(b.graph)
        assert ab.event_count == 20
        assert merge_chunks([a, b]).graph == merge_chunks([b, a]).graph
        assert merge_chunks([merge_chunks([a, b]), c]).graph == merge_chunks([a, merge_chunks([b, c])]).graph
        assert merge_chunks([a, a]).graph == a.graph
        with pytest.raises(ChunkError):
            merge_chunks([])

    def test_chunk_dir_roundtrip(self, tmp_path):
        chunks = chunk_graph(synthetic_events(40, seed=4), sizes=[15, 25])
        write_chunk_dir(chunks, tmp_path)
        again = read_chunk_dir(tmp_path)
        assert [(c.label, c.graph, c.event_count, c.subjects) for c in again] == [
            (c.label, c.graph, c.event_count, c.subjects) for c in chunks
        ]
        assert [c.label for c in read_chunk_dir(tmp_path, ["B"])] == ["B"]
        with pytest.raises(ChunkError):
            read_chunk_dir(tmp_path, ["Q"])


class TestKnowledgeGraph:
    def test_shipped_file_matches_builder(self):
        assert KnowledgeGraph.default().graph == KnowledgeGraph.build_default().graph

    @pytest.mark.parametrize("cat", list(AqiCategory))
    def test_every_category_has_advisory(self, cat):
        assert advisory_lookup(KnowledgeGraph.default(), cat)

    def test_lexicographically_least(self):
        g = KnowledgeGraph.build_default().graph
        extra = Triple(category_iri(AqiCategory.GOOD), ADVISORY, Literal("AAA first"))
        assert advisory_lookup(KnowledgeGraph(g.union(Graph([extra]))), AqiCategory.GOOD) == "AAA first"

    def test_missing_category(self):
        g = Graph(t for t in KnowledgeGraph.build_default().graph if t.subject != category_iri(AqiCategory.SEVERE))
        with pytest.raises(AdvisoryLookupError):
            advisory_lookup(KnowledgeGraph(g), AqiCategory.SEVERE)

    def test_load(self, tmp_path):
        path = tmp_path / "kg.nt"
        path.write_text(serialize_ntriples(KnowledgeGraph.build_default().graph), encoding="utf-8")
        assert KnowledgeGraph.load(path).advisory(AqiCategory.POOR) == KnowledgeGraph.default().advisory(
            AqiCategory.POOR
        )
