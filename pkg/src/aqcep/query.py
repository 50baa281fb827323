"""A conjunctive subset of SPARQL over :class:`~aqcep.rdf.Graph`.

Supported::

    PREFIX p: <iri>
    SELECT ?a ?b WHERE { s p o . s p o . FILTER(?a >= 1 && (?b < 2 || ?b = 3)) }

Predicates must be concrete IRIs; filters compare a variable with a number.
The prefixes ``ex:``, ``aq:`` and ``xsd:`` are predeclared.
"""

from __future__ import annotations

import operator
import re
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from importlib import resources
from os import PathLike

from aqcep.errors import ModeError, QuerySyntaxError
from aqcep.ingest import Event
from aqcep.rdf import (
    DATATYPES,
    PREFIXES,
    Graph,
    Iri,
    Literal,
    Term,
    TripleChunk,
    event_iri,
    events_to_graph,
)
from aqcep.rules import Rule, format_number


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return f"?{self.name}"


@dataclass(frozen=True)
class TriplePattern:
    subject: Var | Iri
    predicate: Iri
    object: Var | Term

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(t.name for t in (self.subject, self.object) if isinstance(t, Var)))


@dataclass(frozen=True)
class Comparison:
    var: str
    op: str  # one of > >= < <= =
    value: float

    @property
    def variables(self) -> frozenset[str]:
        return frozenset((self.var,))


@dataclass(frozen=True)
class BoolOp:
    op: str  # "&&" or "||"
    operands: tuple[FilterExpr, ...]

    def __post_init__(self):
        if self.op not in ("&&", "||") or len(self.operands) < 2:
            raise ValueError("BoolOp needs && or || and at least two operands")
        object.__setattr__(self, "operands", tuple(self.operands))

    @property
    def variables(self) -> frozenset[str]:
        return frozenset().union(*(o.variables for o in self.operands))


FilterExpr = Comparison | BoolOp

_OPS: dict[str, Callable[[float, float], bool]] = {
    ">": operator.gt,
    ">=": operator.ge,
    "<": operator.lt,
    "<=": operator.le,
    "=": operator.eq,
}
_FLIP = {">": "<", ">=": "<=", "<": ">", "<=": ">=", "=": "="}


@dataclass(frozen=True)
class QueryAst:
    select_vars: tuple[str, ...]
    patterns: tuple[TriplePattern, ...]
    filter: FilterExpr | None = None

    def __post_init__(self):
        object.__setattr__(self, "select_vars", tuple(self.select_vars))
        object.__setattr__(self, "patterns", tuple(self.patterns))

    @property
    def pattern_vars(self) -> set[str]:
        return {v for p in self.patterns for v in p.variables}

    @property
    def event_variable(self) -> str | None:
        """The variable every pattern uses as subject, if there is one."""
        subjects = {p.subject for p in self.patterns}
        if len(subjects) == 1:
            (s,) = subjects
            if isinstance(s, Var):
                return s.name
        return None

    def __str__(self) -> str:
        return format_query(self)


# ---------------------------------------------------------------------------
# Lexer

_LOCAL = r"[A-Za-z0-9_\-/#]*(?:\.[A-Za-z0-9_\-/#]+)*"
_QTOKEN_RE = re.compile(
    rf"""
    (?P<ws>\s+)
  | (?P<comment>\#[^\n]*)
  | (?P<iri><[A-Za-z][A-Za-z0-9+.\-]*:[^<>\s"{{}}|^`\\]*>)
  | (?P<var>[?$][A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<number>-?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<pname>[A-Za-z][A-Za-z0-9_\-]*:{_LOCAL}|:{_LOCAL})
  | (?P<op>&&|\|\||>=|<=|\^\^|[<>=(){{}}.])
  | (?P<keyword>[A-Za-z]+)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _QTok:
    kind: str
    text: str
    pos: int


def _qtokenize(text: str) -> list[_QTok]:
    out = []
    pos = 0
    while pos < len(text):
        m = _QTOKEN_RE.match(text, pos)
        if m is None:
            raise QuerySyntaxError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup not in ("ws", "comment"):
            out.append(_QTok(m.lastgroup, m.group(), pos))
        pos = m.end()
    out.append(_QTok("eof", "", pos))
    return out


_STRING_UNESCAPES = {"\\": "\\", '"': '"', "n": "\n", "r": "\r", "t": "\t"}


class _QueryParser:
    def __init__(self, text: str):
        self.toks = _qtokenize(text)
        self.i = 0
        self.prefixes = dict(PREFIXES)

    @property
    def tok(self) -> _QTok:
        return self.toks[self.i]

    def error(self, message: str, tok: _QTok | None = None) -> QuerySyntaxError:
        tok = tok or self.tok
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        return QuerySyntaxError(f"{message}, found {found}", tok.pos)

    def is_op(self, text: str) -> bool:
        return self.tok.kind == "op" and self.tok.text == text

    def is_kw(self, word: str) -> bool:
        return self.tok.kind == "keyword" and self.tok.text.upper() == word

    def expect_op(self, text: str):
        if not self.is_op(text):
            raise self.error(f"expected {text!r}")
        self.i += 1

    def expect_kw(self, word: str):
        if not self.is_kw(word):
            raise self.error(f"expected {word}")
        self.i += 1

    def parse(self) -> QueryAst:
        while self.is_kw("PREFIX"):
            self.i += 1
            tok = self.tok
            if tok.kind != "pname" or not tok.text.endswith(":"):
                raise self.error("expected prefix name like 'aq:'")
            self.i += 1
            iri = self.tok
            if iri.kind != "iri":
                raise self.error("expected <iri>")
            self.i += 1
            self.prefixes[tok.text[:-1]] = iri.text[1:-1]
        select_tok = self.tok
        self.expect_kw("SELECT")
        select_vars = []
        while self.tok.kind == "var":
            select_vars.append(self.tok.text[1:])
            self.i += 1
        if not select_vars:
            raise self.error("expected at least one ?variable after SELECT")
        if len(set(select_vars)) != len(select_vars):
            raise QuerySyntaxError("duplicate variable in SELECT", select_tok.pos)
        self.expect_kw("WHERE")
        brace = self.tok
        self.expect_op("{")
        patterns, filters = [], []
        # after a pattern a '.' is required before the next pattern; after a filter it is optional
        need_dot = dot_ok = False
        while not self.is_op("}"):
            if self.is_kw("FILTER"):
                self.i += 1
                self.expect_op("(")
                filters.append(self.expr())
                self.expect_op(")")
                need_dot, dot_ok = False, True
            elif self.is_op("."):
                if not (need_dot or dot_ok):
                    raise self.error("unexpected '.'")
                self.i += 1
                need_dot = dot_ok = False
            else:
                if need_dot:
                    raise self.error("expected '.' between triple patterns")
                patterns.append(self.pattern())
                need_dot = dot_ok = True
        self.i += 1
        if self.tok.kind != "eof":
            raise self.error("expected end of query")
        if not patterns:
            raise QuerySyntaxError("empty pattern list", brace.pos)
        flt = None
        if len(filters) == 1:
            flt = filters[0]
        elif filters:
            flt = BoolOp("&&", tuple(filters))
        q = QueryAst(tuple(select_vars), tuple(patterns), flt)
        _validate(q, select_tok.pos, brace.pos)
        return q

    def resolve(self, tok: _QTok) -> Iri:
        if tok.kind == "iri":
            return Iri(tok.text[1:-1])
        prefix, _, local = tok.text.partition(":")
        if prefix not in self.prefixes:
            raise QuerySyntaxError(f"unknown prefix {prefix + ':'!r}", tok.pos)
        return Iri(self.prefixes[prefix] + local)

    def term(self, position: str) -> Var | Term:
        tok = self.tok
        if tok.kind == "var":
            self.i += 1
            return Var(tok.text[1:])
        if tok.kind in ("iri", "pname"):
            self.i += 1
            try:
                return self.resolve(tok)
            except ValueError:
                raise QuerySyntaxError(f"invalid IRI {tok.text!r}", tok.pos) from None
        if position == "object":
            if tok.kind == "number":
                self.i += 1
                return Literal.decimal(float(tok.text))
            if tok.kind == "string":
                self.i += 1
                lexical = re.sub(r"\\(.)", lambda m: _STRING_UNESCAPES.get(m.group(1), m.group(1)), tok.text[1:-1])
                datatype = DATATYPES[2]
                if self.is_op("^^"):
                    self.i += 1
                    dt = self.tok
                    if dt.kind not in ("iri", "pname"):
                        raise self.error("expected datatype IRI")
                    self.i += 1
                    datatype = self.resolve(dt).value
                try:
                    return Literal(lexical, datatype)
                except ValueError as exc:
                    raise QuerySyntaxError(str(exc), tok.pos) from None
        raise self.error(f"expected {position}")

    def pattern(self) -> TriplePattern:
        s = self.term("subject")
        p_tok = self.tok
        p = self.term("predicate")
        if not isinstance(p, Iri):
            raise QuerySyntaxError("predicate must be an IRI", p_tok.pos)
        o = self.term("object")
        return TriplePattern(s, p, o)

    def expr(self) -> FilterExpr:
        operands = [self.conjunction()]
        while self.is_op("||"):
            self.i += 1
            operands.append(self.conjunction())
        return operands[0] if len(operands) == 1 else BoolOp("||", tuple(operands))

    def conjunction(self) -> FilterExpr:
        operands = [self.primary()]
        while self.is_op("&&"):
            self.i += 1
            operands.append(self.primary())
        return operands[0] if len(operands) == 1 else BoolOp("&&", tuple(operands))

    def primary(self) -> FilterExpr:
        if self.is_op("("):
            self.i += 1
            e = self.expr()
            self.expect_op(")")
            return e
        left = self.tok
        if left.kind not in ("var", "number"):
            raise self.error("expected comparison")
        self.i += 1
        op = self.tok
        if op.kind != "op" or op.text not in _OPS:
            raise self.error("expected comparison operator")
        self.i += 1
        right = self.tok
        if right.kind not in ("var", "number"):
            raise self.error("expected variable or number")
        self.i += 1
        if left.kind == "var" and right.kind == "number":
            return Comparison(left.text[1:], op.text, float(right.text))
        if left.kind == "number" and right.kind == "var":
            return Comparison(right.text[1:], _FLIP[op.text], float(left.text))
        raise QuerySyntaxError("comparison must relate a variable and a number", left.pos)


def _validate(q: QueryAst, select_pos: int, body_pos: int) -> None:
    bound = q.pattern_vars
    for v in q.select_vars:
        if v not in bound:
            raise QuerySyntaxError(f"selected variable ?{v} does not occur in any pattern", select_pos)
    if q.filter is not None:
        unbound = sorted(q.filter.variables - bound)
        if unbound:
            raise QuerySyntaxError(f"filter variable ?{unbound[0]} is not bound by any pattern", body_pos)
    if not _connected(q.patterns):
        raise QuerySyntaxError("triple patterns do not form a connected join graph", body_pos)


def _connected(patterns: Sequence[TriplePattern]) -> bool:
    reached_vars = set(patterns[0].variables)
    remaining = list(patterns[1:])
    progress = True
    while remaining and progress:
        progress = False
        for p in list(remaining):
            if reached_vars & set(p.variables):
                reached_vars |= set(p.variables)
                remaining.remove(p)
                progress = True
    return not remaining


def parse_query(text: str) -> QueryAst:
    return _QueryParser(text).parse()


def load_query(path: str | PathLike) -> QueryAst:
    with open(path, encoding="utf-8") as fh:
        return parse_query(fh.read())


# ---------------------------------------------------------------------------
# Printer

_PNAME_LOCAL_RE = re.compile(rf"{_LOCAL}\Z")


def _format_iri(iri: Iri) -> str:
    for prefix in ("aq", "ex"):
        base = PREFIXES[prefix]
        if iri.value.startswith(base):
            local = iri.value[len(base) :]
            if _PNAME_LOCAL_RE.match(local):
                return f"{prefix}:{local}"
    return iri.n3()


def _format_term(t: Var | Term) -> str:
    if isinstance(t, Var):
        return str(t)
    if isinstance(t, Iri):
        return _format_iri(t)
    lex = t.lexical.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\r", "\\r").replace("\t", "\\t")
    return f'"{lex}"^^<{t.datatype}>'


def format_filter(e: FilterExpr) -> str:
    if isinstance(e, Comparison):
        return f"?{e.var} {e.op} {format_number(e.value)}"
    parts = [f"({format_filter(o)})" if isinstance(o, BoolOp) else format_filter(o) for o in e.operands]
    return f" {e.op} ".join(parts)


def format_query(q: QueryAst) -> str:
    body = " . ".join(
        f"{_format_term(p.subject)} {_format_iri(p.predicate)} {_format_term(p.object)}" for p in q.patterns
    )
    if q.filter is not None:
        body += f" . FILTER({format_filter(q.filter)})"
    return f"SELECT {' '.join('?' + v for v in q.select_vars)} WHERE {{ {body} }}"


# ---------------------------------------------------------------------------
# Evaluation


@dataclass
class ResultSet:
    variables: tuple[str, ...]
    rows: list[tuple[Term, ...]]
    eval_duration: float = 0.0
    batch_durations: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def bindings(self) -> list[dict[str, Term]]:
        return [dict(zip(self.variables, row)) for row in self.rows]

    def binding_set(self) -> set[tuple[Term, ...]]:
        return set(self.rows)

    def column(self, var: str) -> list[Term]:
        k = self.variables.index(var)
        return [row[k] for row in self.rows]

    def to_tsv(self) -> str:
        lines = ["\t".join("?" + v for v in self.variables)]
        lines += ["\t".join(t.n3() for t in row) for row in self.rows]
        return "\n".join(lines) + "\n"


def _sort_rows(rows: list[tuple[Term, ...]]) -> list[tuple[Term, ...]]:
    return sorted(rows, key=lambda row: tuple(t.n3() for t in row))


def _compile_filter(e: FilterExpr, slots: dict[str, int]) -> Callable[[tuple], bool]:
    if isinstance(e, Comparison):
        k, op, value = slots[e.var], _OPS[e.op], e.value

        def compare(row, k=k, op=op, value=value):
            x = getattr(row[k], "number", None)
            return x is not None and op(x, value)

        return compare
    parts = [_compile_filter(o, slots) for o in e.operands]
    if e.op == "&&":
        return lambda row: all(f(row) for f in parts)
    return lambda row: any(f(row) for f in parts)


def _conjuncts(e: FilterExpr | None) -> list[FilterExpr]:
    if e is None:
        return []
    if isinstance(e, BoolOp) and e.op == "&&":
        return list(e.operands)
    return [e]


def _all(conjuncts: list[FilterExpr], slots: dict[str, int]) -> Callable[[tuple], bool] | None:
    """One check for a conjunction; plain comparisons share a single loop."""
    comps = [(slots[c.var], _OPS[c.op], c.value) for c in conjuncts if isinstance(c, Comparison)]
    others = [_compile_filter(c, slots) for c in conjuncts if not isinstance(c, Comparison)]
    if not comps and not others:
        return None

    def check(row):
        for k, op, value in comps:
            x = getattr(row[k], "number", None)
            if x is None or not op(x, value):
                return False
        return all(f(row) for f in others)

    return check


def _scan(g: Graph, p: TriplePattern, pushed: list[FilterExpr]) -> tuple[tuple[str, ...], list[tuple]]:
    """Rows matching one pattern, with single-pattern filter conjuncts applied."""
    variables = p.variables
    slots = {v: i for i, v in enumerate(variables)}
    check = _all(pushed, slots)
    by_s = g.index().get(p.predicate, {})
    items = [(p.subject, by_s.get(p.subject, []))] if isinstance(p.subject, Iri) else by_s.items()
    s_var = p.subject.name if isinstance(p.subject, Var) else None
    o_var = p.object.name if isinstance(p.object, Var) else None
    rows = []
    for s, objs in items:
        for o in objs:
            if o_var is None:
                if o != p.object:
                    continue
                row = (s,) if s_var else ()
            elif s_var is None:
                row = (o,)
            elif s_var == o_var:
                if s != o:
                    continue
                row = (s,)
            else:
                row = (s, o)
            if check is None or check(row):
                rows.append(row)
    return variables, rows


def _solve(g: Graph, q: QueryAst) -> list[tuple[Term, ...]]:
    """Scan each pattern with its pushed-down conjuncts, then join smallest-first."""
    pending = _conjuncts(q.filter)
    scanned = {}
    for i, p in enumerate(q.patterns):
        pvars = set(p.variables)
        pushed = [c for c in pending if c.variables <= pvars]
        pending = [c for c in pending if c not in pushed]
        scanned[i] = _scan(g, p, pushed)
        if not scanned[i][1]:
            return []
    variables: tuple[str, ...] = ()
    rows: list[tuple] = [()]
    remaining = list(range(len(q.patterns)))
    while remaining:
        bound = set(variables)
        candidates = [i for i in remaining if not bound or bound & set(q.patterns[i].variables)]
        i = min(candidates, key=lambda k: (len(scanned[k][1]), k))
        remaining.remove(i)
        variables, rows = _hash_join(variables, rows, *scanned[i])
        ready = [c for c in pending if c.variables <= set(variables)]
        if ready:
            pending = [c for c in pending if c not in ready]
            slots = {v: k for k, v in enumerate(variables)}
            check = _all(ready, slots)
            rows = [r for r in rows if check(r)]
        if not rows:
            return []
    slots = {v: k for k, v in enumerate(variables)}
    picks = [slots[v] for v in q.select_vars]
    return [tuple(r[k] for k in picks) for r in rows]


def _hash_join(lvars, lrows, rvars, rrows):
    """Join two bags on their shared variables, hashing the smaller side."""
    if not lvars:
        return tuple(rvars), list(rrows)
    shared = [v for v in rvars if v in lvars]
    extra = [k for k, v in enumerate(rvars) if v not in lvars]
    out_vars = tuple(lvars) + tuple(rvars[k] for k in extra)
    lkeys = [lvars.index(v) for v in shared]
    rkeys = [rvars.index(v) for v in shared]
    out = []
    if len(rrows) <= len(lrows):
        table: dict[tuple, list[tuple]] = {}
        for r in rrows:
            table.setdefault(tuple(r[k] for k in rkeys), []).append(tuple(r[k] for k in extra))
        for left in lrows:
            for tail in table.get(tuple(left[k] for k in lkeys), ()):
                out.append(left + tail)
    else:
        ltable: dict[tuple, list[tuple]] = {}
        for left in lrows:
            ltable.setdefault(tuple(left[k] for k in lkeys), []).append(left)
        for r in rrows:
            matches = ltable.get(tuple(r[k] for k in rkeys))
            if matches:
                tail = tuple(r[k] for k in extra)
                out.extend(left + tail for left in matches)
    return out_vars, out


def eval_static(g: Graph, q: QueryAst) -> ResultSet:
    """All bindings of ``q`` over the whole graph, sorted by their serialized form.

    The graph's lazy index is built before the clock starts.
    """
    g.index()
    start = time.perf_counter()
    rows = _solve(g, q)
    elapsed = time.perf_counter() - start
    return ResultSet(q.select_vars, _sort_rows(rows), elapsed)


def _batches(source, batch_size: int | None) -> list[Graph]:
    if isinstance(source, Graph):
        by_s = source.subjects()
        subjects = sorted(by_s, key=lambda s: s.value)
        size = batch_size or max(len(subjects), 1)
        return [
            Graph(t for s in subjects[i : i + size] for t in by_s[s]) for i in range(0, len(subjects), size)
        ]
    items = list(source)
    if items and all(isinstance(c, TripleChunk) for c in items):
        if batch_size is None:
            return [c.graph for c in items]
        pairs = [(s, c.graph) for c in items for s in (c.subjects or sorted(c.graph.subjects(), key=lambda s: s.value))]
        out = []
        for i in range(0, len(pairs), batch_size):
            out.append(Graph(t for s, g in pairs[i : i + batch_size] for t in g.subjects().get(s, ())))
        return out
    if all(isinstance(e, Event) for e in items):
        size = batch_size or max(len(items), 1)
        return [events_to_graph(items[i : i + size]) for i in range(0, len(items), size)]
    raise TypeError("source must be a Graph, a sequence of TripleChunk, or a sequence of Event")


def eval_stream_batched(source, q: QueryAst, batch_size: int | None = None) -> ResultSet:
    """Evaluate an event-scoped query batch by batch and union the bindings.

    ``source`` is a sequence of events, a sequence of chunks (one batch per
    chunk unless ``batch_size`` re-batches them) or a graph. Only the
    per-batch evaluation is timed; building batch graphs and their indexes is not.
    """
    if q.event_variable is None:
        raise ModeError("batched evaluation needs every pattern to share one subject variable")
    if batch_size is not None and batch_size < 1:
        raise ValueError("batch_size must be positive")
    rows: list[tuple] = []
    durations = []
    for g in _batches(source, batch_size):
        g.index()
        start = time.perf_counter()
        rows.extend(_solve(g, q))
        durations.append(time.perf_counter() - start)
    return ResultSet(q.select_vars, _sort_rows(rows), sum(durations), durations)


def compile_rule_to_query(r: Rule) -> QueryAst:
    """One ``?e aq:<pollutant> ?vK`` pattern per pollutant and the rule's conditions as filter."""
    from aqcep.rdf import PREDICATES

    slots = {p: f"v{k}" for k, p in enumerate(r.pollutants)}
    patterns = tuple(TriplePattern(Var("e"), PREDICATES[p], Var(v)) for p, v in slots.items())
    comparisons = tuple(Comparison(slots[c.pollutant], c.comparator, c.threshold) for c in r.conditions)
    flt = comparisons[0] if len(comparisons) == 1 else BoolOp("&&", comparisons)
    return QueryAst(("e",), patterns, flt)


def event_subjects(rs: ResultSet, var: str = "e") -> set[Iri]:
    return {t for t in rs.column(var) if isinstance(t, Iri)}


def bundled_queries() -> dict[str, QueryAst]:
    """The shipped benchmark suite keyed Q1*, Q2, ..., Q5."""
    pkg = resources.files("aqcep.data").joinpath("queries")
    out = {}
    for k in range(1, 6):
        name = "Q1*" if k == 1 else f"Q{k}"
        out[name] = parse_query(pkg.joinpath(f"q{k}.rq").read_text(encoding="utf-8"))
    return out


__all__ = [
    "BoolOp",
    "Comparison",
    "QueryAst",
    "ResultSet",
    "TriplePattern",
    "Var",
    "bundled_queries",
    "compile_rule_to_query",
    "eval_static",
    "eval_stream_batched",
    "event_iri",
    "event_subjects",
    "format_query",
    "parse_query",
]
