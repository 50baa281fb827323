"""Conjunctive threshold rules: the text DSL, canonical printing and rule-set validation.

Grammar (keywords case-insensitive, ``#`` starts a line comment)::

    ruleset   := rule*
    rule      := RULE name WHEN condition (AND condition)* THEN CATEGORY category [SEVERITY int]
    condition := pollutant (">=" | "<=" | ">" | "<") number
"""

from __future__ import annotations

import math
import operator
import re
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from importlib import resources

from aqcep.aqi import AqiCategory, BreakpointTable, default_table
from aqcep.errors import RuleSyntaxError
from aqcep.pollutants import POLLUTANTS, PollutantKind

COMPARATORS = {">=": operator.ge, "<=": operator.le, ">": operator.gt, "<": operator.lt}


@dataclass(frozen=True)
class Condition:
    pollutant: PollutantKind
    comparator: str
    threshold: float

    def __post_init__(self):
        if self.comparator not in COMPARATORS:
            raise ValueError(f"unknown comparator {self.comparator!r}")
        if not math.isfinite(self.threshold) or self.threshold < 0:
            raise ValueError(f"threshold must be finite and >= 0, got {self.threshold}")

    def holds(self, value: float) -> bool:
        return COMPARATORS[self.comparator](value, self.threshold)

    def __str__(self) -> str:
        return f"{self.pollutant.value} {self.comparator} {format_number(self.threshold)}"


@dataclass(frozen=True)
class Rule:
    name: str
    conditions: tuple[Condition, ...]
    category: AqiCategory
    severity: int | None = None

    def __post_init__(self):
        if not self.conditions:
            raise ValueError(f"rule {self.name!r} has no conditions")
        object.__setattr__(self, "conditions", tuple(self.conditions))

    @property
    def pollutants(self) -> tuple[PollutantKind, ...]:
        """Distinct pollutants referenced, in order of first appearance."""
        return tuple(dict.fromkeys(c.pollutant for c in self.conditions))

    def matches(self, readings: Mapping[PollutantKind, float | None]) -> bool:
        for c in self.conditions:
            v = readings.get(c.pollutant)
            if v is None or not c.holds(v):
                return False
        return True

    def __str__(self) -> str:
        conds = " AND ".join(str(c) for c in self.conditions)
        text = f"RULE {self.name} WHEN {conds} THEN CATEGORY {self.category.label}"
        if self.severity is not None:
            text += f" SEVERITY {self.severity}"
        return text


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[Rule, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        seen = set()
        for r in self.rules:
            if r.name in seen:
                raise ValueError(f"duplicate rule name {r.name!r}")
            seen.add(r.name)

    def __iter__(self) -> Iterator[Rule]:
        return iter(self.rules)

    def __len__(self) -> int:
        return len(self.rules)

    def __getitem__(self, key: int | str) -> Rule:
        if isinstance(key, str):
            for r in self.rules:
                if r.name == key:
                    return r
            raise KeyError(key)
        return self.rules[key]


def format_number(x: float) -> str:
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


# ---------------------------------------------------------------------------
# Lexer and parser

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<number>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<op>>=|<=|>|<)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_.]*)
    """,
    re.VERBOSE,
)

_KEYWORDS = {"RULE", "WHEN", "AND", "THEN", "CATEGORY", "SEVERITY"}


@dataclass(frozen=True)
class _Token:
    kind: str  # "number", "op", "ident", "eof"
    text: str
    line: int
    column: int

    def is_keyword(self, word: str) -> bool:
        return self.kind == "ident" and self.text.upper() == word


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise RuleSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            tokens.append(_Token(kind, m.group(), line, pos - line_start + 1))
        for i in range(pos, m.end()):
            if text[i] == "\n":
                line, line_start = line + 1, i + 1
        pos = m.end()
    tokens.append(_Token("eof", "", line, pos - line_start + 1))
    return tokens


class _RuleParser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def error(self, message: str, tok: _Token | None = None) -> RuleSyntaxError:
        tok = tok or self.tok
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        return RuleSyntaxError(f"{message}, found {found}", tok.line, tok.column)

    def expect_keyword(self, word: str) -> _Token:
        tok = self.tok
        if not tok.is_keyword(word):
            raise self.error(f"expected {word}")
        self.i += 1
        return tok

    def expect(self, kind: str, what: str) -> _Token:
        tok = self.tok
        if tok.kind != kind:
            raise self.error(f"expected {what}")
        self.i += 1
        return tok

    def parse(self) -> RuleSet:
        rules: list[Rule] = []
        names: set[str] = set()
        while self.tok.kind != "eof":
            start = self.tok
            rule = self.rule()
            if rule.name in names:
                raise RuleSyntaxError(f"duplicate rule name {rule.name!r}", start.line, start.column)
            names.add(rule.name)
            rules.append(rule)
        return RuleSet(tuple(rules))

    def rule(self) -> Rule:
        self.expect_keyword("RULE")
        name_tok = self.expect("ident", "rule name")
        if "." in name_tok.text:
            raise self.error("rule names may not contain '.'", name_tok)
        self.expect_keyword("WHEN")
        conditions = [self.condition()]
        while self.tok.is_keyword("AND"):
            self.i += 1
            conditions.append(self.condition())
        self.expect_keyword("THEN")
        self.expect_keyword("CATEGORY")
        cat_tok = self.expect("ident", "category name")
        try:
            category = AqiCategory.parse(cat_tok.text)
        except ValueError:
            raise RuleSyntaxError(f"unknown category {cat_tok.text!r}", cat_tok.line, cat_tok.column) from None
        severity = None
        if self.tok.is_keyword("SEVERITY"):
            self.i += 1
            sev_tok = self.expect("number", "severity level")
            if not sev_tok.text.isdigit():
                raise RuleSyntaxError("severity must be a non-negative integer", sev_tok.line, sev_tok.column)
            severity = int(sev_tok.text)
        return Rule(name_tok.text, tuple(conditions), category, severity)

    def condition(self) -> Condition:
        p_tok = self.tok
        if p_tok.kind != "ident" or p_tok.text.upper() in _KEYWORDS:
            raise self.error("expected pollutant name")
        self.i += 1
        try:
            pollutant = PollutantKind.parse(p_tok.text)
        except ValueError:
            raise RuleSyntaxError(f"unknown pollutant {p_tok.text!r}", p_tok.line, p_tok.column) from None
        op = self.expect("op", "comparator")
        num = self.expect("number", "threshold")
        threshold = float(num.text)
        if not math.isfinite(threshold):
            raise RuleSyntaxError("threshold out of range", num.line, num.column)
        return Condition(pollutant, op.text, threshold)


def parse_rules(text: str) -> RuleSet:
    return _RuleParser(text).parse()


def print_rules(rs: RuleSet) -> str:
    return "".join(f"{r}\n" for r in rs)


def load_rules(path) -> RuleSet:
    with open(path, encoding="utf-8") as fh:
        return parse_rules(fh.read())


def bundled_rules(name: str = "standard.rules") -> RuleSet:
    """Rule files shipped with the package: ``standard.rules`` or ``standard_inverted.rules``."""
    return parse_rules(resources.files("aqcep.data").joinpath(name).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Condition boxes


@dataclass(frozen=True)
class Interval:
    """A real interval with independently open or closed ends."""

    lo: float = 0.0
    hi: float = math.inf
    lo_open: bool = False
    hi_open: bool = True

    @property
    def is_empty(self) -> bool:
        return self.lo > self.hi or (self.lo == self.hi and (self.lo_open or self.hi_open))

    def __contains__(self, x: float) -> bool:
        above = x > self.lo if self.lo_open else x >= self.lo
        below = x < self.hi if self.hi_open else x <= self.hi
        return above and below

    def intersect(self, other: Interval) -> Interval:
        if self.lo > other.lo or (self.lo == other.lo and self.lo_open):
            lo, lo_open = self.lo, self.lo_open
        else:
            lo, lo_open = other.lo, other.lo_open
        if self.hi < other.hi or (self.hi == other.hi and self.hi_open):
            hi, hi_open = self.hi, self.hi_open
        else:
            hi, hi_open = other.hi, other.hi_open
        return Interval(lo, hi, lo_open, hi_open)

    @classmethod
    def from_condition(cls, c: Condition) -> Interval:
        if c.comparator == ">=":
            return cls(lo=c.threshold)
        if c.comparator == ">":
            return cls(lo=c.threshold, lo_open=True)
        if c.comparator == "<=":
            return cls(hi=c.threshold, hi_open=False)
        return cls(hi=c.threshold, hi_open=True)


def condition_box(conditions: Iterable[Condition]) -> dict[PollutantKind, Interval]:
    """Tightest interval per constrained pollutant over the non-negative domain."""
    box: dict[PollutantKind, Interval] = {}
    for c in conditions:
        box[c.pollutant] = box.get(c.pollutant, Interval()).intersect(Interval.from_condition(c))
    return box


def box_is_empty(box: Mapping[PollutantKind, Interval]) -> bool:
    return any(iv.is_empty for iv in box.values())


def intersect_boxes(a: Mapping[PollutantKind, Interval], b: Mapping[PollutantKind, Interval]):
    out = dict(a)
    for p, iv in b.items():
        out[p] = out[p].intersect(iv) if p in out else iv
    return out


def box_to_conditions(box: Mapping[PollutantKind, Interval]) -> tuple[Condition, ...]:
    """Inverse of :func:`condition_box`: at most one lower and one upper bound per pollutant."""
    conds = []
    for p in POLLUTANTS:
        iv = box.get(p)
        if iv is None:
            continue
        if iv.lo > 0 or iv.lo_open:
            conds.append(Condition(p, ">" if iv.lo_open else ">=", iv.lo))
        if math.isfinite(iv.hi):
            conds.append(Condition(p, "<" if iv.hi_open else "<=", iv.hi))
    return tuple(conds)


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" or "warning"
    kind: str  # "unsatisfiable", "band-mismatch", "conflict"
    rule: str
    message: str
    other_rule: str | None = field(default=None)

    def __str__(self) -> str:
        return f"{self.level}: {self.rule}: {self.message}"


def _inside_band(iv: Interval, lo: float, hi: float) -> bool:
    if iv.lo < lo:
        return False
    return iv.hi < hi or (iv.hi == hi and iv.hi_open)


def validate_ruleset(rs: RuleSet, table: BreakpointTable | None = None) -> list[Diagnostic]:
    """Report unsatisfiable rules, rules asserting a category their bands contradict,
    and satisfiable rules that overlap while asserting different categories."""
    table = table or default_table()
    diags: list[Diagnostic] = []
    boxes = {}
    for r in rs:
        box = condition_box(r.conditions)
        empty = [p for p, iv in box.items() if iv.is_empty]
        if empty:
            names = ", ".join(p.value for p in empty)
            diags.append(Diagnostic("error", "unsatisfiable", r.name, f"no {names} value satisfies all bounds"))
            continue
        boxes[r.name] = box
        for p, iv in box.items():
            if p not in table:
                continue
            for row in table.rows(p):
                lo, hi = table.band_span(row)
                if _inside_band(iv, lo, hi) and row.category is not r.category:
                    diags.append(
                        Diagnostic(
                            "warning",
                            "band-mismatch",
                            r.name,
                            f"{p.value} bounds lie inside the {row.category.label} band "
                            f"but the rule asserts {r.category.label}",
                        )
                    )
    live = [r for r in rs if r.name in boxes]
    for i, a in enumerate(live):
        for b in live[i + 1 :]:
            if a.category is b.category:
                continue
            if not box_is_empty(intersect_boxes(boxes[a.name], boxes[b.name])):
                diags.append(
                    Diagnostic(
                        "warning",
                        "conflict",
                        a.name,
                        f"overlaps {b.name} ({a.category.label} vs {b.category.label})",
                        other_rule=b.name,
                    )
                )
    return diags
