"""Knowledge-graph materialization and canonical N-Triples I/O."""

from __future__ import annotations

import enum
import re
import time
from operator import itemgetter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterable, List, NamedTuple, Optional, Set

from .errors import MaterializationError, PipelineTimeout
from .functions import FunctionRegistry
from .model import RDF_TYPE, AssertionKind, DataIntegrationSystem, MappingAssertion
from .sources import SourceStore, SourceTable, row_key
from .terms import (
    DEFAULT_BASE_IRI,
    Template,
    Term,
    TermKind,
    compile_lexical,
    contains_function,
    finalize_iri,
    ordered_references,
    template_is_final,
)

PLAIN_MODE_MESSAGE = "function term map in plain mode — run transform first"


class Mode(enum.Enum):
    LAZY = "lazy"
    PLAIN = "plain"


@dataclass(frozen=True)
class IRI:
    value: str


@dataclass(frozen=True)
class Literal:
    value: str


class Triple(NamedTuple):
    subject: str
    predicate: str
    object: str
    literal: bool = False


KnowledgeGraph = Set[Triple]


class Deadline:
    """Cooperative timeout checked between batches of rows."""

    def __init__(self, seconds: Optional[float] = None):
        self.expires = None if seconds is None else time.monotonic() + seconds

    def check(self) -> None:
        if self.expires is not None and time.monotonic() > self.expires:
            raise PipelineTimeout("deadline exceeded")


_NO_DEADLINE = Deadline()
_CHECK_EVERY = 4096
_MISS = object()


def _caller(term: Term, registry: Optional[FunctionRegistry], mode: Mode):
    if mode is Mode.PLAIN or not contains_function(term):
        return None
    if registry is None:
        raise MaterializationError("function term map needs a function registry")
    return registry.invoke


def compile_term(term: Term, columns, registry=None, mode: Mode = Mode.LAZY,
                 base: str = DEFAULT_BASE_IRI) -> Callable[[tuple], Optional[str]]:
    """``row -> final lexical form`` (IRIs resolved and escaped) or None."""
    if mode is Mode.PLAIN and contains_function(term):
        raise MaterializationError(PLAIN_MODE_MESSAGE)
    positions = {c: i for i, c in enumerate(columns)}
    missing = [name for name in ordered_references(term) if name not in positions]
    if missing:
        raise MaterializationError(f"attribute(s) {', '.join(missing)} not in source")
    lexical = compile_lexical(term, positions, _caller(term, registry, mode))
    if term.kind is TermKind.LITERAL:
        return lexical
    if isinstance(term, Template) and template_is_final(term):
        return lexical

    def as_iri(row):
        value = lexical(row)
        return None if value is None else finalize_iri(value, base)

    return as_iri


def eval_term(term: Term, binding: Dict[str, Optional[str]], registry=None, mode: Mode = Mode.LAZY,
              base: str = DEFAULT_BASE_IRI):
    """Evaluate ``term`` under one binding: IRI, Literal or None when a value is missing."""
    columns = list(dict.fromkeys(list(binding) + list(ordered_references(term))))
    row = tuple(binding.get(c) for c in columns)
    value = compile_term(term, columns, registry, mode, base)(row)
    if value is None:
        return None
    return IRI(value) if term.kind is TermKind.IRI else Literal(value)


class _Materializer:
    def __init__(self, dis: DataIntegrationSystem, store: SourceStore, registry, mode: Mode,
                 base: str, deadline: Deadline):
        self.dis = dis
        self.store = store
        self.registry = registry
        self.mode = mode
        self.base = base
        self.deadline = deadline
        # parent key -> objects, shared by roles with the same function-free parent
        self.parent_maps: Dict[tuple, Dict[tuple, set]] = {}
        # function-free term -> {referenced values: final value}, shared across sources
        self.term_memo: Dict[Term, dict] = {}

    def table(self, source_id: str) -> SourceTable:
        return self.store.get(self.dis.source(source_id))

    def compile(self, term: Term, table: SourceTable):
        return compile_term(term, table.columns, self.registry, self.mode, self.base)

    def rows(self, table: SourceTable) -> Iterable[tuple]:
        rows, check = table.rows, self.deadline.check
        for start in range(0, len(rows), _CHECK_EVERY):
            check()
            yield from rows[start:start + _CHECK_EVERY]

    def compile_shared(self, term: Term, table: SourceTable):
        """Like :meth:`compile`, memoized on the referenced values when ``term`` has no function."""
        raw = self.compile(term, table)
        if contains_function(term):
            return raw
        indexes = [table.index(c) for c in ordered_references(term)]
        memo = self.term_memo.setdefault(term, {})
        get = memo.get
        if len(indexes) == 1:
            i = indexes[0]

            def shared(row):
                v = get(row[i], _MISS)
                if v is _MISS:
                    v = memo[row[i]] = raw(row)
                return v
            return shared
        key = row_key(indexes)

        def shared(row):
            k = key(row)
            v = get(k, _MISS)
            if v is _MISS:
                v = memo[k] = raw(row)
            return v
        return shared

    def assertion(self, ma: MappingAssertion, out: KnowledgeGraph) -> None:
        table = self.table(ma.sources[0])
        kind = ma.kind
        if kind is AssertionKind.MULTI_SOURCES_ROLE:
            self.multi_source(ma, table, out)
            return
        subject = self.compile_shared(ma.subject, table)
        if kind is AssertionKind.CONCEPT:
            if ma.class_iri is None:
                return
            cls, add = ma.class_iri, out.add
            for row in self.rows(table):
                s = subject(row)
                if s is not None:
                    add(Triple(s, RDF_TYPE, cls))
            return
        pred = ma.predicate
        obj_term = self.dis.object_term(ma)
        obj = self.compile(obj_term, table)
        literal, add = obj_term.kind is TermKind.LITERAL, out.add
        for row in self.rows(table):
            s = subject(row)
            if s is None:
                continue
            o = obj(row)
            if o is not None:
                add(Triple(s, pred, o, literal))

    def parent_map(self, ma, parent: SourceTable, parent_subject: Term) -> Dict:
        """Join key -> parent subjects. Single-column keys are bare values, others tuples."""
        cols = tuple(j.parent for j in ma.joins)
        cache_key = (ma.sources[1], parent_subject, cols)
        cacheable = not contains_function(parent_subject)
        if cacheable and cache_key in self.parent_maps:
            return self.parent_maps[cache_key]
        obj = self.compile_shared(parent_subject, parent)
        pkey = _join_key(parent, cols, ma.id)
        single = len(cols) == 1
        objects: Dict = {}
        for row in self.rows(parent):
            key = pkey(row)
            if key is None if single else None in key:
                continue
            o = obj(row)
            if o is not None:
                objects.setdefault(key, set()).add(o)
        if cacheable:
            self.parent_maps[cache_key] = objects
        return objects

    def multi_source(self, ma, child: SourceTable, out: KnowledgeGraph) -> None:
        parent_ma = self.dis.parent_of(ma)
        ckey = _join_key(child, [j.child for j in ma.joins], ma.id)
        objects = self.parent_map(ma, self.table(ma.sources[1]), parent_ma.subject)
        if not objects:
            return
        subject = self.compile_shared(ma.subject, child)
        pred = ma.predicate
        literal = parent_ma.subject.kind is TermKind.LITERAL
        get, add = objects.get, out.add
        for row in self.rows(child):
            targets = get(ckey(row))
            if not targets:
                continue
            # subject only after a match, so lazy functions run once per joined row
            s = subject(row)
            if s is not None:
                for o in targets:
                    add(Triple(s, pred, o, literal))


def _join_key(table: SourceTable, cols, owner: str):
    try:
        indexes = [table.index(c) for c in cols]
    except Exception as exc:
        raise MaterializationError(f"{owner}: {exc}") from None
    if len(indexes) == 1:
        return itemgetter(indexes[0])
    return row_key(indexes)


def materialize_assertion(ma: MappingAssertion, dis: DataIntegrationSystem, store: SourceStore,
                          registry=None, mode: Mode = Mode.LAZY, base: str = DEFAULT_BASE_IRI,
                          deadline: Deadline = _NO_DEADLINE) -> KnowledgeGraph:
    out: KnowledgeGraph = set()
    _Materializer(dis, store, registry, Mode(mode), base, deadline).assertion(ma, out)
    return out


def materialize_dis(dis: DataIntegrationSystem, store: SourceStore, registry=None,
                    mode: Mode = Mode.LAZY, base: str = DEFAULT_BASE_IRI,
                    deadline: Deadline = _NO_DEADLINE) -> KnowledgeGraph:
    mode = Mode(mode)
    if registry is None:
        registry = dis.functions
    if mode is Mode.PLAIN:
        for ma in dis.assertions:
            if contains_function(ma.subject) or contains_function(ma.object):
                raise MaterializationError(PLAIN_MODE_MESSAGE)
    m = _Materializer(dis, store, registry, mode, base, deadline)
    out: KnowledgeGraph = set()
    for ma in dis.assertions:
        m.assertion(ma, out)
    return out


# --- N-Triples ----------------------------------------------------------------

_LITERAL_ESCAPES = str.maketrans({"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r"})


def format_triple(t: Triple) -> str:
    obj = '"' + t.object.translate(_LITERAL_ESCAPES) + '"' if t.literal else f"<{t.object}>"
    return f"<{t.subject}> <{t.predicate}> {obj} ."


def canonical_lines(kg: Iterable[Triple]) -> List[str]:
    esc = _LITERAL_ESCAPES
    # format_triple inlined: this runs once per triple of every graph
    lines = [f'<{s}> <{p}> "{o.translate(esc)}" .' if lit else f"<{s}> <{p}> <{o}> ."
             for s, p, o, lit in kg]
    lines.sort()
    return lines


def canonical_ntriples(kg: Iterable[Triple]) -> str:
    lines = canonical_lines(kg)
    return "".join(line + "\n" for line in lines)


def write_ntriples(kg: Iterable[Triple], path) -> int:
    text = canonical_ntriples(kg)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return text.count("\n")


_NT_LINE = re.compile(r'^<([^>]*)> <([^>]*)> (?:<([^>]*)>|"((?:[^"\\]|\\.)*)") \.$')
_UNESCAPE = {"\\": "\\", '"': '"', "n": "\n", "r": "\r", "t": "\t", "b": "\b", "f": "\f", "'": "'"}


def _unescape(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch != "\\":
            out.append(ch)
            i += 1
            continue
        nxt = text[i + 1]
        if nxt in "uU":
            size = 4 if nxt == "u" else 8
            out.append(chr(int(text[i + 2:i + 2 + size], 16)))
            i += 2 + size
        else:
            out.append(_UNESCAPE[nxt])
            i += 2
    return "".join(out)


def parse_ntriples(text: str) -> KnowledgeGraph:
    kg: KnowledgeGraph = set()
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        m = _NT_LINE.match(line.strip())
        if not m:
            raise MaterializationError(f"malformed N-Triples line {n}: {line!r}")
        s, p, o_iri, o_lit = m.groups()
        if o_iri is not None:
            kg.add(Triple(s, p, o_iri, False))
        else:
            kg.add(Triple(s, p, _unescape(o_lit), True))
    return kg


def read_ntriples(path) -> KnowledgeGraph:
    return parse_ntriples(Path(path).read_text(encoding="utf-8"))
