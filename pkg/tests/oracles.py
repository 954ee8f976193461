"""Brute-force reference implementations the optimized code is checked against.

Nothing here imports evaluation helpers from mapweave: terms, IRIs, joins and
assertions are interpreted directly from their definitions over dict bindings.
"""

from __future__ import annotations

import csv
import itertools
import re
from collections import Counter
from pathlib import Path
from typing import Dict, List, Optional

from mapweave.model import AssertionKind
from mapweave.terms import Constant, FunctionApp, Reference, Template, TermKind

BASE = "http://example.com/base/"

# plain python bodies for the built-in catalogue, keyed by IRI
GREL = "http://users.ugent.be/~bjdmeest/function/grel.ttl#"
EXF = "http://example.com/functions#"
BODIES = {
    GREL + "toLowerCase": lambda v: v.lower(),
    GREL + "toUpperCase": lambda v: v.upper(),
    GREL + "string_trim": lambda v: v.strip(),
    EXF + "reverseString": lambda v: "".join(reversed(v)),
    EXF + "identity": lambda v: v,
    EXF + "concat2": lambda a, b: a + b,
}

_UCS_RANGES = [
    (0xA0, 0xD7FF), (0xF900, 0xFDCF), (0xFDF0, 0xFFEF),
] + [(plane * 0x10000, plane * 0x10000 + 0xFFFD) for plane in range(1, 15)]


def _ucschar(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _UCS_RANGES)


def _pct(ch: str) -> str:
    return "".join("%" + format(b, "02X") for b in ch.encode("utf-8"))


def encode_value(value: str) -> str:
    """Percent-encode everything outside iunreserved."""
    out = ""
    for ch in value:
        if ch.isascii() and (ch.isalnum() or ch in "-._~"):
            out += ch
        elif _ucschar(ch):
            out += ch
        else:
            out += _pct(ch)
    return out


def finalize(value: str) -> str:
    if not re.match(r"[A-Za-z][A-Za-z0-9+.\-]*:", value):
        value = BASE + value
    out = ""
    for ch in value:
        out += _pct(ch) if (ord(ch) <= 0x20 or ch in '<>"{}|^`\\') else ch
    return out


def _template_parts(pattern: str):
    parts, buf, i = [], "", 0
    while i < len(pattern):
        ch = pattern[i]
        if ch == "\\" and i + 1 < len(pattern) and pattern[i + 1] in "{}\\":
            buf += pattern[i + 1]
            i += 2
        elif ch == "{":
            end = pattern.index("}", i)
            parts.append(("text", buf))
            parts.append(("ref", pattern[i + 1:end]))
            buf = ""
            i = end + 1
        else:
            buf += ch
            i += 1
    parts.append(("text", buf))
    return parts


class Calls:
    """Tally of every function call the reference interpreter makes."""

    def __init__(self):
        self.per_call = Counter()

    def total(self, iri=None) -> int:
        return sum(n for (f, _), n in self.per_call.items() if iri is None or f == iri)

    def distinct(self, iri=None) -> int:
        return sum(1 for (f, _) in self.per_call if iri is None or f == iri)


def lexical(term, binding: Dict[str, Optional[str]], calls: Optional[Calls] = None) -> Optional[str]:
    """Lexical value of a term under a binding, or None when something is missing."""
    if isinstance(term, Constant):
        return term.value
    if isinstance(term, Reference):
        return binding.get(term.name)
    if isinstance(term, Template):
        out = ""
        for kind, text in _template_parts(term.pattern):
            if kind == "text":
                out += text
                continue
            v = binding.get(text)
            if v is None:
                return None
            out += encode_value(v) if term.kind is TermKind.IRI else v
        return out
    if isinstance(term, FunctionApp):
        args = []
        for a in term.args:
            v = lexical(a, binding, calls)
            if v is None:
                return None
            args.append(v)
        if calls is not None:
            calls.per_call[(term.function, tuple(args))] += 1
        result = BODIES[term.function](*args)
        return result if result != "" else None
    raise TypeError(term)


def value(term, binding, calls=None):
    lex = lexical(term, binding, calls)
    if lex is None:
        return None
    return finalize(lex) if term.kind is TermKind.IRI else lex


# --- tables as lists of dicts -----------------------------------------------------

def read_rows(path) -> List[Dict[str, Optional[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [{k: (v if v != "" else None) for k, v in row.items()} for row in csv.DictReader(fh)]


def table_rows(table) -> List[Dict[str, Optional[str]]]:
    return [dict(zip(table.columns, row)) for row in table.rows]


def distinct_projection(rows, attrs):
    out = []
    for r in rows:
        t = tuple(r[a] for a in attrs)
        if attrs and all(v is None for v in t):
            continue
        if t not in out:
            out.append(t)
    return out


def nested_loop_join(left_rows, right_rows, conditions, left_cols, right_cols):
    """All (left ++ right) tuples whose join attributes are equal and present."""
    out = []
    for lr in left_rows:
        for rr in right_rows:
            ok = True
            for c, p in conditions:
                if lr[c] is None or rr[p] is None or lr[c] != rr[p]:
                    ok = False
            if ok:
                t = tuple(lr[c] for c in left_cols) + tuple(rr[c] for c in right_cols)
                if t not in out:
                    out.append(t)
    return out


# --- assertions -----------------------------------------------------------------

def materialize_assertion(ma, dis, rows_of, calls=None):
    """Triples of one assertion. ``rows_of(source_id)`` yields dict bindings."""
    triples = set()
    child = rows_of(ma.sources[0])
    if ma.kind is AssertionKind.CONCEPT:
        if ma.class_iri is None:
            return triples
        for b in child:
            s = value(ma.subject, b, calls)
            if s is not None:
                triples.add((s, "http://www.w3.org/1999/02/22-rdf-syntax-ns#type", ma.class_iri, False))
        return triples
    if ma.kind is AssertionKind.MULTI_SOURCES_ROLE:
        parent = dis.assertion(ma.parent)
        literal = parent.subject.kind is TermKind.LITERAL
        for cb in child:
            for pb in rows_of(ma.sources[1]):
                if all(cb[j.child] is not None and cb[j.child] == pb[j.parent] for j in ma.joins):
                    s = value(ma.subject, cb, calls)
                    o = value(parent.subject, pb, calls)
                    if s is not None and o is not None:
                        triples.add((s, ma.predicate, o, literal))
        return triples
    obj = dis.assertion(ma.parent).subject if ma.kind is AssertionKind.REFERENCED_SOURCE_ROLE else ma.object
    for b in child:
        s = value(ma.subject, b, calls)
        o = value(obj, b, calls)
        if s is not None and o is not None:
            triples.add((s, ma.predicate, o, obj.kind is TermKind.LITERAL))
    return triples


def materialize(dis, rows_of, calls=None):
    out = set()
    for ma in dis.assertions:
        out |= materialize_assertion(ma, dis, rows_of, calls)
    return out


def rows_from_dir(dis, directory):
    cache = {}

    def rows_of(sid):
        if sid not in cache:
            cache[sid] = read_rows(Path(directory) / dis.source(sid).location)
        return cache[sid]

    return rows_of


def nt_line(t) -> str:
    s, p, o, literal = t
    if literal:
        esc = o.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\r", "\\r")
        return f'<{s}> <{p}> "{esc}" .'
    return f"<{s}> <{p}> <{o}> ."


# --- structural analyses -----------------------------------------------------------

def _msr(dis):
    return [ma for ma in dis.assertions if ma.kind is AssertionKind.MULTI_SOURCES_ROLE]


def _root(dis, sid):
    sig = dis.source(sid)
    return sig.origin or sig.id


def _subject_def(dis, ma):
    return (_root(dis, ma.sources[0]), ma.subject)


def _parent_def(dis, ma):
    p = dis.assertion(ma.parent)
    return (_root(dis, p.sources[0]), p.subject)


def star_groups(dis):
    """Maximal sets of >= 2 multi-source roles sharing MJ ('a') or subject ('b')."""
    roles = _msr(dis)
    found = {}
    for tag, key in (("a", _parent_def), ("b", _subject_def)):
        for size in range(len(roles), 1, -1):
            for combo in itertools.combinations(roles, size):
                if len({key(dis, m) for m in combo}) != 1:
                    continue
                ids = frozenset(m.id for m in combo)
                if any(ids < other for other, tags in found.items() if tag in tags):
                    continue
                found.setdefault(ids, set()).add(tag)
    return {ids: frozenset(tags) for ids, tags in found.items()}


def chain_paths(dis):
    """Maximal simple paths (length >= 2) of the 'MJ equals next subject' relation."""
    roles = _msr(dis)
    ids = [m.id for m in roles]
    by_id = {m.id: m for m in roles}

    def edge(a, b):
        return _parent_def(dis, by_id[a]) == _subject_def(dis, by_id[b])

    paths = set()
    for size in range(2, len(ids) + 1):
        for perm in itertools.permutations(ids, size):
            if not all(edge(perm[i], perm[i + 1]) for i in range(size - 1)):
                continue
            if any(edge(perm[-1], x) for x in ids if x not in perm):
                continue
            if any(edge(x, perm[0]) for x in ids if x not in perm):
                continue
            cyclic = edge(perm[-1], perm[0])
            if cyclic:
                rotations = [perm[i:] + perm[:i] for i in range(size)]
                perm = min(rotations, key=lambda p: [ids.index(x) for x in p])
            paths.add((perm, cyclic))
    return paths
