"""Recursive-descent reader for the small Turtle subset used by mapping documents.

Accepted: ``@prefix``, ``<iri>``, prefixed names, ``a``, string literals
(short and long, single or double quoted), blank-node property lists
``[...]``, ``;`` and ``,`` lists, ``#`` comments. Everything else is
rejected with a line/column position.
"""

from __future__ import annotations

import re
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

from .errors import MappingSyntaxError

RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDF_TYPE = RDF + "type"


@dataclass(frozen=True)
class IriNode:
    value: str
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)


@dataclass(frozen=True)
class LiteralNode:
    value: str
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)


@dataclass
class BlankNode:
    """An anonymous node: ordered (predicate, object) pairs."""

    properties: List[Tuple[IriNode, "Node"]]
    line: int = 0
    column: int = 0

    def values(self, predicate: str) -> List["Node"]:
        return [o for p, o in self.properties if p.value == predicate]


Node = Union[IriNode, LiteralNode, BlankNode]


@dataclass
class TurtleDocument:
    prefixes: Dict[str, str]
    # subject IRI -> ordered (predicate, object) pairs, subjects in first-seen order
    subjects: Dict[str, BlankNode]


_PN_PREFIX = r"(?:[A-Za-z](?:[A-Za-z0-9_.\-]*[A-Za-z0-9_\-])?)?"
_PNAME = re.compile(_PN_PREFIX + r":((?:[A-Za-z0-9_:%\-]|\.(?=[A-Za-z0-9_:%\-]))*)")
_NUMBER = re.compile(r"[+\-]?(?:\d|\.\d)")
_ECHAR = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}


class _Reader:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.prefixes: Dict[str, str] = {}
        self.line_starts = [0] + [m.end() for m in re.finditer("\n", text)]

    # -- positions ---------------------------------------------------------
    def where(self, pos: Optional[int] = None) -> Tuple[int, int]:
        pos = self.pos if pos is None else pos
        line = bisect_right(self.line_starts, pos)
        return line, pos - self.line_starts[line - 1] + 1

    def fail(self, message: str, expected: Optional[str] = None, pos: Optional[int] = None):
        line, column = self.where(pos)
        raise MappingSyntaxError(message, line, column, expected)

    # -- lexing helpers ----------------------------------------------------
    def skip_ws(self) -> None:
        text, n = self.text, len(self.text)
        while self.pos < n:
            ch = text[self.pos]
            if ch in " \t\r\n":
                self.pos += 1
            elif ch == "#":
                end = text.find("\n", self.pos)
                self.pos = n if end < 0 else end + 1
            else:
                break

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, token: str) -> None:
        if self.peek() != token:
            found = self.text[self.pos] if self.pos < len(self.text) else "end of input"
            self.fail(f"unexpected {found!r}", repr(token))
        self.pos += 1

    # -- grammar -----------------------------------------------------------
    def document(self) -> TurtleDocument:
        subjects: Dict[str, BlankNode] = {}
        while self.peek():
            if self.text.startswith("@prefix", self.pos):
                self.prefix_directive()
                continue
            self.reject_unsupported_statement()
            line, column = self.where()
            subject = self.iri_term("subject")
            props = self.predicate_object_list()
            if not props:
                self.fail("statement without predicates", "predicate")
            self.expect(".")
            node = subjects.setdefault(subject.value, BlankNode([], line, column))
            node.properties.extend(props)
        return TurtleDocument(dict(self.prefixes), subjects)

    def reject_unsupported_statement(self) -> None:
        rest = self.text[self.pos:self.pos + 8]
        if rest.startswith("@base") or rest[:5].upper() == "BASE " or rest[:5].upper() == "BASE<":
            self.fail("base declarations are not supported")
        if rest[:7].upper() == "PREFIX " and not rest.startswith("@"):
            self.fail("SPARQL-style PREFIX is not supported", "'@prefix'")
        if rest.startswith("["):
            self.fail("blank node subjects are not supported", "IRI")

    def prefix_directive(self) -> None:
        self.pos += len("@prefix")
        self.skip_ws()
        m = re.compile(_PN_PREFIX + ":").match(self.text, self.pos)
        if not m:
            self.fail("malformed prefix label", "PNAME_NS")
        label = m.group(0)[:-1]
        self.pos = m.end()
        self.skip_ws()
        if self.peek() != "<":
            self.fail("prefix must be bound to an IRI", "IRI")
        iri = self.iriref()
        self.expect(".")
        self.prefixes[label] = iri

    def predicate_object_list(self) -> List[Tuple[IriNode, Node]]:
        props: List[Tuple[IriNode, Node]] = []
        while True:
            ch = self.peek()
            if ch in (".", "]", ""):
                return props
            if ch == ";":
                self.pos += 1
                continue
            predicate = self.verb()
            while True:
                props.append((predicate, self.object()))
                if self.peek() == ",":
                    self.pos += 1
                    continue
                break
            ch = self.peek()
            if ch not in (";", ".", "]"):
                self.fail(f"unexpected {ch or 'end of input'!r}", "';', '.' or ']'")

    def verb(self) -> IriNode:
        self.skip_ws()
        if self.text.startswith("a", self.pos):
            nxt = self.text[self.pos + 1:self.pos + 2]
            if nxt == "" or nxt in " \t\r\n<[\"'#":
                line, column = self.where()
                self.pos += 1
                return IriNode(RDF_TYPE, line, column)
        return self.iri_term("predicate")

    def object(self) -> Node:
        ch = self.peek()
        line, column = self.where()
        if ch == "[":
            self.pos += 1
            props = self.predicate_object_list()
            self.expect("]")
            return BlankNode(props, line, column)
        if ch and ch in "\"'":
            value = self.string()
            nxt = self.text[self.pos:self.pos + 2]
            if nxt.startswith("@"):
                self.fail("language tags are not supported")
            if nxt == "^^":
                self.fail("datatyped literals are not supported")
            return LiteralNode(value, line, column)
        if ch == "(":
            self.fail("collections are not supported", "object")
        if self.text.startswith("_:", self.pos):
            self.fail("blank node labels are not supported", "object")
        if _NUMBER.match(self.text, self.pos):
            self.fail("numeric literals are not supported", "object")
        for word in ("true", "false"):
            if self.text.startswith(word, self.pos) and not _PNAME.match(self.text, self.pos):
                self.fail("boolean literals are not supported", "object")
        return self.iri_term("object")

    def iri_term(self, role: str) -> IriNode:
        ch = self.peek()
        line, column = self.where()
        if ch == "<":
            return IriNode(self.iriref(), line, column)
        if ch == "(":
            self.fail("collections are not supported", role)
        if self.text.startswith("_:", self.pos):
            self.fail("blank node labels are not supported", role)
        m = _PNAME.match(self.text, self.pos)
        if not m:
            found = ch or "end of input"
            self.fail(f"unexpected {found!r}", f"{role} IRI")
        label = m.group(0).split(":", 1)[0]
        if label not in self.prefixes:
            self.fail(f"undeclared prefix {label + ':'!r}")
        self.pos = m.end()
        return IriNode(self.prefixes[label] + m.group(1), line, column)

    def iriref(self) -> str:
        start = self.pos
        self.pos += 1
        out = []
        text = self.text
        while True:
            if self.pos >= len(text):
                self.fail("unterminated IRI", "'>'", start)
            ch = text[self.pos]
            if ch == ">":
                self.pos += 1
                return "".join(out)
            if ch == "\\":
                out.append(self.unicode_escape())
                continue
            if ch in ' <"{}|^`' or ord(ch) <= 0x20:
                self.fail(f"illegal character {ch!r} in IRI")
            out.append(ch)
            self.pos += 1

    def unicode_escape(self) -> str:
        kind = self.text[self.pos + 1:self.pos + 2]
        size = {"u": 4, "U": 8}.get(kind)
        if size is None:
            self.fail("invalid escape in IRI", "\\u or \\U")
        digits = self.text[self.pos + 2:self.pos + 2 + size]
        if len(digits) != size or not all(c in "0123456789abcdefABCDEF" for c in digits):
            self.fail("malformed unicode escape")
        self.pos += 2 + size
        return chr(int(digits, 16))

    def string(self) -> str:
        text = self.text
        start = self.pos
        quote = text[self.pos]
        long = text.startswith(quote * 3, self.pos)
        delim = quote * 3 if long else quote
        self.pos += len(delim)
        out = []
        while True:
            if self.pos >= len(text):
                self.fail("unterminated string", delim, start)
            if text.startswith(delim, self.pos):
                self.pos += len(delim)
                return "".join(out)
            ch = text[self.pos]
            if ch == "\\":
                nxt = text[self.pos + 1:self.pos + 2]
                if nxt in _ECHAR:
                    out.append(_ECHAR[nxt])
                    self.pos += 2
                elif nxt in ("u", "U"):
                    out.append(self.unicode_escape())
                else:
                    self.fail("invalid string escape")
                continue
            if not long and ch in "\r\n":
                self.fail("line break in short string", delim)
            out.append(ch)
            self.pos += 1


def parse_turtle(text: str) -> TurtleDocument:
    if text.startswith("\ufeff"):
        text = text[1:]
    return _Reader(text).document()


def escape_string(value: str) -> str:
    return (value.replace("\\", "\\\\").replace('"', '\\"')
            .replace("\n", "\\n").replace("\r", "\\r").replace("\t", "\\t"))
