"""Inductive term structure of mapping assertions and its lexical evaluation.

A term is a constant, a reference to a source attribute, a string template
over attributes, or the application of a registered function to other terms.
Evaluation helpers here are shared by the function engine (eager) and the
materializer (lazy and plain), so both paths produce identical lexical forms.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from functools import lru_cache
from operator import itemgetter
from typing import Callable, Iterator, Mapping, Optional, Sequence, Tuple, Union

DEFAULT_BASE_IRI = "http://example.com/base/"

_ABSOLUTE_IRI = re.compile(r"^[A-Za-z][A-Za-z0-9+.\-]*:")
# IRIREF excludes controls, space and <>"{}|^`\
_IRIREF_FORBIDDEN = re.compile(r'[\x00-\x20<>"{}|^`\\]')


class TermKind(enum.Enum):
    IRI = "iri"
    LITERAL = "literal"


@dataclass(frozen=True)
class Constant:
    value: str
    kind: TermKind = TermKind.IRI


@dataclass(frozen=True)
class Reference:
    name: str
    kind: TermKind = TermKind.LITERAL


@dataclass(frozen=True)
class Template:
    """An ``rr:template`` string such as ``http://ex.org/{Att1}-{Att2}``."""

    pattern: str
    kind: TermKind = TermKind.IRI

    def __post_init__(self):
        segments = parse_template(self.pattern)
        if not any(is_ref for is_ref, _ in segments):
            raise ValueError(f"template {self.pattern!r} references no attribute")

    @property
    def segments(self) -> Tuple[Tuple[bool, str], ...]:
        return parse_template(self.pattern)


@dataclass(frozen=True)
class FunctionApp:
    function: str
    args: Tuple["Term", ...]
    kind: TermKind = TermKind.LITERAL

    @property
    def is_composite(self) -> bool:
        return any(isinstance(a, FunctionApp) for a in self.args)


Term = Union[Constant, Reference, Template, FunctionApp]


@lru_cache(maxsize=4096)
def parse_template(pattern: str) -> Tuple[Tuple[bool, str], ...]:
    """Split a template into ``(is_reference, text)`` segments.

    Backslash escapes ``{``, ``}`` and ``\\`` as in R2RML.
    """
    segments = []
    buf = []
    i = 0
    n = len(pattern)
    while i < n:
        ch = pattern[i]
        if ch == "\\" and i + 1 < n and pattern[i + 1] in "{}\\":
            buf.append(pattern[i + 1])
            i += 2
            continue
        if ch == "{":
            end = pattern.find("}", i + 1)
            if end < 0:
                raise ValueError(f"unterminated '{{' in template {pattern!r}")
            name = pattern[i + 1:end]
            if not name:
                raise ValueError(f"empty reference in template {pattern!r}")
            if buf:
                segments.append((False, "".join(buf)))
                buf = []
            segments.append((True, name))
            i = end + 1
            continue
        if ch == "}":
            raise ValueError(f"unbalanced '}}' in template {pattern!r}")
        buf.append(ch)
        i += 1
    if buf:
        segments.append((False, "".join(buf)))
    return tuple(segments)


def format_template(segments) -> str:
    """Inverse of :func:`parse_template`."""
    out = []
    for is_ref, text in segments:
        if is_ref:
            out.append("{" + text + "}")
        else:
            out.append(text.replace("\\", "\\\\").replace("{", "\\{").replace("}", "\\}"))
    return "".join(out)


def iter_terms(term: Term) -> Iterator[Term]:
    """Pre-order, left-to-right walk over a term tree."""
    yield term
    if isinstance(term, FunctionApp):
        for arg in term.args:
            yield from iter_terms(arg)


def collect_references(term: Term) -> frozenset:
    """All attribute names referenced anywhere in ``term``."""
    return frozenset(ordered_references(term))


def ordered_references(term: Term) -> Tuple[str, ...]:
    """Referenced attribute names in first-occurrence, depth-first order."""
    seen = {}
    for t in iter_terms(term):
        if isinstance(t, Reference):
            seen.setdefault(t.name, None)
        elif isinstance(t, Template):
            for is_ref, text in t.segments:
                if is_ref:
                    seen.setdefault(text, None)
    return tuple(seen)


def function_apps(term: Term) -> Tuple[FunctionApp, ...]:
    """Every FunctionApp node of ``term``, depth-first pre-order."""
    return tuple(t for t in iter_terms(term) if isinstance(t, FunctionApp))


def contains_function(term: Optional[Term]) -> bool:
    return term is not None and any(isinstance(t, FunctionApp) for t in iter_terms(term))


# --- lexical evaluation -----------------------------------------------------

def _is_ucschar(cp: int) -> bool:
    if 0xA0 <= cp <= 0xD7FF or 0xF900 <= cp <= 0xFDCF or 0xFDF0 <= cp <= 0xFFEF:
        return True
    if 0x10000 <= cp <= 0xEFFFD:
        return (cp & 0xFFFF) < 0xFFFE
    return False


def _percent(ch: str) -> str:
    return "".join(f"%{b:02X}" for b in ch.encode("utf-8"))


_UNRESERVED_ASCII = frozenset(
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-._~"
)


_ALL_UNRESERVED = re.compile(r"[A-Za-z0-9\-._~]*")


def iri_safe(value: str) -> str:
    """Percent-encode every character outside ``iunreserved``."""
    if _ALL_UNRESERVED.fullmatch(value):
        return value
    out = []
    for ch in value:
        if ch in _UNRESERVED_ASCII or (ord(ch) >= 0xA0 and _is_ucschar(ord(ch))):
            out.append(ch)
        else:
            out.append(_percent(ch))
    return "".join(out)


def finalize_iri(value: str, base: str = DEFAULT_BASE_IRI) -> str:
    """Resolve a relative value against ``base`` and escape IRIREF-forbidden chars."""
    if not _ABSOLUTE_IRI.match(value):
        value = base + value
    if _IRIREF_FORBIDDEN.search(value):
        value = _IRIREF_FORBIDDEN.sub(lambda m: _percent(m.group()), value)
    return value


def template_is_final(template: Template) -> bool:
    """True when every expansion of an IRI template is already a final absolute IRI.

    Values are percent-encoded down to iunreserved characters, so only the
    constant text can make an expansion relative or leave forbidden characters.
    """
    if template.kind is not TermKind.IRI or not template.segments:
        return False
    first_is_ref, first = template.segments[0]
    if first_is_ref or not _ABSOLUTE_IRI.match(first):
        return False
    return not any(_IRIREF_FORBIDDEN.search(text) for is_ref, text in template.segments if not is_ref)


def expand_template(template: Template, lookup: Callable[[str], Optional[str]]) -> Optional[str]:
    """Substitute attribute values; ``None`` when any referenced value is missing."""
    encode = template.kind is TermKind.IRI
    out = []
    for is_ref, text in template.segments:
        if not is_ref:
            out.append(text)
            continue
        value = lookup(text)
        if value is None:
            return None
        out.append(iri_safe(value) if encode else value)
    return "".join(out)


def function_output(value) -> Optional[str]:
    """Normalise a function body result: empty output counts as missing."""
    if value is None or value == "":
        return None
    return value


def compile_lexical(term: Term, positions: Mapping[str, int],
                    call: Optional[Callable[[str, tuple], Optional[str]]] = None
                    ) -> Callable[[Sequence[Optional[str]]], Optional[str]]:
    """Compile ``term`` into ``row -> lexical value | None``.

    ``positions`` maps attribute names to row indexes. ``call`` evaluates a
    function application on already evaluated arguments; without it, a
    FunctionApp is rejected.
    """
    if isinstance(term, Constant):
        value = term.value
        return lambda row: value
    if isinstance(term, Reference):
        return itemgetter(positions[term.name])
    if isinstance(term, Template):
        encode = term.kind is TermKind.IRI
        parts = [(is_ref, positions[text] if is_ref else text) for is_ref, text in term.segments]
        refs = [item for is_ref, item in parts if is_ref]
        if len(refs) == 1:
            # prefix{ref}suffix, the usual shape
            at = next(k for k, (is_ref, _) in enumerate(parts) if is_ref)
            prefix = "".join(item for _, item in parts[:at])
            suffix = "".join(item for _, item in parts[at + 1:])
            index = refs[0]
            if encode:
                def expand_one(row):
                    value = row[index]
                    return None if value is None else prefix + iri_safe(value) + suffix
            else:
                def expand_one(row):
                    value = row[index]
                    return None if value is None else prefix + value + suffix
            return expand_one

        def expand(row):
            out = []
            for is_ref, item in parts:
                if is_ref:
                    value = row[item]
                    if value is None:
                        return None
                    out.append(iri_safe(value) if encode else value)
                else:
                    out.append(item)
            return "".join(out)

        return expand
    if isinstance(term, FunctionApp):
        if call is None:
            raise TypeError(f"function application {term.function} cannot be evaluated here")
        arg_fns = [compile_lexical(a, positions, call) for a in term.args]
        fn = term.function

        def apply(row):
            args = []
            for g in arg_fns:
                value = g(row)
                if value is None:
                    return None
                args.append(value)
            return call(fn, tuple(args))

        return apply
    raise TypeError(f"not a term: {term!r}")
