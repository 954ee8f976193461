"""Function registry, memoized evaluation and eager S_g construction."""

from __future__ import annotations

import enum
import threading
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Tuple

from .errors import FunctionError
from .sources import SourceTable, inner_join, make_table, project_distinct
from .terms import (
    Constant,
    FunctionApp,
    Reference,
    Term,
    collect_references,
    compile_lexical,
    function_apps,
    function_output,
    ordered_references,
)

GREL = "http://users.ugent.be/~bjdmeest/function/grel.ttl#"
EX_FN = "http://example.com/functions#"
VALUE_PARAM = GREL + "valueParameter"
VALUE_PARAM2 = GREL + "valueParameter2"
OUTPUT_COLUMN = "fnout"


class FunctionKind(enum.Enum):
    BIJECTIVE = "bijective"
    NON_INJECTIVE_SURJECTIVE = "non-injective-surjective"
    UNCLASSIFIED = "unclassified"


@dataclass(frozen=True)
class FunctionDef:
    iri: str
    parameters: Tuple[str, ...]
    body: Callable[..., str]
    kind: FunctionKind = FunctionKind.UNCLASSIFIED
    multi_valued: bool = False

    @property
    def arity(self) -> int:
        return len(self.parameters)


class FunctionRegistry:
    """IRI -> FunctionDef, with per-function invocation counters."""

    def __init__(self, definitions=()):
        self._defs: Dict[str, FunctionDef] = {}
        self._counts: Counter = Counter()
        self._lock = threading.Lock()
        for fdef in definitions:
            self.register(fdef)

    def register(self, fdef: FunctionDef) -> None:
        if fdef.multi_valued:
            raise FunctionError(f"{fdef.iri}: list-valued functions are not supported")
        if len(set(fdef.parameters)) != len(fdef.parameters):
            raise FunctionError(f"{fdef.iri}: duplicate parameter IRI")
        with self._lock:
            if fdef.iri in self._defs:
                raise FunctionError(f"function {fdef.iri} is already registered")
            self._defs[fdef.iri] = fdef

    def get(self, iri: str) -> FunctionDef:
        try:
            return self._defs[iri]
        except KeyError:
            raise FunctionError(f"unregistered function {iri}") from None

    def __contains__(self, iri) -> bool:
        return iri in self._defs

    def __iter__(self) -> Iterator[FunctionDef]:
        return iter(list(self._defs.values()))

    def fresh(self) -> "FunctionRegistry":
        """Same definitions, zeroed counters."""
        return FunctionRegistry(self._defs.values())

    def invoke(self, iri: str, args: Tuple[str, ...]) -> Optional[str]:
        fdef = self.get(iri)
        if len(args) != fdef.arity:
            raise FunctionError(f"{iri}: expected {fdef.arity} argument(s), got {len(args)}")
        with self._lock:
            self._counts[iri] += 1
        try:
            value = fdef.body(*args)
        except Exception as exc:
            raise FunctionError(f"{iri} failed on arguments {args!r}: {exc}") from exc
        if value is not None and not isinstance(value, str):
            raise FunctionError(f"{iri} returned {type(value).__name__} for {args!r}, expected text")
        return function_output(value)

    def invocation_count(self, iri: str) -> int:
        self.get(iri)
        with self._lock:
            return self._counts[iri]

    def counts(self) -> Dict[str, int]:
        with self._lock:
            return dict(self._counts)


def invocation_count(registry: FunctionRegistry, iri: str) -> int:
    return registry.invocation_count(iri)


class MemoTable:
    """(function IRI, argument tuple) -> output, with single-flight per key."""

    def __init__(self):
        self._values: Dict[tuple, Optional[str]] = {}
        self._pending: Dict[tuple, threading.Event] = {}
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._values)

    def __contains__(self, key):
        return key in self._values

    def get(self, key):
        return self._values[key]

    def call(self, registry: FunctionRegistry, iri: str, args: Tuple[str, ...]) -> Optional[str]:
        key = (iri, args)
        while True:
            with self._lock:
                if key in self._values:
                    return self._values[key]
                event = self._pending.get(key)
                owner = event is None
                if owner:
                    event = self._pending[key] = threading.Event()
            if owner:
                break
            event.wait()
            # either the value is in now, or the owner failed and we retry
        try:
            value = registry.invoke(iri, args)
        except BaseException:
            with self._lock:
                del self._pending[key]
            event.set()
            raise
        with self._lock:
            self._values[key] = value
            del self._pending[key]
        event.set()
        return value


def _reverse(value: str) -> str:
    return value[::-1]


def builtin_definitions() -> List[FunctionDef]:
    bij, nis = FunctionKind.BIJECTIVE, FunctionKind.NON_INJECTIVE_SURJECTIVE
    one = (VALUE_PARAM,)
    return [
        FunctionDef(GREL + "toLowerCase", one, str.lower, nis),
        FunctionDef(GREL + "toUpperCase", one, str.upper, nis),
        FunctionDef(GREL + "string_trim", one, str.strip, nis),
        FunctionDef(EX_FN + "reverseString", one, _reverse, bij),
        FunctionDef(EX_FN + "identity", one, lambda v: v, bij),
        FunctionDef(EX_FN + "concat2", (VALUE_PARAM, VALUE_PARAM2), lambda a, b: a + b),
    ]


def register_builtin_catalogue(registry: FunctionRegistry) -> None:
    for fdef in builtin_definitions():
        registry.register(fdef)


def default_registry() -> FunctionRegistry:
    registry = FunctionRegistry()
    register_builtin_catalogue(registry)
    return registry


def app_key(term: Term) -> Term:
    """A term with its top-level term kind neutralised (lexical values ignore it)."""
    if isinstance(term, FunctionApp):
        return FunctionApp(term.function, term.args)
    return term


def fresh_column(base: str, taken) -> str:
    name, n = base, 1
    while name in taken:
        n += 1
        name = f"{base}{n}"
    return name


def evaluate_constant_app(app: FunctionApp, registry: FunctionRegistry, memo: MemoTable) -> Optional[str]:
    """Evaluate a FunctionApp that references no attribute."""
    return compile_lexical(app, {}, lambda fn, args: memo.call(registry, fn, args))(())


def evaluate_function_source(source: SourceTable, app: FunctionApp, registry: FunctionRegistry,
                             memo: Optional[MemoTable] = None, name: Optional[str] = None,
                             namer: Optional[Callable[[FunctionApp, int], str]] = None,
                             computed: Optional[dict] = None,
                             collect: Optional[list] = None) -> SourceTable:
    """Build S_g(X_g, fnout) for ``app`` over ``source``, innermost calls first.

    ``namer(app, offset)`` names the table of the FunctionApp at pre-order
    position ``offset`` inside ``app`` (0 is ``app`` itself). ``computed``
    caches tables by (application, root source) across calls; tables built
    for nested applications are appended to ``collect``.
    """
    memo = memo if memo is not None else MemoTable()
    computed = computed if computed is not None else {}
    if namer is None:
        base = name or f"{source.signature.id}__fn"
        namer = (lambda a, k: base if k == 0 else f"{base}_{k + 1}") if name else \
            (lambda a, k: f"{base}{k + 1}")
    return _evaluate(source, app, registry, memo, namer, computed, collect, 0)


def _joined_name(name, left_columns):
    return name + "_r" if name in left_columns else name


def _check_app(app: FunctionApp, registry: FunctionRegistry) -> None:
    fdef = registry.get(app.function)
    if fdef.arity != len(app.args):
        raise FunctionError(
            f"{app.function}: arity mismatch, declared {fdef.arity}, applied to {len(app.args)}"
        )


def _evaluate(source, app, registry, memo, namer, computed, collect, offset) -> SourceTable:
    key = (app_key(app), source.signature.root)
    if key in computed:
        return computed[key]
    _check_app(app, registry)
    attrs = ordered_references(app)
    for a in attrs:
        source.index(a)

    # distinct argument tuples with no missing argument
    work = project_distinct(source, attrs, name=f"{source.signature.id}__args")
    work = make_table(work.signature.id, attrs,
                      [r for r in work.rows if None not in r], origin=source.signature.root, check=False)
    columns = list(attrs)
    arg_terms: List[Term] = []
    position = offset + 1
    for arg in app.args:
        if not isinstance(arg, FunctionApp):
            arg_terms.append(arg)
            continue
        if not collect_references(arg):
            value = evaluate_constant_app(arg, registry, memo)
            if value is None:
                work = make_table(work.signature.id, columns, (), origin=source.signature.root)
                arg_terms.append(Constant(""))
            else:
                arg_terms.append(Constant(value))
        else:
            inner = _evaluate(source, arg, registry, memo, namer, computed, collect, position)
            if collect is not None and inner not in collect:
                collect.append(inner)
            inner_attrs = inner.columns[:-1]
            column = fresh_column(f"__arg{len(arg_terms)}", columns)
            work = inner_join(
                work, inner, [(a, a) for a in inner_attrs],
                columns=columns + [_joined_name(inner.columns[-1], columns)],
                name=work.signature.id,
            )
            work = make_table(work.signature.id, columns + [column], work.rows,
                              origin=source.signature.root, check=False)
            columns.append(column)
            arg_terms.append(Reference(column))
        position += len(function_apps(arg))

    positions = {c: i for i, c in enumerate(columns)}
    arg_fns = [compile_lexical(t, positions) for t in arg_terms]
    width = len(attrs)
    out_col = fresh_column(OUTPUT_COLUMN, attrs)
    rows = {}
    for row in work.rows:
        args = tuple(f(row) for f in arg_fns)
        if None in args:
            continue
        value = memo.call(registry, app.function, args)
        if value is None:
            continue
        rows.setdefault(row[:width] + (value,), None)
    table_name = namer(app, offset)
    table = make_table(table_name, attrs + (out_col,), rows, origin=table_name, check=False)
    computed[key] = table
    return table
