"""The data integration system ``<O, S, M, F>`` and its structural analyses."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .errors import ValidationError
from .terms import (
    FunctionApp,
    Term,
    TermKind,
    collect_references,
    contains_function,
    iter_terms,
    ordered_references,
)

RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"


@dataclass(frozen=True)
class SourceSignature:
    """A named CSV source ``S_i(X_i)``.

    ``origin`` names the source whose rows this one was derived from
    (itself for loaded sources); it does not take part in equality.
    """

    id: str
    location: str
    attributes: Tuple[str, ...] = ()
    generated: bool = field(default=False, compare=False)
    origin: Optional[str] = field(default=None, compare=False)
    format: str = "CSV"

    def __post_init__(self):
        if len(set(self.attributes)) != len(self.attributes):
            raise ValidationError(f"duplicate attribute in signature of {self.id}")

    @property
    def root(self) -> str:
        return self.origin or self.id


@dataclass(frozen=True)
class JoinCondition:
    child: str
    parent: str


class AssertionKind(enum.Enum):
    CONCEPT = "concept"
    SINGLE_ROLE = "single-role"
    REFERENCED_SOURCE_ROLE = "referenced-source-role"
    MULTI_SOURCES_ROLE = "multi-sources-role"
    ATTRIBUTE = "attribute"


@dataclass(frozen=True)
class MappingAssertion:
    """One mapping assertion.

    Which fields are meaningful depends on ``kind``: concepts use
    ``class_iri`` (``None`` for a subject-only definition that exists to be
    referenced), roles and attributes use ``predicate``; single roles and
    attributes carry ``object``; referenced-source and multi-sources roles
    point at a concept assertion through ``parent`` and take their object
    from its subject term.
    """

    id: str
    triples_map: str
    kind: AssertionKind
    sources: Tuple[str, ...]
    subject: Term
    class_iri: Optional[str] = None
    predicate: Optional[str] = None
    object: Optional[Term] = None
    parent: Optional[str] = None
    joins: Tuple[JoinCondition, ...] = ()

    @property
    def is_concept(self) -> bool:
        return self.kind is AssertionKind.CONCEPT


@dataclass(frozen=True, eq=False)
class DataIntegrationSystem:
    """``DIS = <O, S, M, F>``.

    O is kept only as the prefix vocabulary. Equality is structural over
    sources and assertions and ignores order, prefixes and the registry.
    """

    sources: Tuple[SourceSignature, ...]
    assertions: Tuple[MappingAssertion, ...]
    prefixes: Mapping[str, str] = field(default_factory=dict)
    functions: object = None

    def __post_init__(self):
        object.__setattr__(self, "_sources", {s.id: s for s in self.sources})
        object.__setattr__(self, "_assertions", {a.id: a for a in self.assertions})

    def __eq__(self, other):
        if not isinstance(other, DataIntegrationSystem):
            return NotImplemented
        return self._sources == other._sources and self._assertions == other._assertions

    __hash__ = None

    def source(self, source_id: str) -> SourceSignature:
        return self._sources[source_id]

    def assertion(self, assertion_id: str) -> MappingAssertion:
        return self._assertions[assertion_id]

    def has_assertion(self, assertion_id: str) -> bool:
        return assertion_id in self._assertions

    def parent_of(self, ma: MappingAssertion) -> MappingAssertion:
        return self._assertions[ma.parent]

    def object_term(self, ma: MappingAssertion) -> Optional[Term]:
        """The object term, resolving referenced-source and multi-sources roles."""
        if ma.kind in (AssertionKind.REFERENCED_SOURCE_ROLE, AssertionKind.MULTI_SOURCES_ROLE):
            return self.parent_of(ma).subject
        return ma.object

    def parent_source(self, ma: MappingAssertion) -> Optional[str]:
        if ma.parent is None:
            return None
        return self.parent_of(ma).sources[0]

    def replace(self, **changes) -> "DataIntegrationSystem":
        values = dict(
            sources=self.sources,
            assertions=self.assertions,
            prefixes=self.prefixes,
            functions=self.functions,
        )
        values.update(changes)
        return DataIntegrationSystem(**values)


def collect_assertion_references(dis: DataIntegrationSystem, ma: MappingAssertion) -> Dict[str, Tuple[str, ...]]:
    """Attributes each source of ``ma`` must provide, in first-use order."""
    child: Dict[str, None] = {}

    def add(target, names):
        for n in names:
            target.setdefault(n, None)

    add(child, ordered_references(ma.subject))
    if ma.object is not None:
        add(child, ordered_references(ma.object))
    if ma.kind is AssertionKind.REFERENCED_SOURCE_ROLE:
        add(child, ordered_references(dis.parent_of(ma).subject))
    needs = {ma.sources[0]: child}
    if ma.kind is AssertionKind.MULTI_SOURCES_ROLE:
        add(child, (j.child for j in ma.joins))
        parent: Dict[str, None] = {}
        add(parent, ordered_references(dis.parent_of(ma).subject))
        add(parent, (j.parent for j in ma.joins))
        needs[ma.sources[1]] = parent
    return {sid: tuple(names) for sid, names in needs.items()}


def validate_dis(dis: DataIntegrationSystem, registry=None, check_attributes: bool = True) -> None:
    """Raise :class:`ValidationError` listing every violated invariant."""
    problems: List[str] = []
    seen = set()
    for ma in dis.assertions:
        if ma.id in seen:
            problems.append(f"duplicate assertion id {ma.id}")
        seen.add(ma.id)

    groups: Dict[str, MappingAssertion] = {}
    for ma in dis.assertions:
        for sid in ma.sources:
            if sid not in dis._sources:
                problems.append(f"{ma.id}: unknown source {sid}")
        if any(sid not in dis._sources for sid in ma.sources):
            continue
        expected = 2 if ma.kind is AssertionKind.MULTI_SOURCES_ROLE else 1
        if len(ma.sources) != expected:
            problems.append(f"{ma.id}: {ma.kind.value} assertion needs {expected} source(s)")
            continue
        if ma.subject.kind is not TermKind.IRI:
            problems.append(f"{ma.id}: subject term must be an IRI")
        if ma.kind is not AssertionKind.CONCEPT and ma.predicate is None:
            problems.append(f"{ma.id}: missing predicate")
        if ma.kind is AssertionKind.ATTRIBUTE:
            if ma.object is None or ma.object.kind is not TermKind.LITERAL:
                problems.append(f"{ma.id}: attribute assertion needs a literal object")
        if ma.kind is AssertionKind.SINGLE_ROLE:
            if ma.object is None or ma.object.kind is not TermKind.IRI:
                problems.append(f"{ma.id}: single-role assertion needs an IRI object")
        if ma.kind in (AssertionKind.REFERENCED_SOURCE_ROLE, AssertionKind.MULTI_SOURCES_ROLE):
            parent = dis._assertions.get(ma.parent)
            if parent is None or not parent.is_concept:
                problems.append(f"{ma.id}: referenced assertion {ma.parent} is not a concept assertion")
                continue
            if ma.kind is AssertionKind.REFERENCED_SOURCE_ROLE:
                if parent.sources[0] != ma.sources[0]:
                    problems.append(
                        f"{ma.id}: referenced assertion lives on another source; a join condition is required"
                    )
                if ma.joins:
                    problems.append(f"{ma.id}: referenced-source role carries join conditions")
            else:
                if ma.sources[0] == ma.sources[1]:
                    problems.append(f"{ma.id}: multi-sources role over a single source")
                if parent.sources[0] != ma.sources[1]:
                    problems.append(f"{ma.id}: parent source does not match referenced assertion")
                if not ma.joins:
                    problems.append(f"{ma.id}: multi-sources role without join condition")
        first = groups.setdefault(ma.triples_map, ma)
        if first is not ma and (first.sources[0] != ma.sources[0] or first.subject != ma.subject):
            problems.append(f"{ma.id}: triples map {ma.triples_map} mixes sources or subjects")

        if check_attributes:
            try:
                needs = collect_assertion_references(dis, ma)
            except KeyError:
                continue
            for sid, names in needs.items():
                attrs = dis._sources[sid].attributes
                for name in names:
                    if name not in attrs:
                        problems.append(f"{ma.id}: attribute {name!r} not in source {sid}")

        if registry is not None:
            for term in (ma.subject, ma.object):
                if term is None:
                    continue
                for t in iter_terms(term):
                    if not isinstance(t, FunctionApp):
                        continue
                    if t.function not in registry:
                        problems.append(f"{ma.id}: unregistered function {t.function}")
                    elif registry.get(t.function).arity != len(t.args):
                        problems.append(f"{ma.id}: arity mismatch for {t.function}")
    if problems:
        raise ValidationError(problems)


def assertions_with_functions(dis: DataIntegrationSystem) -> List[str]:
    """Ids of assertions whose subject or object involves a function, in document order."""
    found = []
    for ma in dis.assertions:
        obj = dis.object_term(ma) if ma.parent is None or dis.has_assertion(ma.parent) else ma.object
        if contains_function(ma.subject) or contains_function(obj):
            found.append(ma.id)
    return found


def count_function_apps(dis: DataIntegrationSystem) -> int:
    total = 0
    for ma in dis.assertions:
        for term in (ma.subject, ma.object):
            if term is not None:
                total += sum(isinstance(t, FunctionApp) for t in iter_terms(term))
    return total


# --- star and chain joins ---------------------------------------------------

class StarCondition(enum.Enum):
    SHARED_PARENT = "a"
    SHARED_SUBJECT = "b"


@dataclass(frozen=True)
class StarJoin:
    members: Tuple[str, ...]
    conditions: frozenset


@dataclass(frozen=True)
class ChainJoin:
    members: Tuple[str, ...]
    cyclic: bool = False


def _multi_source_roles(dis: DataIntegrationSystem) -> List[MappingAssertion]:
    return [ma for ma in dis.assertions if ma.kind is AssertionKind.MULTI_SOURCES_ROLE]


def subject_definition(dis: DataIntegrationSystem, ma: MappingAssertion):
    """Concept definition on the referencing side: (root source, subject term)."""
    return (dis.source(ma.sources[0]).root, ma.subject)


def parent_definition(dis: DataIntegrationSystem, ma: MappingAssertion):
    """Definition of the referenced concept (MJ): (root source, subject term)."""
    parent = dis.parent_of(ma)
    return (dis.source(parent.sources[0]).root, parent.subject)


def detect_star_joins(dis: DataIntegrationSystem) -> List[StarJoin]:
    """Groups of two or more multi-sources roles sharing their MJ or subject concept."""
    roles = _multi_source_roles(dis)
    tagged: Dict[Tuple[str, ...], set] = {}
    for condition, key in (
        (StarCondition.SHARED_PARENT, parent_definition),
        (StarCondition.SHARED_SUBJECT, subject_definition),
    ):
        buckets: Dict[object, List[str]] = {}
        for ma in roles:
            buckets.setdefault(key(dis, ma), []).append(ma.id)
        for members in buckets.values():
            if len(members) >= 2:
                tagged.setdefault(tuple(members), set()).add(condition)
    order = {ma.id: i for i, ma in enumerate(dis.assertions)}
    return [
        StarJoin(members, frozenset(conds))
        for members, conds in sorted(tagged.items(), key=lambda kv: [order[m] for m in kv[0]])
    ]


def chain_edges(dis: DataIntegrationSystem) -> Dict[str, List[str]]:
    """``a -> b`` when a's MJ definition equals b's subject concept definition."""
    roles = _multi_source_roles(dis)
    by_subject: Dict[object, List[str]] = {}
    for ma in roles:
        by_subject.setdefault(subject_definition(dis, ma), []).append(ma.id)
    return {ma.id: list(by_subject.get(parent_definition(dis, ma), ())) for ma in roles}


def _canonical_cycle(path: Sequence[str], order: Mapping[str, int]) -> Tuple[str, ...]:
    k = min(range(len(path)), key=lambda i: order[path[i]])
    return tuple(path[k:]) + tuple(path[:k])


def is_maximal_path(path: Sequence[str], edges: Mapping[str, Sequence[str]]) -> bool:
    inside = set(path)
    if any(nxt not in inside for nxt in edges[path[-1]]):
        return False
    return not any(path[0] in succ and src not in inside for src, succ in edges.items())


def detect_chain_joins(dis: DataIntegrationSystem) -> List[ChainJoin]:
    """Maximal simple paths of length >= 2 in the chain relation.

    A path whose tail links back to its head is flagged ``cyclic``; the
    rotations of one cycle are reported once.
    """
    edges = chain_edges(dis)
    order = {ma.id: i for i, ma in enumerate(dis.assertions)}
    found: Dict[Tuple[str, ...], bool] = {}

    def visit(path: List[str]):
        extended = False
        for nxt in edges[path[-1]]:
            if nxt not in path:
                extended = True
                path.append(nxt)
                visit(path)
                path.pop()
        if extended or len(path) < 2 or not is_maximal_path(path, edges):
            return
        cyclic = path[0] in edges[path[-1]]
        key = _canonical_cycle(path, order) if cyclic else tuple(path)
        found[key] = cyclic

    for start in sorted(edges, key=order.__getitem__):
        visit([start])
    return [ChainJoin(m, c) for m, c in sorted(found.items(), key=lambda kv: [order[x] for x in kv[0]])]


def function_free(dis: DataIntegrationSystem) -> bool:
    return not assertions_with_functions(dis)


def referenced_attributes(terms: Iterable[Optional[Term]]) -> frozenset:
    names = set()
    for t in terms:
        if t is not None:
            names |= collect_references(t)
    return frozenset(names)
