"""Rewrite a DIS with function applications into an equivalent function-free one.

Every assertion is first narrowed to a distinct projection of the attributes
it uses. Each remaining function application is then evaluated eagerly into
an intermediate source S_g (one per distinct application and source) and
removed by one of three rules:

* concept rule: a function in a subject is joined back onto the assertion's
  source and the subject becomes a reference to the output column;
* attribute rule: same join-back shape for a literal-valued object;
* role rule: an IRI-valued object becomes a multi-sources role whose parent
  is a class-less concept over S_g, joined on the function's arguments.

Composite applications are evaluated innermost first by the function engine
and then handled by whichever rule applies to the outermost call.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .errors import TransformError
from .functions import (
    OUTPUT_COLUMN,
    FunctionRegistry,
    MemoTable,
    evaluate_constant_app,
    evaluate_function_source,
    fresh_column,
)
from .mapping import write_mapping
from .model import (
    AssertionKind,
    DataIntegrationSystem,
    JoinCondition,
    MappingAssertion,
    SourceSignature,
    collect_assertion_references,
    count_function_apps,
    function_free,
    validate_dis,
)
from .sources import SourceStore, SourceTable, inner_join, make_table, project_distinct, write_csv
from .terms import Constant, FunctionApp, Reference, Term, collect_references, function_apps

log = logging.getLogger(__name__)

MAPPING_FILE = "transformed_mapping.ttl"
LOG_FILE = "rewrite.log"


@dataclass(frozen=True)
class GeneratedSource:
    table: SourceTable
    rule: str
    assertion: str
    function: Optional[str] = None


@dataclass(frozen=True)
class RewriteStep:
    rule: str
    before: str
    after: Tuple[str, ...]

    def __str__(self):
        return f"{self.rule}: {self.before} -> {', '.join(self.after) or '(dropped)'}"


@dataclass
class TransformOutcome:
    dis: DataIntegrationSystem
    generated: List[GeneratedSource]
    log: List[RewriteStep]
    tables: Dict[str, SourceTable]
    intermediates: List[GeneratedSource] = field(default_factory=list)

    def store(self) -> SourceStore:
        store = SourceStore()
        for table in self.tables.values():
            store.put(table)
        return store


@dataclass
class _Item:
    """An assertion being rewritten, before ids and triples maps are assigned."""

    origin: MappingAssertion
    kind: AssertionKind
    child: str
    subject: Term
    class_iri: Optional[str] = None
    predicate: Optional[str] = None
    object: Optional[Term] = None
    parent_source: Optional[str] = None
    parent_subject: Optional[Term] = None
    parent_hint: Optional[str] = None
    joins: Tuple[JoinCondition, ...] = ()
    rules: List[str] = field(default_factory=list)
    dropped: bool = False


def _stem(source_id: str) -> str:
    name = Path(source_id).name
    return name[:-4] if name.lower().endswith(".csv") else name


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_\-]+", "_", text).strip("_") or "ma"


class _Rewriter:
    def __init__(self, dis: DataIntegrationSystem, store: SourceStore, registry: FunctionRegistry):
        self.dis = dis
        self.store = store
        self.registry = registry
        self.memo = MemoTable()
        self.tables: Dict[str, SourceTable] = {}
        self.provenance: Dict[str, GeneratedSource] = {}
        self.intermediates: Dict[str, GeneratedSource] = {}
        self.projections: Dict[tuple, str] = {}
        self.joins: Dict[tuple, Tuple[str, str]] = {}
        self.function_sources: dict = {}
        self.counters: Dict[str, int] = {}
        self.applied = 0
        self.budget = 10 * count_function_apps(dis)

    # -- tables ------------------------------------------------------------
    def original(self, source_id: str) -> SourceTable:
        table = self.tables.get(source_id)
        if table is None:
            table = self.store.get(self.dis.source(source_id))
            self.tables[source_id] = table
        return table

    def fresh_name(self, root: str, kind: str) -> str:
        key = f"{_stem(root)}__{kind}"
        n = self.counters.get(key, 0) + 1
        self.counters[key] = n
        return f"{key}{n}.csv"

    def add(self, table: SourceTable, rule: str, ma: MappingAssertion, function=None) -> None:
        self.tables[table.signature.id] = table
        self.provenance.setdefault(table.signature.id, GeneratedSource(table, rule, ma.id, function))

    # -- rules -------------------------------------------------------------
    def source_based_projection(self, item: _Item) -> None:
        ma = item.origin
        needs = collect_assertion_references(self.dis, ma)
        item.child = self.project(ma.sources[0], needs[ma.sources[0]], ma)
        if ma.kind is AssertionKind.MULTI_SOURCES_ROLE:
            item.parent_source = self.project(ma.sources[1], needs[ma.sources[1]], ma)
        elif ma.kind is AssertionKind.REFERENCED_SOURCE_ROLE:
            item.parent_source = item.child
        item.rules.append("projection")

    def project(self, source_id: str, attrs, ma) -> str:
        table = self.original(source_id)
        if not attrs:
            return source_id
        key = (source_id, frozenset(attrs))
        if key not in self.projections:
            name = self.fresh_name(source_id, "proj")
            self.add(project_distinct(table, attrs, name=name), "projection", ma)
            self.projections[key] = name
        return self.projections[key]

    def namer(self, item: _Item, app: FunctionApp, on_object: bool):
        ma = item.origin
        base = 1
        if on_object:
            base += len(function_apps(ma.subject))
        slug = _slug(ma.id)
        return lambda a, offset: f"{slug}__fn{base + offset}.csv"

    def function_source(self, item: _Item, table_id: str, app: FunctionApp, on_object: bool) -> SourceTable:
        root = self.tables[table_id].signature.root
        collect: List[SourceTable] = []
        sg = evaluate_function_source(
            self.original(root), app, self.registry, self.memo,
            namer=self.namer(item, app, on_object), computed=self.function_sources, collect=collect,
        )
        for inner in collect:
            if inner.signature.id not in self.intermediates:
                self.intermediates[inner.signature.id] = GeneratedSource(inner, "function", item.origin.id)
        if sg.signature.id not in self.tables:
            self.add(sg, "function", item.origin, app.function)
            if not sg.rows:
                log.warning("function source %s is empty; %s yields no triples",
                            sg.signature.id, item.origin.id)
        if app.is_composite:
            item.rules.append("composite")
        return sg

    def join_back(self, item: _Item, table_id: str, app: FunctionApp, on_object: bool) -> Tuple[str, str]:
        sg = self.function_source(item, table_id, app, on_object)
        key = (table_id, sg.signature.id)
        if key not in self.joins:
            left = self.tables[table_id]
            out = fresh_column(OUTPUT_COLUMN, left.columns)
            right_out = sg.columns[-1] + "_r" if sg.columns[-1] in left.columns else sg.columns[-1]
            joined = inner_join(left, sg, [(a, a) for a in sg.columns[:-1]],
                                columns=list(left.columns) + [right_out])
            name = self.fresh_name(left.signature.root, "joined")
            joined = make_table(name, left.columns + (out,), joined.rows, origin=left.signature.root,
                                check=False)
            if not joined.rows:
                log.warning("join of %s with %s is empty", table_id, sg.signature.id)
            self.add(joined, "join", item.origin, app.function)
            self.joins[key] = (name, out)
        return self.joins[key]

    def fold(self, item: _Item, app: FunctionApp) -> Optional[Constant]:
        """Evaluate an application without attribute references once."""
        value = evaluate_constant_app(app, self.registry, self.memo)
        item.rules.append("constant")
        if value is None:
            item.dropped = True
            return None
        return Constant(value, app.kind)

    def concept_transformation(self, item: _Item) -> None:
        app = item.subject
        if not collect_references(app):
            item.subject = self.fold(item, app)
            return
        item.child, column = self.join_back(item, item.child, app, on_object=False)
        item.subject = Reference(column, app.kind)
        if item.kind is AssertionKind.REFERENCED_SOURCE_ROLE:
            item.parent_source = item.child
        item.rules.append("concept")

    def attribute_transformation(self, item: _Item) -> None:
        app = item.object
        if not collect_references(app):
            item.object = self.fold(item, app)
            return
        item.child, column = self.join_back(item, item.child, app, on_object=True)
        item.object = Reference(column, app.kind)
        if item.kind is AssertionKind.REFERENCED_SOURCE_ROLE:
            item.parent_source = item.child
        item.rules.append("attribute")

    def role_transformation(self, item: _Item) -> None:
        app = item.object if item.kind is AssertionKind.SINGLE_ROLE else item.parent_subject
        if not collect_references(app):
            value = self.fold(item, app)
            if item.kind is AssertionKind.SINGLE_ROLE:
                item.object = value
            else:
                item.parent_subject = value
            return
        sg = self.function_source(item, item.child, app, on_object=True)
        item.kind = AssertionKind.MULTI_SOURCES_ROLE
        item.object = None
        item.parent_source = sg.signature.id
        item.parent_subject = Reference(sg.columns[-1], app.kind)
        item.parent_hint = f"{item.origin.triples_map}_fn"
        item.joins = tuple(JoinCondition(a, a) for a in sg.columns[:-1])
        item.rules.append("role")

    def parent_join_back(self, item: _Item) -> None:
        app = item.parent_subject
        if not collect_references(app):
            item.parent_subject = self.fold(item, app)
            return
        item.parent_source, column = self.join_back(item, item.parent_source, app, on_object=True)
        item.parent_subject = Reference(column, app.kind)
        item.rules.append("concept")

    # -- driver ------------------------------------------------------------
    def next_rule(self, item: _Item):
        if isinstance(item.subject, FunctionApp):
            return self.concept_transformation
        if item.kind is AssertionKind.ATTRIBUTE and isinstance(item.object, FunctionApp):
            return self.attribute_transformation
        if item.kind is AssertionKind.SINGLE_ROLE and isinstance(item.object, FunctionApp):
            return self.role_transformation
        if isinstance(item.parent_subject, FunctionApp):
            if item.kind is AssertionKind.REFERENCED_SOURCE_ROLE:
                return self.role_transformation
            return self.parent_join_back
        return None

    def rewrite(self, ma: MappingAssertion) -> _Item:
        item = _Item(ma, ma.kind, ma.sources[0], ma.subject, ma.class_iri, ma.predicate, ma.object,
                     joins=ma.joins)
        if ma.parent is not None:
            parent = self.dis.parent_of(ma)
            item.parent_subject = parent.subject
            item.parent_hint = parent.triples_map
        self.source_based_projection(item)
        while not item.dropped:
            rule = self.next_rule(item)
            if rule is None:
                break
            self.applied += 1
            if self.applied > self.budget:
                raise TransformError(f"rewrite budget of {self.budget} steps exceeded at {ma.id}")
            rule(item)
        return item


@dataclass
class _Group:
    tm: str
    source: str
    subject: Term
    classes: List[str] = field(default_factory=list)
    members: List[_Item] = field(default_factory=list)
    referenced: bool = False


def _pom_key(item: _Item):
    return (item.kind, item.predicate, item.object, item.parent_source, item.parent_subject, item.joins)


class _Assembler:
    """Groups rewritten items into triples maps with stable ids."""

    def __init__(self):
        self.groups: Dict[tuple, _Group] = {}
        self.names: Dict[str, int] = {}

    def group(self, source: str, subject: Term, hint: str) -> _Group:
        key = (source, subject)
        if key not in self.groups:
            n = self.names.get(hint, 0) + 1
            self.names[hint] = n
            self.groups[key] = _Group(hint if n == 1 else f"{hint}_{n}", source, subject)
        return self.groups[key]

    def assemble(self, items: List[_Item]):
        pom_keys: Dict[str, set] = {}
        for item in items:
            if item.dropped:
                continue
            if item.kind is AssertionKind.CONCEPT and item.class_iri is None:
                # class-less concepts only exist to be referenced; references re-create them
                continue
            g = self.group(item.child, item.subject, item.origin.triples_map)
            if item.kind is AssertionKind.CONCEPT:
                if item.class_iri not in g.classes:
                    g.classes.append(item.class_iri)
                continue
            keys = pom_keys.setdefault(g.tm, set())
            if _pom_key(item) in keys:
                continue
            keys.add(_pom_key(item))
            g.members.append(item)
            if item.parent_source is not None:
                self.group(item.parent_source, item.parent_subject, item.parent_hint).referenced = True

        assertions: List[MappingAssertion] = []
        ids: Dict[int, List[str]] = {}
        for g in self.groups.values():
            src = (g.source,)
            for j, cls in enumerate(g.classes):
                aid = g.tm if j == 0 else f"{g.tm}#class{j + 1}"
                assertions.append(MappingAssertion(aid, g.tm, AssertionKind.CONCEPT, src, g.subject, class_iri=cls))
            if not g.classes and g.referenced:
                assertions.append(MappingAssertion(g.tm, g.tm, AssertionKind.CONCEPT, src, g.subject))
            for i, item in enumerate(g.members, 1):
                aid = f"{g.tm}#pom{i}"
                parent = None
                sources = src
                if item.parent_source is not None:
                    parent = self.groups[(item.parent_source, item.parent_subject)].tm
                    if item.kind is AssertionKind.MULTI_SOURCES_ROLE:
                        sources = (g.source, item.parent_source)
                assertions.append(MappingAssertion(
                    aid, g.tm, item.kind, sources, g.subject, predicate=item.predicate,
                    object=item.object, parent=parent, joins=item.joins))
                ids.setdefault(id(item), []).append(aid)
        for item in items:
            if item.kind is AssertionKind.CONCEPT and item.class_iri is not None and not item.dropped:
                g = self.groups[(item.child, item.subject)]
                ids.setdefault(id(item), []).append(g.tm)
        return assertions, ids


def transform_dis(dis: DataIntegrationSystem, store: SourceStore,
                  registry: Optional[FunctionRegistry] = None, deadline=None) -> TransformOutcome:
    """Rewrite ``dis`` into a function-free DIS over generated sources.

    ``deadline`` (anything with a ``check()`` method) is polled between assertions.
    """
    registry = registry if registry is not None else dis.functions
    if registry is None and not function_free(dis):
        raise TransformError("a function registry is required to evaluate function term maps")
    rw = _Rewriter(dis, store, registry)
    items = []
    for ma in dis.assertions:
        if deadline is not None:
            deadline.check()
        items.append(rw.rewrite(ma))
    assertions, ids = _Assembler().assemble(items)

    used: Dict[str, None] = {}
    for ma in assertions:
        used.update(dict.fromkeys(ma.sources))
    sources = []
    for sid in used:
        table = rw.tables[sid]
        sig = table.signature
        sources.append(SourceSignature(sid, sid, table.columns, generated=sid in rw.provenance,
                                       origin=sig.origin))
    new = DataIntegrationSystem(tuple(sources), tuple(assertions), dict(dis.prefixes), registry)
    validate_dis(new, registry)
    if not function_free(new):
        raise TransformError("rewrite left function term maps behind")

    steps = []
    for item in items:
        after = tuple(ids.get(id(item), ()))
        for rule in item.rules:
            steps.append(RewriteStep(rule, item.origin.id, after))
    generated = [rw.provenance[sid] for sid in used if sid in rw.provenance]
    tables = {sid: rw.tables[sid] for sid in used}
    # evaluated along the way but not read by the new DIS: joined-back S_g, inner composite stages
    unused = {sid: g for sid, g in rw.provenance.items() if g.rule == "function" and sid not in used}
    unused.update((sid, g) for sid, g in rw.intermediates.items() if sid not in used)
    intermediates = list(unused.values())
    return TransformOutcome(new, generated, steps, tables, intermediates)


def write_outcome(outcome: TransformOutcome, out_dir) -> None:
    """Persist the transformed mapping, every source it reads and the rewrite log."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for sid, table in outcome.tables.items():
        target = out / sid
        target.parent.mkdir(parents=True, exist_ok=True)
        write_csv(table, target)
    for extra in outcome.intermediates:
        write_csv(extra.table, out / extra.table.signature.id)
    write_mapping(outcome.dis, out / MAPPING_FILE)
    (out / LOG_FILE).write_text("".join(f"{step}\n" for step in outcome.log), encoding="utf-8")
