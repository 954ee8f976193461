"""RML + FnO mapping documents: structure, lowering to assertions, canonical output."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import FunctionError, MappingError
from .model import (
    AssertionKind,
    DataIntegrationSystem,
    JoinCondition,
    MappingAssertion,
    SourceSignature,
    function_free,
    validate_dis,
)
from .sources import read_header
from .terms import (
    Constant,
    FunctionApp,
    Reference,
    Template,
    Term,
    TermKind,
    ordered_references,
)
from .turtle import RDF_TYPE, BlankNode, IriNode, LiteralNode, Node, escape_string, parse_turtle

log = logging.getLogger(__name__)

RR = "http://www.w3.org/ns/r2rml#"
RML = "http://semweb.mmlab.be/ns/rml#"
QL = "http://semweb.mmlab.be/ns/ql#"
FNML = "http://semweb.mmlab.be/ns/fnml#"
FNO = "https://w3id.org/function/ontology#"

CORE_PREFIXES = {"rr": RR, "rml": RML, "ql": QL}
FUNCTION_PREFIXES = {"fnml": FNML, "fno": FNO}

_KNOWN_CLASSES = {
    RR + "TriplesMap", RR + "SubjectMap", RR + "PredicateObjectMap", RR + "ObjectMap",
    RR + "RefObjectMap", RR + "TermMap", RR + "Join", RML + "LogicalSource",
    FNML + "FunctionTermMap", FNO + "Execution",
}
_TERM_TYPES = {RR + "IRI": "iri", RR + "Literal": "literal"}


@dataclass(frozen=True)
class FunctionValueSpec:
    function: str
    parameters: Tuple[Tuple[str, "TermMapSpec"], ...]
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)


@dataclass(frozen=True)
class TermMapSpec:
    """One term map: ``form`` is template, reference, constant or function."""

    form: str
    value: str = ""
    literal_constant: bool = False
    function: Optional[FunctionValueSpec] = None
    term_type: Optional[str] = None
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)


@dataclass(frozen=True)
class ObjectMapSpec:
    term: Optional[TermMapSpec] = None
    parent: Optional[str] = None
    joins: Tuple[Tuple[str, str], ...] = ()
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)


@dataclass(frozen=True)
class PredicateObjectMapSpec:
    predicate: str
    object: ObjectMapSpec


@dataclass(frozen=True)
class TriplesMapSpec:
    iri: str
    source: str
    subject: TermMapSpec
    classes: Tuple[str, ...] = ()
    poms: Tuple[PredicateObjectMapSpec, ...] = ()
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)


@dataclass(frozen=True)
class MappingDocument:
    prefixes: Dict[str, str]
    triples_maps: Tuple[TriplesMapSpec, ...]

    def triples_map(self, iri: str) -> TriplesMapSpec:
        for tm in self.triples_maps:
            if tm.iri == iri:
                return tm
        raise KeyError(iri)


# --- parsing ----------------------------------------------------------------

def _err(message: str, node) -> MappingError:
    return MappingError(message, getattr(node, "line", None) or None, getattr(node, "column", None))


class _Props:
    """Checks a node's predicates against an allowed set and pulls values out."""

    def __init__(self, node: BlankNode, allowed: Sequence[str], what: str):
        self.node = node
        self.what = what
        for pred, obj in node.properties:
            if pred.value == RDF_TYPE:
                if not isinstance(obj, IriNode) or obj.value not in _KNOWN_CLASSES:
                    raise _err(f"unsupported type on {what}", obj)
            elif pred.value not in allowed:
                raise _err(f"unsupported property <{pred.value}> on {what}", pred)

    def all(self, pred: str) -> List[Node]:
        return self.node.values(pred)

    def optional(self, pred: str) -> Optional[Node]:
        values = self.all(pred)
        if len(values) > 1:
            raise _err(f"{self.what} has more than one <{pred}>", values[1])
        return values[0] if values else None

    def one(self, pred: str) -> Node:
        value = self.optional(pred)
        if value is None:
            raise _err(f"{self.what} lacks <{pred}>", self.node)
        return value


def _literal(node: Node, what: str) -> str:
    if not isinstance(node, LiteralNode):
        raise _err(f"{what} must be a string literal", node)
    return node.value


def _iri(node: Node, what: str) -> str:
    if not isinstance(node, IriNode):
        raise _err(f"{what} must be an IRI", node)
    return node.value


def _blank(node: Node, what: str) -> BlankNode:
    if not isinstance(node, BlankNode):
        raise _err(f"{what} must be a blank node property list", node)
    return node


_TERM_FORMS = (RR + "template", RML + "reference", RR + "constant", FNML + "functionValue")


def _term_map(node: BlankNode, props: _Props, what: str) -> TermMapSpec:
    present = [p for p in _TERM_FORMS if props.all(p)]
    if len(present) != 1:
        raise _err(f"{what} needs exactly one of rr:template, rml:reference, rr:constant, "
                   "fnml:functionValue", node)
    term_type = None
    tt = props.optional(RR + "termType")
    if tt is not None:
        tt_iri = _iri(tt, "rr:termType")
        if tt_iri == RR + "BlankNode":
            raise _err("blank-node term maps are not supported", tt)
        if tt_iri not in _TERM_TYPES:
            raise _err(f"unknown term type <{tt_iri}>", tt)
        term_type = _TERM_TYPES[tt_iri]
    pred = present[0]
    value = props.one(pred)
    pos = dict(line=node.line, column=node.column)
    if pred == RR + "template":
        pattern = _literal(value, "rr:template")
        try:
            Template(pattern)
        except ValueError as exc:
            raise _err(str(exc), value) from None
        return TermMapSpec("template", pattern, term_type=term_type, **pos)
    if pred == RML + "reference":
        return TermMapSpec("reference", _literal(value, "rml:reference"), term_type=term_type, **pos)
    if pred == RR + "constant":
        is_literal = isinstance(value, LiteralNode)
        if isinstance(value, BlankNode):
            raise _err("rr:constant must be an IRI or a literal", value)
        if term_type is not None and (term_type == "literal") != is_literal:
            raise _err("rr:termType contradicts the constant", tt)
        return TermMapSpec("constant", value.value, literal_constant=is_literal, term_type=term_type, **pos)
    return TermMapSpec("function", function=_function_value(_blank(value, "fnml:functionValue")),
                       term_type=term_type, **pos)


def _function_value(node: BlankNode) -> FunctionValueSpec:
    props = _Props(node, [RR + "predicateObjectMap"], "function value")
    executes: List[Tuple[str, Node]] = []
    params: List[Tuple[str, TermMapSpec]] = []
    for pom_node in props.all(RR + "predicateObjectMap"):
        pom = _blank(pom_node, "rr:predicateObjectMap")
        pprops = _Props(pom, [RR + "predicate", RR + "objectMap"], "function parameter map")
        predicate = _iri(pprops.one(RR + "predicate"), "rr:predicate")
        om = _blank(pprops.one(RR + "objectMap"), "rr:objectMap")
        oprops = _Props(om, list(_TERM_FORMS) + [RR + "termType"], "function parameter")
        term = _term_map(om, oprops, "function parameter")
        if predicate == FNO + "executes":
            if term.form != "constant" or term.literal_constant:
                raise _err("fno:executes must name the function by a constant IRI", om)
            executes.append((term.value, pom))
        else:
            params.append((predicate, term))
    if len(executes) != 1:
        where = executes[1][1] if len(executes) > 1 else node
        raise _err(f"function value declares {len(executes)} fno:executes, expected exactly one", where)
    return FunctionValueSpec(executes[0][0], tuple(params), node.line, node.column)


def _object_map(node: BlankNode) -> ObjectMapSpec:
    props = _Props(node, list(_TERM_FORMS) + [RR + "termType", RR + "parentTriplesMap",
                                               RR + "joinCondition"], "object map")
    parent = props.optional(RR + "parentTriplesMap")
    if parent is None:
        if props.all(RR + "joinCondition"):
            raise _err("rr:joinCondition without rr:parentTriplesMap", node)
        return ObjectMapSpec(term=_term_map(node, props, "object map"), line=node.line, column=node.column)
    if any(props.all(p) for p in _TERM_FORMS) or props.all(RR + "termType"):
        raise _err("a referencing object map cannot also be a term map", node)
    joins = []
    for jnode in props.all(RR + "joinCondition"):
        jn = _blank(jnode, "rr:joinCondition")
        jprops = _Props(jn, [RR + "child", RR + "parent"], "join condition")
        joins.append((_literal(jprops.one(RR + "child"), "rr:child"),
                      _literal(jprops.one(RR + "parent"), "rr:parent")))
    return ObjectMapSpec(parent=_iri(parent, "rr:parentTriplesMap"), joins=tuple(joins),
                         line=node.line, column=node.column)


def _triples_map(iri: str, node: BlankNode) -> TriplesMapSpec:
    props = _Props(node, [RML + "logicalSource", RR + "subjectMap", RR + "predicateObjectMap"],
                   f"triples map <{iri}>")
    ls = _blank(props.one(RML + "logicalSource"), "rml:logicalSource")
    lprops = _Props(ls, [RML + "source", RML + "referenceFormulation"], "logical source")
    source = _literal(lprops.one(RML + "source"), "rml:source")
    formulation = lprops.optional(RML + "referenceFormulation")
    if formulation is not None and _iri(formulation, "rml:referenceFormulation") != QL + "CSV":
        raise _err("only ql:CSV logical sources are supported", formulation)

    sm = _blank(props.one(RR + "subjectMap"), "rr:subjectMap")
    sprops = _Props(sm, list(_TERM_FORMS) + [RR + "termType", RR + "class"], "subject map")
    subject = _term_map(sm, sprops, "subject map")
    if subject.term_type == "literal" or (subject.form == "constant" and subject.literal_constant):
        raise _err("subject maps must produce IRIs", sm)
    classes = tuple(_iri(c, "rr:class") for c in sprops.all(RR + "class"))

    poms = []
    for pnode in props.all(RR + "predicateObjectMap"):
        pom = _blank(pnode, "rr:predicateObjectMap")
        pprops = _Props(pom, [RR + "predicate", RR + "objectMap"], "predicate-object map")
        predicate = _iri(pprops.one(RR + "predicate"), "rr:predicate")
        om = _object_map(_blank(pprops.one(RR + "objectMap"), "rr:objectMap"))
        poms.append(PredicateObjectMapSpec(predicate, om))
    return TriplesMapSpec(iri, source, subject, classes, tuple(poms), node.line, node.column)


def parse_mapping_document(text: str) -> MappingDocument:
    doc = parse_turtle(text)
    maps = []
    for iri, node in doc.subjects.items():
        types = [o.value for p, o in node.properties if p.value == RDF_TYPE and isinstance(o, IriNode)]
        if not node.values(RML + "logicalSource") and RR + "TriplesMap" not in types:
            raise _err(f"<{iri}> is not a triples map", node)
        maps.append(_triples_map(iri, node))
    known = {tm.iri for tm in maps}
    for tm in maps:
        for pom in tm.poms:
            if pom.object.parent is not None and pom.object.parent not in known:
                raise _err(f"unresolved parent triples map <{pom.object.parent}>", pom.object)
    return MappingDocument(doc.prefixes, tuple(maps))


# --- lowering ---------------------------------------------------------------

def _lower_term(spec: TermMapSpec, position: str, registry) -> Term:
    subject = position == "subject"
    explicit = TermKind(spec.term_type) if spec.term_type else None
    if spec.form == "template":
        return Template(spec.value, explicit or TermKind.IRI)
    if spec.form == "reference":
        return Reference(spec.value, explicit or (TermKind.IRI if subject else TermKind.LITERAL))
    if spec.form == "constant":
        return Constant(spec.value, TermKind.LITERAL if spec.literal_constant else TermKind.IRI)
    fv = spec.function
    if registry is None:
        raise MappingError("function term maps need a function registry", spec.line, spec.column)
    try:
        fdef = registry.get(fv.function)
    except FunctionError as exc:
        raise MappingError(str(exc), fv.line, fv.column) from None
    bound: Dict[str, TermMapSpec] = {}
    for param, arg in fv.parameters:
        if param not in fdef.parameters:
            raise MappingError(f"<{param}> is not a parameter of {fv.function}", arg.line, arg.column)
        if param in bound:
            raise MappingError(f"parameter <{param}> bound twice", arg.line, arg.column)
        bound[param] = arg
    missing = [p for p in fdef.parameters if p not in bound]
    if missing:
        raise MappingError(f"{fv.function} misses parameter(s) {', '.join(missing)}", fv.line, fv.column)
    args = tuple(_lower_term(bound[p], "argument", registry) for p in fdef.parameters)
    return FunctionApp(fv.function, args, explicit or (TermKind.IRI if subject else TermKind.LITERAL))


def lower_to_assertions(doc: MappingDocument, registry=None, source_dir=None) -> DataIntegrationSystem:
    """Classify every triples map into mapping assertions and validate the result.

    With ``source_dir``, source signatures carry the CSV headers; otherwise
    they list the attributes the mapping references.
    """
    by_iri = {tm.iri: tm for tm in doc.triples_maps}
    referenced = {pom.object.parent for tm in doc.triples_maps for pom in tm.poms if pom.object.parent}
    assertions: List[MappingAssertion] = []
    for tm in doc.triples_maps:
        subject = _lower_term(tm.subject, "subject", registry)
        src = (tm.source,)
        if tm.classes:
            for j, cls in enumerate(tm.classes):
                aid = tm.iri if j == 0 else f"{tm.iri}#class{j + 1}"
                assertions.append(MappingAssertion(aid, tm.iri, AssertionKind.CONCEPT, src, subject, class_iri=cls))
        elif tm.iri in referenced:
            assertions.append(MappingAssertion(tm.iri, tm.iri, AssertionKind.CONCEPT, src, subject))
        elif not tm.poms:
            log.warning("triples map %s has no class and no predicate-object maps", tm.iri)
        for i, pom in enumerate(tm.poms, 1):
            aid = f"{tm.iri}#pom{i}"
            om = pom.object
            if om.parent is not None:
                parent = by_iri[om.parent]
                joins = tuple(JoinCondition(c, p) for c, p in om.joins)
                if parent.source == tm.source:
                    if joins:
                        raise MappingError(
                            f"{aid}: join conditions over a single source are not supported", om.line, om.column)
                    assertions.append(MappingAssertion(aid, tm.iri, AssertionKind.REFERENCED_SOURCE_ROLE, src,
                                                       subject, predicate=pom.predicate, parent=parent.iri))
                else:
                    if not joins:
                        raise MappingError(
                            f"{aid}: parent triples map {parent.iri} uses another source; "
                            "a join condition is required", om.line, om.column)
                    assertions.append(MappingAssertion(aid, tm.iri, AssertionKind.MULTI_SOURCES_ROLE,
                                                       (tm.source, parent.source), subject,
                                                       predicate=pom.predicate, parent=parent.iri, joins=joins))
                continue
            obj = _lower_term(om.term, "object", registry)
            kind = AssertionKind.ATTRIBUTE if obj.kind is TermKind.LITERAL else AssertionKind.SINGLE_ROLE
            assertions.append(MappingAssertion(aid, tm.iri, kind, src, subject, predicate=pom.predicate, object=obj))

    sources = _signatures(doc, assertions, source_dir)
    dis = DataIntegrationSystem(tuple(sources), tuple(assertions), dict(doc.prefixes), registry)
    validate_dis(dis, registry)
    return dis


def _signatures(doc, assertions, source_dir) -> List[SourceSignature]:
    order: Dict[str, Dict[str, None]] = {}
    for tm in doc.triples_maps:
        order.setdefault(tm.source, {})
    if source_dir is not None:
        return [SourceSignature(s, s, read_header(Path(source_dir) / s)) for s in order]
    by_id = {ma.id: ma for ma in assertions}
    for ma in assertions:
        child = order[ma.sources[0]]
        for term in (ma.subject, ma.object):
            if term is not None:
                child.update(dict.fromkeys(ordered_references(term)))
        if ma.parent is not None:
            parent = by_id[ma.parent]
            target = order[parent.sources[0]]
            target.update(dict.fromkeys(ordered_references(parent.subject)))
            child.update(dict.fromkeys(j.child for j in ma.joins))
            target.update(dict.fromkeys(j.parent for j in ma.joins))
    return [SourceSignature(s, s, tuple(attrs)) for s, attrs in order.items()]


def load_mapping(path, registry=None, source_dir=None) -> DataIntegrationSystem:
    text = Path(path).read_text(encoding="utf-8")
    return lower_to_assertions(parse_mapping_document(text), registry, source_dir)


# --- serialization ----------------------------------------------------------

_LOCAL = re.compile(r"^[A-Za-z_][A-Za-z0-9_\-]*$")
_IRI_ESCAPE = frozenset('<>"{}|^`\\') | frozenset(chr(c) for c in range(0x21))


def _string(value: str) -> str:
    return '"' + escape_string(value) + '"'


class _Writer:
    def __init__(self, prefixes: Dict[str, str]):
        self.namespaces = sorted(((ns, label) for label, ns in prefixes.items()),
                                 key=lambda item: -len(item[0]))

    def iri(self, value: str) -> str:
        for ns, label in self.namespaces:
            if value.startswith(ns) and _LOCAL.match(value[len(ns):]):
                return f"{label}:{value[len(ns):]}"
        escaped = "".join(f"\\u{ord(c):04X}" if c in _IRI_ESCAPE else c for c in value)
        return f"<{escaped}>"

    def render(self, props, depth: int) -> List[str]:
        pad = "  " * depth
        lines = []
        for n, (pred, value) in enumerate(props):
            sep = " ;" if n < len(props) - 1 else ""
            if isinstance(value, list):
                lines.append(f"{pad}{pred} [")
                lines.extend(self.render(value, depth + 1))
                lines.append(f"{pad}]{sep}")
            else:
                lines.append(f"{pad}{pred} {value}{sep}")
        return lines


def _term_props(w: _Writer, term: Term, position: str, registry) -> list:
    subject = position == "subject"
    if isinstance(term, Template):
        props, default = [("rr:template", _string(term.pattern))], TermKind.IRI
    elif isinstance(term, Reference):
        props = [("rml:reference", _string(term.name))]
        default = TermKind.IRI if subject else TermKind.LITERAL
    elif isinstance(term, Constant):
        value = _string(term.value) if term.kind is TermKind.LITERAL else w.iri(term.value)
        return [("rr:constant", value)]
    else:
        if registry is None:
            raise MappingError("serializing function term maps needs the function registry")
        params = registry.get(term.function).parameters
        body = [("rr:predicateObjectMap", [("rr:predicate", "fno:executes"),
                                           ("rr:objectMap", [("rr:constant", w.iri(term.function))])])]
        for param, arg in zip(params, term.args):
            body.append(("rr:predicateObjectMap", [("rr:predicate", w.iri(param)),
                                                   ("rr:objectMap", _term_props(w, arg, "argument", registry))]))
        props = [("fnml:functionValue", body)]
        default = TermKind.IRI if subject else TermKind.LITERAL
    if term.kind is not default:
        props.append(("rr:termType", "rr:IRI" if term.kind is TermKind.IRI else "rr:Literal"))
    return props


def serialize_mapping_document(dis: DataIntegrationSystem) -> str:
    """Canonical text: sorted prefixes, triples maps by id, 2-space indentation."""
    uses_functions = not function_free(dis)
    prefixes = {label: ns for label, ns in dis.prefixes.items()
                if label not in CORE_PREFIXES and label not in FUNCTION_PREFIXES
                and ns not in (FNML, FNO)}
    prefixes.update(CORE_PREFIXES)
    if uses_functions:
        prefixes.update(FUNCTION_PREFIXES)
    w = _Writer(prefixes)
    registry = dis.functions

    groups: Dict[str, List[MappingAssertion]] = {}
    for ma in dis.assertions:
        groups.setdefault(ma.triples_map, []).append(ma)

    out = [f"@prefix {label}: <{ns}> ." for label, ns in sorted(prefixes.items())]
    for tm in sorted(groups):
        members = groups[tm]
        head = members[0]
        location = dis.source(head.sources[0]).location
        subject_map = _term_props(w, head.subject, "subject", registry)
        subject_map += [("rr:class", w.iri(ma.class_iri)) for ma in members
                        if ma.is_concept and ma.class_iri is not None]
        props = [
            ("rml:logicalSource", [("rml:source", _string(location)),
                                   ("rml:referenceFormulation", "ql:CSV")]),
            ("rr:subjectMap", subject_map),
        ]
        for ma in members:
            if ma.is_concept:
                continue
            if ma.parent is not None:
                om = [("rr:parentTriplesMap", w.iri(dis.parent_of(ma).triples_map))]
                om += [("rr:joinCondition", [("rr:child", _string(j.child)), ("rr:parent", _string(j.parent))])
                       for j in ma.joins]
            else:
                om = _term_props(w, ma.object, "object", registry)
            props.append(("rr:predicateObjectMap", [("rr:predicate", w.iri(ma.predicate)), ("rr:objectMap", om)]))
        out.append("")
        out.append(f"{w.iri(tm)} a rr:TriplesMap ;")
        body = w.render(props, 1)
        body[-1] += " ."
        out.extend(body)
    return "\n".join(out) + "\n"


def write_mapping(dis: DataIntegrationSystem, path) -> None:
    Path(path).write_text(serialize_mapping_document(dis), encoding="utf-8")

