import pytest
from hypothesis import given, settings, strategies as st

import oracles
from mapweave.errors import ValidationError
from mapweave.functions import default_registry
from mapweave.model import (
    AssertionKind as K,
    DataIntegrationSystem,
    JoinCondition,
    MappingAssertion,
    SourceSignature,
    StarCondition,
    count_function_apps,
    detect_chain_joins,
    detect_star_joins,
    function_free,
    is_maximal_path,
    validate_dis,
)
from mapweave.terms import FunctionApp, Reference, Template, TermKind

EX = "http://ex.org/"
SRC = tuple(SourceSignature(f"S{i}", f"S{i}.csv", ("a", "b", "k")) for i in range(4))


def concept(tm, source, subject, cls=None):
    return MappingAssertion(tm, tm, K.CONCEPT, (source,), subject, class_iri=cls)


def msr(aid, tm, child, subject, parent_ma, pred=EX + "p"):
    return MappingAssertion(aid, tm, K.MULTI_SOURCES_ROLE, (child, parent_ma.sources[0]), subject, predicate=pred,
                            parent=parent_ma.id, joins=(JoinCondition("k", "k"),))


def test_equality_ignores_order_and_prefixes():
    a = concept("A", "S0", Template(EX + "{a}"), EX + "C")
    b = concept("B", "S1", Template(EX + "{b}"), EX + "D")
    d1 = DataIntegrationSystem(SRC[:2], (a, b), {"ex": EX})
    d2 = DataIntegrationSystem(SRC[1::-1], (b, a))
    assert d1 == d2
    assert d1 != d1.replace(assertions=(a,))


def test_validation_lists_every_problem():
    bad = (
        MappingAssertion("X", "X", K.ATTRIBUTE, ("S0",), Template(EX + "{a}"), predicate=EX + "p",
                         object=Template(EX + "{a}")),
        MappingAssertion("Y", "Y", K.MULTI_SOURCES_ROLE, ("S0", "S1"), Template(EX + "{zzz}"), predicate=EX + "q",
                         parent="X"),
        MappingAssertion("Z", "Z", K.SINGLE_ROLE, ("S9",), Template(EX + "{a}"), predicate=EX + "r",
                         object=Template(EX + "{a}")),
        MappingAssertion("W", "W", K.CONCEPT, ("S0",), Reference("a", TermKind.LITERAL)),
    )
    with pytest.raises(ValidationError) as info:
        validate_dis(DataIntegrationSystem(SRC, bad))
    text = "\n".join(info.value.problems)
    for fragment in ("literal object", "not a concept", "unknown source S9", "must be an IRI"):
        assert fragment in text


def test_validation_checks_functions():
    ma = concept("A", "S0", FunctionApp(EX + "nope", (Reference("a"),), TermKind.IRI))
    with pytest.raises(ValidationError):
        validate_dis(DataIntegrationSystem(SRC, (ma,)), default_registry())
    lower = "http://users.ugent.be/~bjdmeest/function/grel.ttl#toLowerCase"
    ok = concept("A", "S0", FunctionApp(lower, (FunctionApp(lower, (Reference("a"),)),), TermKind.IRI))
    dis = DataIntegrationSystem(SRC, (ok,))
    validate_dis(dis, default_registry())
    assert count_function_apps(dis) == 2
    assert not function_free(dis)


def test_star_on_shared_parent_and_shared_subject():
    hub = concept("H", "S1", Template(EX + "h/{k}"), EX + "Hub")
    members = [msr(f"M{i}#pom1", f"M{i}", "S0", Template(EX + f"m{i}/{{a}}"), hub) for i in range(4)]
    dis = DataIntegrationSystem(SRC, (hub, *members))
    stars = detect_star_joins(dis)
    assert len(stars) == 1 and len(stars[0].members) == 4
    assert stars[0].conditions == {StarCondition.SHARED_PARENT}

    p1 = concept("P1", "S1", Template(EX + "p/{k}"))
    p2 = concept("P2", "S2", Template(EX + "q/{k}"))
    subject = Template(EX + "s/{a}")
    pair = (msr("T#pom1", "T", "S0", subject, p1), msr("T#pom2", "T", "S0", subject, p2))
    stars = detect_star_joins(DataIntegrationSystem(SRC, (p1, p2, *pair)))
    assert [s.conditions for s in stars] == [{StarCondition.SHARED_SUBJECT}]


def test_chain_of_three():
    c = [concept(f"C{i}", f"S{i}", Template(EX + f"c{i}/{{k}}")) for i in range(4)]
    links = [msr(f"C{i}#pom1", f"C{i}", f"S{i}", c[i].subject, c[i + 1]) for i in range(3)]
    chains = detect_chain_joins(DataIntegrationSystem(SRC, (*c, *links)))
    assert [ch.members for ch in chains] == [tuple(m.id for m in links)]
    assert not chains[0].cyclic


def test_cycle_reported_once():
    c = [concept(f"C{i}", f"S{i}", Template(EX + f"c{i}/{{k}}")) for i in range(2)]
    links = [msr("C0#pom1", "C0", "S0", c[0].subject, c[1]), msr("C1#pom1", "C1", "S1", c[1].subject, c[0])]
    chains = detect_chain_joins(DataIntegrationSystem(SRC, (*c, *links)))
    assert len(chains) == 1 and chains[0].cyclic


def test_maximal_path_helper():
    edges = {"a": ["b"], "b": ["c"], "c": []}
    assert is_maximal_path(["a", "b", "c"], edges)
    assert not is_maximal_path(["a", "b"], edges)
    assert not is_maximal_path(["b", "c"], edges)


@st.composite
def random_topology(draw):
    n_concepts = draw(st.integers(2, 4))
    subjects = [Template(EX + f"c{i}/{{k}}") for i in range(3)]
    concepts = [concept(f"C{i}", f"S{draw(st.integers(0, 3))}", subjects[draw(st.integers(0, 2))])
                for i in range(n_concepts)]
    roles = []
    for j in range(draw(st.integers(0, 6))):
        child = draw(st.sampled_from(concepts))
        parent = draw(st.sampled_from(concepts))
        if parent.sources[0] == child.sources[0]:
            continue
        roles.append(msr(f"{child.id}#r{j}", child.id, child.sources[0], child.subject, parent))
    return DataIntegrationSystem(SRC, tuple(concepts + roles))


@settings(max_examples=150, deadline=None)
@given(random_topology())
def test_star_and_chain_detection_match_exhaustive_search(dis):
    found = {frozenset(s.members): frozenset(c.value for c in s.conditions) for s in detect_star_joins(dis)}
    assert found == oracles.star_groups(dis)
    chains = {(c.members, c.cyclic) for c in detect_chain_joins(dis)}
    assert chains == oracles.chain_paths(dis)
