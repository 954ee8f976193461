"""Synthetic testbeds, lazy vs. eager pipeline runs, equivalence checks and reports."""

from __future__ import annotations

import csv
import gc
import itertools
import json
import logging
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .errors import MapweaveError, PipelineTimeout
from .functions import EX_FN, GREL, default_registry
from .mapping import load_mapping, write_mapping
from .materialize import Deadline, Mode, canonical_lines, canonical_ntriples, materialize_dis
from .model import (
    AssertionKind,
    DataIntegrationSystem,
    JoinCondition,
    MappingAssertion,
    SourceSignature,
)
from .sources import SourceStore, make_table, write_csv
from .terms import FunctionApp, Reference, Template, Term, TermKind
from .transform import transform_dis, write_outcome

log = logging.getLogger(__name__)

EX = "http://ex.org/"
TM = EX + "tm/"
MAPPING_NAME = "mapping.ttl"
MANIFEST_NAME = "manifest.json"
DEFAULT_TIMEOUT = 300.0

FUNCTIONS = {
    # kind -> (outer ... inner) for depth 3; depth 1 uses the first entry
    "bijective": (EX_FN + "reverseString", EX_FN + "identity", EX_FN + "reverseString"),
    "non-injective-surjective": (GREL + "toLowerCase", GREL + "string_trim", GREL + "toUpperCase"),
}


@dataclass(frozen=True)
class TestbedSpec:
    __test__ = False  # not a pytest class

    rows: int = 1000
    selectivity: float = 0.5
    repetitions: int = 2
    position: str = "role"
    plain_roles: int = 1
    star: bool = False
    chain: bool = False
    kind: str = "bijective"
    depth: int = 1
    padding: int = 3
    distinct_ratio: float = 0.1
    distinct: int = 0
    seed: int = 0

    def __post_init__(self):
        problems = []
        if self.rows < 1:
            problems.append("rows must be positive")
        if not 0 < self.selectivity <= 1:
            problems.append("selectivity must lie in (0, 1]")
        if not 0 < self.distinct_ratio <= 1:
            problems.append("distinct_ratio must lie in (0, 1]")
        if self.repetitions < 0:
            problems.append("repetitions must not be negative")
        if self.position not in ("concept", "role"):
            problems.append("position must be concept or role")
        if not 0 <= self.plain_roles <= 5:
            problems.append("plain_roles must lie in 0..5")
        if self.kind not in FUNCTIONS:
            problems.append(f"kind must be one of {', '.join(FUNCTIONS)}")
        if self.depth not in (1, 3):
            problems.append("depth must be 1 or 3")
        if not 3 <= self.padding <= 20:
            problems.append("padding must lie in 3..20")
        if self.distinct < 0 or self.distinct > self.rows:
            problems.append("distinct must lie in 0..rows")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def distinct_values(self) -> int:
        return self.distinct or max(1, round(self.distinct_ratio * self.rows))

    @property
    def matched_keys(self) -> int:
        return int(self.selectivity * self.rows)

    @property
    def name(self) -> str:
        parts = [f"r{self.rows}", f"s{self.selectivity:g}", f"x{self.repetitions}", self.position[0],
                 f"p{self.plain_roles}", "star" if self.star else "", "chain" if self.chain else "",
                 "bij" if self.kind == "bijective" else "nis", f"d{self.depth}",
                 f"u{self.distinct_values}", f"seed{self.seed}"]
        return "_".join(p for p in parts if p)


@dataclass
class RunMetrics:
    strategy: str
    wall_time: float = 0.0
    triples: int = 0
    invocations: Dict[str, int] = field(default_factory=dict)
    generated_sources: int = 0
    timed_out: bool = False
    error: Optional[str] = None
    ntriples: Optional[str] = field(default=None, repr=False)

    @property
    def valid(self) -> bool:
        return not self.timed_out and self.error is None

    @property
    def total_invocations(self) -> int:
        return sum(self.invocations.values())


@dataclass
class EquivalenceReport:
    equal: bool
    lazy_only: List[str]
    eager_only: List[str]
    lazy: RunMetrics
    eager: RunMetrics


# --- testbed generation -------------------------------------------------------

def _function_term(spec: TestbedSpec, arg: Term, kind: TermKind) -> FunctionApp:
    chain = FUNCTIONS[spec.kind]
    if spec.depth == 1:
        return FunctionApp(chain[0], (arg,), kind)
    inner = FunctionApp(chain[2], (arg,))
    middle = FunctionApp(chain[1], (inner,))
    return FunctionApp(chain[0], (middle,), kind)


def _value_pool(n: int) -> List[str]:
    # pairs differing only in case, so case-folding functions collapse them
    return [f"val{k // 2}" if k % 2 == 0 else f"VAL{k // 2}" for k in range(n)]


def _pad(rng: random.Random, rows: int, used: int, factor: int, prefix: str):
    count = used * factor - used
    names = [f"{prefix}{j + 1}" for j in range(count)]
    columns = [[f"{prefix}{j}_{rng.randrange(1000)}" for _ in range(rows)] for j in range(count)]
    return names, columns


def _sources(spec: TestbedSpec, rng: random.Random) -> Dict[str, Tuple[List[str], List[List[str]]]]:
    n = spec.rows
    ids = [f"c{i}" for i in range(n)]
    fks = [f"k{i}" for i in range(n)]
    pool = _value_pool(spec.distinct_values)
    vals = [pool[i % len(pool)] for i in range(n)]
    rng.shuffle(vals)
    roles = [[f"t{j}_{rng.randrange(max(1, n // 2))}" for _ in range(n)] for j in range(spec.plain_roles)]
    used = [("id", ids), ("fk", fks), ("val", vals)] + [(f"r{j + 1}", col) for j, col in enumerate(roles)]
    pad_names, pad_cols = _pad(rng, n, len(used), spec.padding, "cpad")
    child_cols = [name for name, _ in used] + pad_names
    child_data = [col for _, col in used] + pad_cols

    matched = rng.sample(fks, spec.matched_keys)
    pkeys = matched + [f"n{i}" for i in range(n - len(matched))]
    rng.shuffle(pkeys)
    pnames = [f"name{rng.randrange(n)}" for _ in range(n)]
    ppad_names, ppad_cols = _pad(rng, n, 2, spec.padding, "ppad")
    out = {
        "child.csv": (child_cols, child_data),
        "parent.csv": (["pk", "pname"] + ppad_names, [pkeys, pnames] + ppad_cols),
    }
    if spec.chain:
        prev = fks
        for level in (1, 2, 3):
            keys = rng.sample(prev, spec.matched_keys) + [f"x{level}_{i}" for i in range(n - spec.matched_keys)]
            rng.shuffle(keys)
            nxt = [f"l{level}_{i}" for i in range(n)]
            out[f"L{level}.csv"] = (["key", "next"], [keys, nxt])
            prev = nxt
    return out


def _mapping(spec: TestbedSpec, sources) -> DataIntegrationSystem:
    assertions: List[MappingAssertion] = []
    concept, msr = AssertionKind.CONCEPT, AssertionKind.MULTI_SOURCES_ROLE

    def add(tm, kind, srcs, subject, pom=None, **kw):
        aid = TM + tm if pom is None else f"{TM}{tm}#pom{pom}"
        assertions.append(MappingAssertion(aid, TM + tm, kind, srcs, subject, **kw))

    child, parent = ("child.csv",), ("parent.csv",)
    for i in range(1, spec.repetitions + 1):
        if spec.position == "role":
            add(f"TM_f{i}", AssertionKind.SINGLE_ROLE, child, Template(f"{EX}e{i}/{{id}}"), 1,
                predicate=f"{EX}f{i}", object=_function_term(spec, Reference("val"), TermKind.IRI))
        else:
            add(f"TM_f{i}", concept, child, _function_term(spec, Reference("val"), TermKind.IRI),
                class_iri=f"{EX}F{i}")

    child_subject = Template(EX + "child/{id}")
    add("TM_child", concept, child, child_subject, class_iri=EX + "Child")
    for j in range(1, spec.plain_roles + 1):
        add("TM_child", AssertionKind.SINGLE_ROLE, child, child_subject, j, predicate=f"{EX}r{j}",
            object=Template(f"{EX}role{j}/{{r{j}}}"))
    add("TM_child", msr, child + parent, child_subject, spec.plain_roles + 1, predicate=EX + "linked",
        parent=TM + "TM_parent", joins=(JoinCondition("fk", "pk"),))
    parent_subject = Template(EX + "parent/{pk}")
    add("TM_parent", concept, parent, parent_subject, class_iri=EX + "Parent")
    add("TM_parent", AssertionKind.ATTRIBUTE, parent, parent_subject, 1, predicate=EX + "name",
        object=Reference("pname"))

    if spec.star:
        hub = (_function_term(spec, Reference("pk"), TermKind.IRI) if spec.position == "concept"
               else Template(EX + "hub/{pk}"))
        add("TM_hub", concept, parent, hub, class_iri=EX + "Hub")
        for i in range(1, 5):
            add(f"TM_s{i}", msr, child + parent, Template(f"{EX}s{i}/{{id}}"), 1, predicate=f"{EX}hub{i}",
                parent=TM + "TM_hub", joins=(JoinCondition("fk", "pk"),))
    if spec.chain:
        add("TM_t0", msr, ("child.csv", "L1.csv"), Template(EX + "t0/{id}"), 1, predicate=EX + "next",
            parent=TM + "TM_t1", joins=(JoinCondition("fk", "key"),))
        for level in (1, 2, 3):
            subject = Template(f"{EX}t{level}/{{key}}")
            if level == 2 and spec.position == "concept":
                subject = _function_term(spec, Reference("key"), TermKind.IRI)
            src = (f"L{level}.csv",)
            add(f"TM_t{level}", concept, src, subject, class_iri=f"{EX}T{level}")
            if level < 3:
                add(f"TM_t{level}", msr, src + (f"L{level + 1}.csv",), subject, 1, predicate=EX + "next",
                    parent=f"{TM}TM_t{level + 1}", joins=(JoinCondition("next", "key"),))

    sigs = tuple(SourceSignature(name, name, tuple(cols)) for name, (cols, _) in sources.items())
    prefixes = {"ex": EX, "grel": GREL, "exf": EX_FN}
    return DataIntegrationSystem(sigs, tuple(assertions), prefixes, default_registry())


def generate_testbed(spec: TestbedSpec, directory) -> Path:
    """Write sources, mapping and manifest for ``spec`` under ``directory``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(spec.seed)
    sources = _sources(spec, rng)
    for name, (cols, data) in sources.items():
        write_csv(make_table(name, cols, zip(*data)), out / name)
    write_mapping(_mapping(spec, sources), out / MAPPING_NAME)
    manifest = {"spec": asdict(spec), "name": spec.name,
                "distinct_values": spec.distinct_values, "matched_keys": spec.matched_keys}
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def measured_selectivity(testbed) -> float:
    """Fraction of child join-key values that occur among parent keys."""
    testbed = Path(testbed)
    with open(testbed / "child.csv", newline="", encoding="utf-8") as fh:
        child = {row["fk"] for row in csv.DictReader(fh)}
    with open(testbed / "parent.csv", newline="", encoding="utf-8") as fh:
        parent = {row["pk"] for row in csv.DictReader(fh)}
    return len(child & parent) / len(child) if child else 0.0


def read_spec(testbed) -> TestbedSpec:
    data = json.loads((Path(testbed) / MANIFEST_NAME).read_text(encoding="utf-8"))
    return TestbedSpec(**data["spec"])


# --- pipelines ----------------------------------------------------------------

def run_pipeline(testbed, strategy: str, timeout: Optional[float] = DEFAULT_TIMEOUT,
                 work_dir=None, tamper: Optional[Callable] = None) -> RunMetrics:
    """Run one strategy end to end: lazy materialization, or transform then plain.

    The eager strategy also writes its generated sources and mapping under
    ``work_dir`` when one is given; that write is part of the timed run.
    """
    testbed = Path(testbed)
    metrics = RunMetrics(strategy)
    registry = default_registry()
    # collector pauses on millions of short-lived tuples dominate timing noise
    gc.collect()
    was_enabled = gc.isenabled()
    gc.disable()
    deadline = Deadline(timeout)
    start = time.monotonic()
    try:
        dis = load_mapping(testbed / MAPPING_NAME, registry, testbed)
        store = SourceStore(testbed)
        if strategy == "lazy":
            kg = materialize_dis(dis, store, registry, Mode.LAZY, deadline=deadline)
        elif strategy == "eager":
            outcome = transform_dis(dis, store, registry, deadline=deadline)
            if work_dir is not None:
                write_outcome(outcome, work_dir)
            new = outcome.dis if tamper is None else tamper(outcome.dis)
            kg = materialize_dis(new, outcome.store(), registry, Mode.PLAIN, deadline=deadline)
            metrics.generated_sources = len(outcome.generated)
        else:
            raise ValueError(f"unknown strategy {strategy!r}")
        deadline.check()
        metrics.ntriples = canonical_ntriples(kg)
        metrics.triples = len(kg)
    except PipelineTimeout:
        metrics.timed_out = True
    except MapweaveError as exc:
        metrics.error = str(exc)
    finally:
        metrics.wall_time = time.monotonic() - start
        if was_enabled:
            gc.enable()
    metrics.invocations = registry.counts()
    return metrics


def _diff_sample(lazy: str, eager: str, limit: int = 20) -> Tuple[List[str], List[str]]:
    a, b = set(lazy.splitlines()), set(eager.splitlines())
    return sorted(a - b)[:limit], sorted(b - a)[:limit]


def verify_equivalence(testbed, tamper: Optional[Callable] = None,
                       timeout: Optional[float] = DEFAULT_TIMEOUT) -> EquivalenceReport:
    lazy = run_pipeline(testbed, "lazy", timeout)
    eager = run_pipeline(testbed, "eager", timeout, tamper=tamper)
    if not (lazy.valid and eager.valid):
        return EquivalenceReport(False, [], [], lazy, eager)
    equal = lazy.ntriples == eager.ntriples
    lazy_only, eager_only = ([], []) if equal else _diff_sample(lazy.ntriples, eager.ntriples)
    return EquivalenceReport(equal, lazy_only, eager_only, lazy, eager)


def drop_join_conditions(dis: DataIntegrationSystem) -> DataIntegrationSystem:
    """Negative control: forget every join condition but the first per assertion.

    A multi-sources role with a single condition keeps it but has it point at
    a different parent attribute when one exists, so the join matches other rows.
    """
    changed = []
    for ma in dis.assertions:
        if ma.kind is AssertionKind.MULTI_SOURCES_ROLE and ma.joins:
            parent_cols = dis.source(ma.sources[1]).attributes
            j = ma.joins[0]
            others = [c for c in parent_cols if c != j.parent]
            joins = (JoinCondition(j.child, others[0]),) if others else ()
            ma = replace(ma, joins=joins)
        changed.append(ma)
    return dis.replace(assertions=tuple(changed))


# --- reports and configs --------------------------------------------------------

SPEC_FIELDS = [f.name for f in fields(TestbedSpec)]
REPORT_COLUMNS = SPEC_FIELDS + ["strategy", "wall_time", "triples", "invocations", "generated_sources",
                                "timed_out", "error", "equal", "speedup"]


@dataclass
class BenchResult:
    spec: TestbedSpec
    lazy: RunMetrics
    eager: RunMetrics
    equal: bool

    @property
    def speedup(self) -> Optional[float]:
        if not (self.lazy.valid and self.eager.valid) or self.eager.wall_time <= 0:
            return None
        return self.lazy.wall_time / self.eager.wall_time


def emit_report(results: Sequence[BenchResult], path) -> None:
    rows = []
    for res in results:
        for m in (res.lazy, res.eager):
            row = asdict(res.spec)
            speed = res.speedup
            row.update(strategy=m.strategy, wall_time=f"{m.wall_time:.4f}", triples=m.triples,
                       invocations=m.total_invocations, generated_sources=m.generated_sources,
                       timed_out=m.timed_out, error=m.error or "", equal=res.equal,
                       speedup="" if speed is None else f"{speed:.3f}")
            rows.append(row)
    rows.sort(key=lambda r: (r["rows"], r["selectivity"], r["strategy"]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, REPORT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


class ConfigError(ValueError):
    pass


def _coerce(key: str, text: str):
    kind = {f.name: f.type for f in fields(TestbedSpec)}[key]
    if kind in ("bool", bool):
        lowered = text.lower()
        if lowered not in ("on", "off", "true", "false", "1", "0", "yes", "no"):
            raise ConfigError(f"{key}: expected on/off, got {text!r}")
        return lowered in ("on", "true", "1", "yes")
    if kind in ("int", int):
        return int(text)
    if kind in ("float", float):
        return float(text)
    return text


def parse_config(text: str, seed: Optional[int] = None) -> List[TestbedSpec]:
    """One spec per line as ``key=value`` pairs; ``key=a,b`` expands into a grid.

    Blank lines and ``#`` comments are ignored. ``seed`` fills in specs that
    do not set their own.
    """
    specs: List[TestbedSpec] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        axes: Dict[str, List] = {}
        for token in line.split():
            key, sep, value = token.partition("=")
            if not sep or not value:
                raise ConfigError(f"line {lineno}: expected key=value, got {token!r}")
            if key not in SPEC_FIELDS:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            try:
                axes[key] = [_coerce(key, v) for v in value.split(",")]
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: {exc}") from None
        if seed is not None and "seed" not in axes:
            axes["seed"] = [seed]
        keys = list(axes)
        for combo in itertools.product(*(axes[k] for k in keys)):
            try:
                specs.append(TestbedSpec(**dict(zip(keys, combo))))
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: {exc}") from None
    if not specs:
        raise ConfigError("configuration defines no testbed")
    return specs


def run_spec(spec: TestbedSpec, root, timeout: Optional[float] = DEFAULT_TIMEOUT) -> BenchResult:
    testbed = generate_testbed(spec, Path(root) / spec.name)
    lazy = run_pipeline(testbed, "lazy", timeout)
    eager = run_pipeline(testbed, "eager", timeout)
    equal = lazy.valid and eager.valid and lazy.ntriples == eager.ntriples
    lazy.ntriples = eager.ntriples = None
    log.info("%s: lazy %.3fs eager %.3fs equal=%s", spec.name, lazy.wall_time, eager.wall_time, equal)
    return BenchResult(spec, lazy, eager, equal)


def run_bench(specs: Sequence[TestbedSpec], root, timeout: Optional[float] = DEFAULT_TIMEOUT,
              jobs: int = 1) -> List[BenchResult]:
    """Run every spec; with ``jobs > 1`` distinct testbeds run concurrently.

    The two strategies of one testbed always run one after the other.
    """
    if jobs <= 1:
        return [run_spec(s, root, timeout) for s in specs]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda s: run_spec(s, root, timeout), specs))


def canonical_diff(lazy_text: str, eager_text: str, limit: int = 20):
    return _diff_sample(lazy_text, eager_text, limit)


__all__ = [
    "TestbedSpec", "RunMetrics", "EquivalenceReport", "BenchResult", "ConfigError",
    "generate_testbed", "measured_selectivity", "read_spec", "run_pipeline", "verify_equivalence",
    "drop_join_conditions", "emit_report", "parse_config", "run_spec", "run_bench", "canonical_lines",
]
