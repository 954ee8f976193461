import shutil
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"

PREFIXES = """\
@prefix rr: <http://www.w3.org/ns/r2rml#> .
@prefix rml: <http://semweb.mmlab.be/ns/rml#> .
@prefix ql: <http://semweb.mmlab.be/ns/ql#> .
@prefix fnml: <http://semweb.mmlab.be/ns/fnml#> .
@prefix fno: <https://w3id.org/function/ontology#> .
@prefix grel: <http://users.ugent.be/~bjdmeest/function/grel.ttl#> .
@prefix exf: <http://example.com/functions#> .
@prefix ex: <http://ex.org/> .
"""


@pytest.fixture
def genes_dir(tmp_path):
    """Gene/mutation example: function subject, same-source and cross-source parents."""
    target = tmp_path / "genes"
    shutil.copytree(FIXTURES / "genes", target)
    return target


def write_csv(path, header, rows):
    lines = [",".join(header)] + [",".join("" if v is None else v for v in r) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
