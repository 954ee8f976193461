"""Row-oriented CSV sources: loading, distinct projection, equi-joins, persistence."""

from __future__ import annotations

import csv
import os
import threading
from dataclasses import InitVar, dataclass
from pathlib import Path
from operator import itemgetter
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import SourceError
from .model import SourceSignature

Row = Tuple[Optional[str], ...]


@dataclass(frozen=True)
class SourceTable:
    signature: SourceSignature
    columns: Tuple[str, ...]
    rows: Tuple[Row, ...]
    check: InitVar[bool] = True

    def __post_init__(self, check):
        if not check:
            return
        width = len(self.columns)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise SourceError(f"{self.signature.id}: row {i} has {len(row)} cells, expected {width}")

    def __len__(self):
        return len(self.rows)

    def index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise SourceError(f"{self.signature.id}: unknown attribute {name!r}") from None


def make_table(name: str, columns: Sequence[str], rows: Iterable[Sequence[Optional[str]]],
               generated: bool = True, origin: Optional[str] = None, check: bool = True) -> SourceTable:
    """Build an in-memory table. ``check=False`` trusts rows to be tuples of the right width."""
    columns = tuple(columns)
    sig = SourceSignature(name, name, columns, generated=generated, origin=origin)
    if check:
        return SourceTable(sig, columns, tuple(tuple(r) for r in rows))
    return SourceTable(sig, columns, rows if isinstance(rows, tuple) else tuple(rows), check=False)


def read_header(path) -> Tuple[str, ...]:
    path = Path(path)
    if not path.is_file():
        raise SourceError(f"missing source file {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), None)
    if header is None:
        raise SourceError(f"{path}: empty file, header row required")
    _check_header(path, header)
    return tuple(header)


def _check_header(path, header):
    seen = set()
    for name in header:
        if name in seen:
            raise SourceError(f"{path}: duplicate header name {name!r}")
        seen.add(name)


def load_csv(path, expected: Optional[Iterable[str]] = None, source_id: Optional[str] = None) -> SourceTable:
    """Load a CSV file; empty cells become ``None`` (missing)."""
    path = Path(path)
    if not path.is_file():
        raise SourceError(f"missing source file {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SourceError(f"{path}: empty file, header row required")
        _check_header(path, header)
        width = len(header)
        rows = []
        for raw in reader:
            if not raw:
                continue
            if len(raw) != width:
                raise SourceError(
                    f"{path}: row {reader.line_num} has {len(raw)} cells, expected {width}"
                )
            rows.append(tuple(cell if cell != "" else None for cell in raw))
    if expected is not None:
        missing = [a for a in expected if a not in header]
        if missing:
            raise SourceError(f"{path}: attribute(s) {', '.join(missing)} not in header")
    name = source_id or path.name
    sig = SourceSignature(name, path.name, tuple(header))
    return SourceTable(sig, tuple(header), tuple(rows), check=False)


def write_csv(table: SourceTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow(["" if cell is None else cell for cell in row])


def row_key(indexes: Sequence[int]) -> Callable[[Sequence], tuple]:
    """``row -> tuple of the values at indexes``."""
    if len(indexes) == 1:
        i = indexes[0]
        return lambda row: (row[i],)
    if not indexes:
        return lambda row: ()
    return itemgetter(*indexes)


def project_distinct(table: SourceTable, attrs: Sequence[str], name: Optional[str] = None) -> SourceTable:
    """Keep ``attrs`` only, drop duplicate and all-missing rows, keep first occurrences."""
    attrs = tuple(attrs)
    seen = dict.fromkeys(map(row_key([table.index(a) for a in attrs]), table.rows))
    if attrs:
        seen.pop((None,) * len(attrs), None)
    name = name or table.signature.id
    return make_table(name, attrs, seen, origin=table.signature.root, check=False)


def _output_names(left: SourceTable, right: SourceTable) -> List[Tuple[str, int, int]]:
    names = []
    for i, c in enumerate(left.columns):
        names.append((c, 0, i))
    taken = set(left.columns)
    for i, c in enumerate(right.columns):
        names.append((c + "_r" if c in taken else c, 1, i))
    return names


def inner_join(left: SourceTable, right: SourceTable, conditions: Sequence[Tuple[str, str]],
               columns: Optional[Sequence[str]] = None, name: Optional[str] = None) -> SourceTable:
    """Hash equi-join under the conjunction of ``conditions``.

    Missing join values never match. Output columns default to all left
    columns then all right columns; right-side names already used on the
    left are suffixed ``_r``. The result is deduplicated.
    """
    conditions = list(conditions)
    if not conditions and left.signature.id != right.signature.id:
        raise SourceError("join between distinct tables needs at least one condition")
    lidx = [left.index(c) for c, _ in conditions]
    ridx = [right.index(p) for _, p in conditions]
    available = _output_names(left, right)
    lookup = {n: (side, i) for n, side, i in available}
    if columns is None:
        columns = [n for n, _, _ in available]
    try:
        picks = [lookup[c] for c in columns]
    except KeyError as exc:
        raise SourceError(f"unknown output column {exc.args[0]!r}") from None

    lkey, rkey = row_key(lidx), row_key(ridx)
    width = len(left.columns)
    pick = row_key([i if side == 0 else width + i for side, i in picks])
    buckets: Dict[tuple, List[tuple]] = {}
    for row in right.rows:
        key = rkey(row)
        if None in key:
            continue
        buckets.setdefault(key, []).append(row)
    out = {}
    for lrow in left.rows:
        matches = buckets.get(lkey(lrow))
        if matches:
            for rrow in matches:
                out.setdefault(pick(lrow + rrow), None)
    name = name or f"{left.signature.id}__join__{right.signature.id}"
    return make_table(name, columns, out, origin=left.signature.root, check=False)


class SourceStore:
    """Resolves source ids to tables: files under ``base_dir`` plus in-memory tables."""

    def __init__(self, base_dir=None):
        self.base_dir = Path(base_dir) if base_dir is not None else None
        self._tables: Dict[str, SourceTable] = {}
        self._lock = threading.Lock()
        self._loading: Dict[str, threading.Lock] = {}

    def put(self, table: SourceTable) -> None:
        with self._lock:
            self._tables[table.signature.id] = table

    def __contains__(self, source_id):
        return source_id in self._tables

    def get(self, signature) -> SourceTable:
        source_id = signature if isinstance(signature, str) else signature.id
        with self._lock:
            table = self._tables.get(source_id)
            if table is not None:
                return table
            loading = self._loading.setdefault(source_id, threading.Lock())
        location = source_id if isinstance(signature, str) else signature.location
        if self.base_dir is None:
            raise SourceError(f"unresolved source {source_id}")
        if os.path.isabs(location):
            raise SourceError(f"absolute source path {location!r} is not allowed")
        # one loader per source; latecomers wait and reuse its table
        with loading:
            with self._lock:
                table = self._tables.get(source_id)
            if table is None:
                table = load_csv(self.base_dir / location, source_id=source_id)
                self.put(table)
        return table
