"""``mapweave`` command line: transform, materialize, verify and bench.

Exit codes: 0 success, 1 usage error, 2 pipeline error, 3 equivalence failure.
Logs go to standard error; ``MAPWEAVE_LOG`` sets the level (DEBUG, INFO, ...).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path
from typing import List, Optional

from . import bench
from .errors import MapweaveError
from .functions import default_registry
from .mapping import load_mapping
from .materialize import Mode, canonical_ntriples, materialize_dis, write_ntriples
from .sources import SourceStore
from .transform import MAPPING_FILE, transform_dis, write_outcome

EXIT_OK, EXIT_USAGE, EXIT_PIPELINE, EXIT_UNEQUAL = 0, 1, 2, 3

log = logging.getLogger("mapweave")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _configure_logging(verbosity: int) -> None:
    level = os.environ.get("MAPWEAVE_LOG", "").strip().upper()
    if level.isdigit():
        resolved = int(level)
    elif level:
        resolved = logging.getLevelName(level)
        if not isinstance(resolved, int):
            resolved = logging.WARNING
    else:
        resolved = logging.WARNING
    if verbosity:
        resolved = min(resolved, logging.INFO if verbosity == 1 else logging.DEBUG)
    root = logging.getLogger("mapweave")
    root.handlers[:] = []
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root.addHandler(handler)
    root.setLevel(resolved)
    root.propagate = False


def _existing_file(path: str, flag: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{flag}: no such file: {path}")
    return p


def _existing_dir(path: str, flag: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise UsageError(f"{flag}: no such directory: {path}")
    return p


def _load(mapping: Path, sources: Path):
    registry = default_registry()
    return load_mapping(mapping, registry, sources), registry


def cmd_transform(args) -> int:
    mapping = _existing_file(args.mapping, "--mapping")
    sources = _existing_dir(args.sources, "--sources")
    dis, registry = _load(mapping, sources)
    outcome = transform_dis(dis, SourceStore(sources), registry)
    write_outcome(outcome, args.out)
    log.info("%d rewrite steps, %d generated sources", len(outcome.log), len(outcome.generated))
    print(f"wrote {Path(args.out) / MAPPING_FILE} ({len(outcome.tables)} sources)")
    return EXIT_OK


def cmd_materialize(args) -> int:
    mapping = _existing_file(args.mapping, "--mapping")
    sources = _existing_dir(args.sources, "--sources")
    start = time.monotonic()
    dis, registry = _load(mapping, sources)
    kg = materialize_dis(dis, SourceStore(sources), registry, Mode(args.mode))
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    count = write_ntriples(kg, out)
    print(f"{count} triples in {time.monotonic() - start:.3f}s -> {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    mapping = _existing_file(args.mapping, "--mapping")
    sources = _existing_dir(args.sources, "--sources")
    if (args.transformed_mapping is None) != (args.transformed_sources is None):
        raise UsageError("--transformed-mapping and --transformed-sources go together")
    dis, registry = _load(mapping, sources)
    lazy = canonical_ntriples(materialize_dis(dis, SourceStore(sources), registry, Mode.LAZY))
    if args.transformed_mapping is None:
        outcome = transform_dis(dis, SourceStore(sources), registry)
        new, store = outcome.dis, outcome.store()
    else:
        tsources = _existing_dir(args.transformed_sources, "--transformed-sources")
        new, _ = _load(_existing_file(args.transformed_mapping, "--transformed-mapping"), tsources)
        store = SourceStore(tsources)
    eager = canonical_ntriples(materialize_dis(new, store, registry, Mode.PLAIN))
    if lazy == eager:
        print(f"equivalent: {lazy.count(chr(10))} triples")
        return EXIT_OK
    lazy_only, eager_only = bench.canonical_diff(lazy, eager)
    print("NOT equivalent")
    for line in lazy_only:
        print(f"- {line}")
    for line in eager_only:
        print(f"+ {line}")
    return EXIT_UNEQUAL


def cmd_bench(args) -> int:
    config = _existing_file(args.config, "--config")
    try:
        specs = bench.parse_config(config.read_text(encoding="utf-8"), args.seed)
    except bench.ConfigError as exc:
        raise UsageError(f"--config: {exc}") from None
    if args.timeout_secs <= 0 or args.jobs < 1:
        raise UsageError("--timeout-secs must be positive and --jobs at least 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = bench.run_bench(specs, out / "testbeds", args.timeout_secs, args.jobs)
    report = out / "report.csv"
    bench.emit_report(results, report)
    failed = [r.spec.name for r in results if r.lazy.valid and r.eager.valid and not r.equal]
    flagged = [r.spec.name for r in results if not (r.lazy.valid and r.eager.valid)]
    for name in flagged:
        log.warning("%s: timed out or failed, flagged in report", name)
    print(f"{len(results)} testbeds, report -> {report}")
    if failed:
        print("equivalence FAILED for: " + ", ".join(failed))
        return EXIT_UNEQUAL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mapweave", description="Function-aware RML mapping transformer and materializer.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more log output (repeatable)")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("transform", help="rewrite a mapping into a function-free one")
    p.add_argument("--mapping", required=True)
    p.add_argument("--sources", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(run=cmd_transform)

    p = sub.add_parser("materialize", help="write the knowledge graph as sorted N-Triples")
    p.add_argument("--mapping", required=True)
    p.add_argument("--sources", required=True)
    p.add_argument("--out", required=True, help="output .nt file")
    p.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.LAZY.value)
    p.set_defaults(run=cmd_materialize)

    p = sub.add_parser("verify", help="compare lazy and transformed materializations")
    p.add_argument("--mapping", required=True)
    p.add_argument("--sources", required=True)
    p.add_argument("--transformed-mapping", help="check this transformed mapping instead of transforming")
    p.add_argument("--transformed-sources", help="directory holding the transformed mapping's sources")
    p.set_defaults(run=cmd_verify)

    p = sub.add_parser("bench", help="generate testbeds, time both strategies, write a report")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory (report.csv and testbeds/)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--timeout-secs", type=float, default=bench.DEFAULT_TIMEOUT)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(run=cmd_bench)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    _configure_logging(args.verbose)
    try:
        return args.run(args)
    except UsageError as exc:
        print(f"mapweave {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MapweaveError, OSError) as exc:
        print(f"mapweave {args.command}: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
