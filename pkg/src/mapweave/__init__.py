"""Function-aware RML mappings: parse, rewrite into function-free form, materialize."""

from .errors import (
    FunctionError,
    MapweaveError,
    MappingError,
    MappingSyntaxError,
    MaterializationError,
    PipelineTimeout,
    SourceError,
    TransformError,
    ValidationError,
)
from .functions import FunctionDef, FunctionKind, FunctionRegistry, MemoTable, default_registry
from .mapping import load_mapping, parse_mapping_document, serialize_mapping_document, write_mapping
from .materialize import Deadline, Mode, Triple, canonical_ntriples, materialize_dis, write_ntriples
from .model import (
    AssertionKind,
    DataIntegrationSystem,
    JoinCondition,
    MappingAssertion,
    SourceSignature,
    detect_chain_joins,
    detect_star_joins,
)
from .sources import SourceStore, SourceTable, load_csv
from .terms import Constant, FunctionApp, Reference, Template, TermKind
from .transform import TransformOutcome, transform_dis, write_outcome

__version__ = "0.1.0"

__all__ = [
    "AssertionKind",
    "Constant",
    "DataIntegrationSystem",
    "Deadline",
    "FunctionApp",
    "FunctionDef",
    "FunctionError",
    "FunctionKind",
    "FunctionRegistry",
    "JoinCondition",
    "MappingAssertion",
    "MappingError",
    "MappingSyntaxError",
    "MapweaveError",
    "MaterializationError",
    "MemoTable",
    "Mode",
    "PipelineTimeout",
    "Reference",
    "SourceError",
    "SourceSignature",
    "SourceStore",
    "SourceTable",
    "Template",
    "TermKind",
    "TransformError",
    "TransformOutcome",
    "Triple",
    "ValidationError",
    "canonical_ntriples",
    "default_registry",
    "detect_chain_joins",
    "detect_star_joins",
    "load_csv",
    "load_mapping",
    "materialize_dis",
    "parse_mapping_document",
    "serialize_mapping_document",
    "transform_dis",
    "write_mapping",
    "write_ntriples",
    "write_outcome",
]
