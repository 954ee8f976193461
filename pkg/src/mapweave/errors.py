"""Exception hierarchy shared by every mapweave module."""


class MapweaveError(Exception):
    """Base class for all errors raised by mapweave."""


class MappingSyntaxError(MapweaveError):
    """A mapping document is not in the accepted Turtle subset."""

    def __init__(self, message, line, column, expected=None):
        self.line = line
        self.column = column
        self.expected = expected
        detail = f"{message} at line {line}, column {column}"
        if expected:
            detail += f" (expected {expected})"
        super().__init__(detail)


class MappingError(MapweaveError):
    """A syntactically valid document that is not a valid mapping."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} at line {line}, column {column}"
        super().__init__(message)


class ValidationError(MapweaveError):
    """A data integration system violates a structural invariant."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class SourceError(MapweaveError):
    """A tabular source cannot be loaded, projected, joined or written."""


class FunctionError(MapweaveError):
    """Function registration or evaluation failed."""


class MaterializationError(MapweaveError):
    """A DIS could not be turned into triples."""


class TransformError(MapweaveError):
    """The rewrite into a function-free DIS failed."""


class PipelineTimeout(MapweaveError):
    """A pipeline ran past its deadline."""
