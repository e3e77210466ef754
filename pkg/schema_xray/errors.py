from pathlib import Path


class SchemaXrayError(Exception):
    """Base class of every error raised by the analysis pipeline."""


class SourceSyntaxError(SchemaXrayError):
    """Malformed or unsupported source construct.

    Parameters
    ----------
    message : str
        Human readable description of the problem.
    line : int
        1-based line of the offending token.
    column : int
        1-based column of the offending token.
    path : str, optional
        File the source was read from, if any.
    """

    def __init__(self, message: str, line: int, column: int, path: str | None = None):
        self.message = message
        self.line = line
        self.column = column
        self.path = path
        where = f"{path}:" if path else ""
        super().__init__(f"{where}{line}:{column}: {message}")


class ProjectSyntaxError(SchemaXrayError):
    """Strict-mode injection failed on one or more files."""

    def __init__(self, errors: list[SourceSyntaxError]):
        self.errors = errors
        listing = "; ".join(str(e) for e in errors)
        super().__init__(f"{len(errors)} file(s) failed to parse: {listing}")


class SourceReadError(SchemaXrayError, OSError):
    def __init__(self, path: Path, reason: str):
        self.path = path
        super().__init__(f"Cannot read {path}: {reason}")


class ModelError(SchemaXrayError):
    """A model violates one of its structural invariants."""


class ProfileError(SchemaXrayError):
    """The API profile is invalid or does not fit a matched call."""


class MappingError(SchemaXrayError):
    """The DOS model cannot be mapped onto U-Schema."""


class FormatError(SchemaXrayError):
    def __init__(self, message: str, path: str = ""):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


class PlanStaleError(SchemaXrayError):
    """The plan no longer matches the code it is applied to."""


class RewriteError(SchemaXrayError):
    """The plan cannot be applied without leaving a use of the removed join behind."""


class SpecError(SchemaXrayError):
    """The schema spec given to the app generator is inconsistent."""


class UsageError(SchemaXrayError):
    """Bad command line usage detected after argument parsing."""
