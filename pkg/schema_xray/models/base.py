import enum
import json
from typing import Any, TypeVar

from pydantic import BaseModel, ConfigDict, Field, ValidationError
from pydantic.alias_generators import to_camel

from ..errors import FormatError

FORMAT_VERSION = "1.0"

M = TypeVar("M", bound=BaseModel)


class XrayModel(BaseModel):
    """Base of every serializable model: camelCase JSON keys, snake_case attributes."""

    model_config = ConfigDict(alias_generator=to_camel, populate_by_name=True, validate_assignment=False)


class Severity(enum.StrEnum):
    INFO = enum.auto()
    WARNING = enum.auto()
    ERROR = enum.auto()


class Diagnostic(XrayModel):
    severity: Severity = Field(Severity.WARNING, description="How serious the finding is")
    code: str = Field(..., description="Stable machine readable code, e.g. `lenient-opaque`")
    message: str = Field(..., description="Human readable description")
    path: str | None = Field(None, description="File the finding belongs to")
    line: int | None = Field(None, description="1-based line, when known")

    def __str__(self) -> str:
        where = f"{self.path or '<source>'}:{self.line}: " if self.line else ""
        return f"{where}{self.severity}: {self.message} [{self.code}]"


def canonical_json(model: BaseModel, **extra: Any) -> str:
    """Serialize a model to canonical JSON.

    Keys use the camelCase aliases, the document carries a `formatVersion` field and the
    output is byte-stable for equal models.

    Parameters
    ----------
    model : BaseModel
        The model to serialize.
    **extra : Any
        Additional top-level keys, placed after `formatVersion`.

    Returns
    -------
    str
        Indented JSON text terminated by a newline.
    """
    payload = {"formatVersion": FORMAT_VERSION, **extra, **model.model_dump(mode="json", by_alias=True)}
    return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"


def strip_format_version(data: dict[str, Any]) -> dict[str, Any]:
    return {key: value for key, value in data.items() if key != "formatVersion"}


def error_path(loc: tuple[int | str, ...]) -> str:
    """Render a pydantic error location as `entityTypes[0].variations`."""
    path = ""
    for part in loc:
        path += f"[{part}]" if isinstance(part, int) else (f".{part}" if path else str(part))
    return path


def load_document(model_type: type[M], text: str) -> M:
    """Validate canonical JSON text into a model.

    Raises
    ------
    FormatError
        With the JSON path of the first problem when the text is not valid JSON or
        does not describe a `model_type`.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"Not valid JSON: {e.msg}", path=f"line {e.lineno}") from e
    if not isinstance(data, dict):
        raise FormatError(f"Expected a JSON object, found {type(data).__name__}")
    try:
        return model_type.model_validate(strip_format_version(data))
    except ValidationError as e:
        first = e.errors()[0]
        raise FormatError(first["msg"], path=error_path(first["loc"])) from e
