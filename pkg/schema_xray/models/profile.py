import enum
import json
from pathlib import Path
from typing import Self

from pydantic import Field, ValidationError, model_validator

from ..errors import ProfileError
from .base import XrayModel

BUNDLED_PROFILE = Path(__file__).resolve().parent.parent / "profiles" / "mongodb-node.json"


class OpKind(enum.StrEnum):
    READ = enum.auto()
    INSERT = enum.auto()
    UPDATE = enum.auto()
    DELETE = enum.auto()
    AGGREGATE_READ = "aggregate-read"


class ResultBinding(enum.StrEnum):
    CALLBACK_PARAM = "callback-param"
    RETURN_VALUE = "return-value"


class ContainerArg(XrayModel):
    method: str = Field("collection", description="Receiver-chain method naming the container")
    arg_index: int = Field(0, ge=0)


class ProfileEntry(XrayModel):
    method_name: str
    op_kind: OpKind
    container_arg: ContainerArg = Field(default_factory=ContainerArg)
    arity: int = Field(3, ge=0, description="Maximum number of arguments of the driver method")
    filter_arg_index: int | None = Field(None, description="Filter argument; the pipeline for aggregate reads")
    payload_arg_index: int | None = None
    callback_arg_index: int | None = None
    result_binding: ResultBinding = ResultBinding.CALLBACK_PARAM
    payload_operator: str | None = Field(None, description="Update operator wrapping the payload, e.g. `$set`")
    many: bool = Field(False, description="The operation yields a list of documents")

    @model_validator(mode="after")
    def check_indices(self) -> Self:
        for name in ("filter_arg_index", "payload_arg_index", "callback_arg_index"):
            index = getattr(self, name)
            if index is not None and not 0 <= index < self.arity:
                raise ValueError(f"{self.method_name}: {name}={index} is outside the arity {self.arity}")
        return self


class ApiProfile(XrayModel):
    """Driver API description used to recognize database calls."""

    name: str
    connector_methods: list[str] = Field(default_factory=lambda: ["db", "collection"])
    entries: list[ProfileEntry] = Field(default_factory=list)
    cursor_methods: list[str] = Field(default_factory=lambda: ["toArray"])
    callback_result_index: int = Field(1, ge=0, description="Position of the result in a driver callback")
    primary_key: str = "_id"
    collection_methods: list[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_unique_methods(self) -> Self:
        names = [entry.method_name for entry in self.entries]
        if duplicated := sorted({name for name in names if names.count(name) > 1}):
            raise ValueError(f"Duplicated profile entries: {', '.join(duplicated)}")
        return self

    def entry(self, method: str) -> ProfileEntry | None:
        return next((entry for entry in self.entries if entry.method_name == method), None)


def load_profile(path: Path | str | None = None) -> ApiProfile:
    """Load an API profile from JSON, the bundled MongoDB profile by default.

    Raises
    ------
    ProfileError
        When the file is missing, is not JSON, or does not describe a valid profile.
    """
    path = Path(path) if path is not None else BUNDLED_PROFILE
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        return ApiProfile.model_validate(data)
    except OSError as e:
        raise ProfileError(f"Cannot read profile {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ProfileError(f"Profile {path} is not valid JSON: {e}") from e
    except ValidationError as e:
        raise ProfileError(f"Invalid profile {path}: {e}") from e
