"""
Database Operation & Structure (DOS) model.

Holds the database operations found in the code, chained by data dependency, and the
physical structure of the stored documents: containers, data structures and typed
fields. Nested structures live in `DOSModel.nested_structures` and are referenced by id
from `Aggregate` field types.
"""

import enum
from typing import Literal, Self

from pydantic import Field, model_validator

from .base import Diagnostic, XrayModel
from .code import LiteralKind, NodeId, PrimitiveType
from .control_flow import NodeRef


class OperationKind(enum.StrEnum):
    READ = "Read"
    INSERT = "Insert"
    UPDATE = "Update"
    DELETE = "Delete"


class PredicateOp(enum.StrEnum):
    EQ = enum.auto()
    IN = enum.auto()


class LiteralValue(XrayModel):
    variant: Literal["literal"] = "literal"
    literal_kind: LiteralKind
    lexeme: str


class VariablePath(XrayModel):
    variant: Literal["variable"] = "variable"
    path: list[str] = Field(..., min_length=1, description="Root variable, then properties; `[]` marks an index")
    expr_ref: NodeId | None = None

    @property
    def root(self) -> str:
        return self.path[0]


class Conjunct(XrayModel):
    field_path: list[str] = Field(..., min_length=1)
    op: PredicateOp = PredicateOp.EQ
    rhs: LiteralValue | VariablePath = Field(..., discriminator="variant")


class Predicate(XrayModel):
    conjuncts: list[Conjunct] = Field(default_factory=list)


class FieldKind(enum.StrEnum):
    ATTRIBUTE = enum.auto()
    COLLECTION = enum.auto()
    AGGREGATE = enum.auto()
    REFERENCE = enum.auto()


class FieldType(XrayModel):
    kind: FieldKind
    primitive: PrimitiveType | None = Field(None, description="Attribute type")
    defaulted: bool = Field(False, description="No evidence was found; the default type applies")
    element: "FieldType | None" = Field(None, description="Element type of a collection")
    target: str | None = Field(None, description="Target DataStructure id of an aggregate")
    target_container: str | None = None
    target_attribute: str | None = None

    @classmethod
    def attribute(cls, primitive: PrimitiveType | None) -> Self:
        if primitive is None or primitive in (PrimitiveType.UNKNOWN, PrimitiveType.NULL):
            return cls(kind=FieldKind.ATTRIBUTE, primitive=PrimitiveType.STRING, defaulted=True)
        return cls(kind=FieldKind.ATTRIBUTE, primitive=primitive)

    @classmethod
    def collection(cls, element: "FieldType") -> Self:
        return cls(kind=FieldKind.COLLECTION, element=element)

    def signature(self) -> str:
        match self.kind:
            case FieldKind.ATTRIBUTE:
                return f"{self.primitive}{'?' if self.defaulted else ''}"
            case FieldKind.COLLECTION:
                return f"[{self.element.signature() if self.element else ''}]"
            case FieldKind.AGGREGATE:
                return f"{{{self.target}}}"
            case FieldKind.REFERENCE:
                return f"->{self.target_container}.{self.target_attribute}"

    @property
    def innermost(self) -> "FieldType":
        return self.element.innermost if self.kind == FieldKind.COLLECTION and self.element else self


class FieldSource(XrayModel):
    container: str
    field: str


class DosField(XrayModel):
    name: str
    type: FieldType
    duplicated_from: FieldSource | None = None


class DataStructure(XrayModel):
    id: str
    name: str = Field(..., description="Suggested entity name, e.g. `WatchedMovie`")
    root: bool = True
    fields: list[DosField] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_unique_fields(self) -> Self:
        names = [f.name for f in self.fields]
        if len(names) != len(set(names)):
            raise ValueError(f"Structure {self.id} has duplicated field names")
        return self

    def field(self, name: str) -> DosField | None:
        return next((f for f in self.fields if f.name == name), None)

    def signature(self) -> str:
        return ",".join(f"{f.name}:{f.type.signature()}" for f in sorted(self.fields, key=lambda f: f.name))


class DosContainer(XrayModel):
    name: str
    data_structures: list[DataStructure] = Field(default_factory=list)


class JoinDirection(enum.StrEnum):
    FORWARD = enum.auto()
    REVERSE = enum.auto()


class FieldCopy(XrayModel):
    source_field: str
    new_name: str
    type: FieldType


class JoinLink(XrayModel):
    """One join performed by an operation: a sequential read, or one `$lookup` stage."""

    container: str = Field(..., description="Container whose documents are joined in")
    direction: JoinDirection = JoinDirection.FORWARD
    reference_container: str = Field(..., description="Container holding the reference field")
    reference_field: list[str] = Field(..., description="Path of the reference field inside its container")
    referenced_container: str = Field(..., description="Container the reference field points to")
    target_attribute: str = "_id"
    collection: bool = False
    alias: str | None = Field(None, description="Variable or `as` name the joined documents are accessed through")
    stage_ref: NodeId | None = Field(None, description="The `$lookup` stage object")
    unwind_ref: NodeId | None = Field(None, description="The `$unwind` stage of the alias")
    holder_ref: NodeId | None = Field(None, description="Expression holding the reference field in a sequential join")
    copies: list[FieldCopy] = Field(default_factory=list, description="Fields detected for duplication")
    embedded: str | None = Field(None, description="Embedded object grouping the copies")
    destination_container: str | None = None
    destination_path: list[str] = Field(default_factory=list, description="Structure receiving the copies")
    usage_sites: list[NodeId] = Field(default_factory=list, description="Statements using the joined documents")
    co_use_sites: list[NodeId] = Field(default_factory=list, description="Statements also using the base documents")


class DatabaseOperation(XrayModel):
    id: str
    kind: OperationKind
    method: str
    aggregate: bool = False
    stmt_ref: NodeId
    call_ref: NodeId
    node_ref: NodeRef
    path: str = ""
    line: int = 0
    function: str | None = Field(None, description="Enclosing named function")
    container_name: str
    result_variable: str | None = None
    many: bool = False
    filter: Predicate | None = None
    prev_dbo: str | None = None
    next_dbos: list[str] = Field(default_factory=list)
    is_join: bool = False
    joins: list[JoinLink] = Field(default_factory=list)
    result_ds: str | None = None
    params: list[str] = Field(default_factory=list)


class ExtractOptions(XrayModel):
    payload_structures: bool = Field(True, description="Derive structure from insert and update payloads")
    references: bool = Field(True, description="Turn join fields into references and deduplicate structures")


class DOSModel(XrayModel):
    operations: list[DatabaseOperation] = Field(default_factory=list)
    containers: list[DosContainer] = Field(default_factory=list)
    nested_structures: list[DataStructure] = Field(default_factory=list)
    diagnostics: list[Diagnostic] = Field(default_factory=list)

    def operation(self, op_id: str) -> DatabaseOperation:
        return next(op for op in self.operations if op.id == op_id)

    def container(self, name: str) -> DosContainer | None:
        return next((c for c in self.containers if c.name == name), None)

    def structures(self) -> list[DataStructure]:
        return [ds for c in self.containers for ds in c.data_structures] + list(self.nested_structures)

    def structure(self, structure_id: str) -> DataStructure:
        found = next((ds for ds in self.structures() if ds.id == structure_id), None)
        if found is None:
            raise KeyError(structure_id)
        return found

    def joins(self) -> list[DatabaseOperation]:
        return [op for op in self.operations if op.is_join]


FieldType.model_rebuild()
