import enum

from pydantic import Field

from .base import XrayModel
from .code import CodeModel, NodeId
from .dos import JoinDirection
from .uschema import USchemaModel


class JoinType(enum.StrEnum):
    SEQUENTIAL = "Sequential Query"
    AGGREGATION = "Aggregation"


class Duplicate(XrayModel):
    source_field: str
    new_name: str
    type: str = Field("string", description="Primitive type of the copied attribute")
    destination_path: list[str] = Field(default_factory=list)


class PlanLink(XrayModel):
    """Copies replacing one join link of the plan."""

    target_entity: str = Field(..., description="Referenced entity the fields are copied from")
    target_container: str
    destination_entity: str = Field(..., description="Entity receiving the copies")
    destination_container: str
    destination_path: list[str] = Field(default_factory=list)
    reference_container: str
    reference_field: list[str]
    target_attribute: str = "_id"
    direction: JoinDirection = JoinDirection.FORWARD
    collection: bool = False
    duplicates: list[Duplicate] = Field(..., min_length=1)
    embedded: str | None = Field(None, description="Embedded object grouping more than one copy")
    alias: str | None = None
    stage_ref: NodeId | None = None
    unwind_ref: NodeId | None = None
    holder_ref: NodeId | None = None
    joined_list: bool = Field(False, description="The join yields a list of documents")

    @property
    def copy_name(self) -> str:
        """Field of the destination structure holding the copies."""
        return self.embedded or self.duplicates[0].new_name


class JoinRemovalPlan(XrayModel):
    id: str = Field(..., description="Content hash")
    number: int = Field(..., ge=1)
    join_op: str
    prev_op: str | None = None
    query: str | None = Field(None, description="Function the join is performed in")
    join_type: JoinType
    path: str
    line: int
    source_entity: str = Field(..., description="Root entity receiving the copies")
    target_entity: list[str] = Field(..., description="Entities the copies come from")
    links: list[PlanLink] = Field(..., min_length=1)
    join_stmt_ref: NodeId
    join_call_ref: NodeId
    join_statement: str = Field(..., description="Source text of the join statement when the plan was built")
    result_variable: str | None = None
    usage_sites: list[NodeId] = Field(default_factory=list)
    usage_line_count: int = 0
    related_ops: list[str] = Field(default_factory=list)
    original_snippet: str = ""
    rewritten_snippet: str = ""
    partial: bool = Field(False, description="The join result escapes; the plan cannot be applied")

    @property
    def duplicates(self) -> list[Duplicate]:
        return [d for link in self.links for d in link.duplicates]


class PlanRow(XrayModel):
    number: int
    query: str
    target_entity: str
    source_entity: str
    fields: str
    location: str
    join_type: JoinType


class PlanList(XrayModel):
    plans: list[JoinRemovalPlan] = Field(default_factory=list)

    def plan(self, plan_id: str) -> JoinRemovalPlan | None:
        return next((p for p in self.plans if p.id == plan_id or str(p.number) == plan_id), None)


class FileChange(XrayModel):
    path: str
    removed_statements: int = 0
    removed_stages: int = 0
    rewritten_accesses: int = 0


class RefactorOutcome(XrayModel):
    updated_schema: USchemaModel
    updated_code: CodeModel
    copy_statement: str
    migration_script: str
    sources: dict[str, str] = Field(default_factory=dict, description="Regenerated text of the changed files")
    report: list[FileChange] = Field(default_factory=list)
