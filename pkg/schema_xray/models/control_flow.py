import enum

from pydantic import Field

from .base import XrayModel
from .code import NodeId

NodeRef = str


class NodeKind(enum.StrEnum):
    START = enum.auto()
    END = enum.auto()
    CALL = enum.auto()
    SELECTION = enum.auto()
    STATEMENT = enum.auto()


class EdgeKind(enum.StrEnum):
    SEQ = enum.auto()
    CALL = enum.auto()
    COND_TRUE = "condTrue"
    COND_FALSE = "condFalse"


class SubGraphKind(enum.StrEnum):
    CODE_BLOCK = "codeBlock"
    CALLABLE = enum.auto()


class CfgNode(XrayModel):
    id: NodeRef
    kind: NodeKind
    stmt_ref: NodeId | None = Field(None, description="Statement this node stands for")
    expr_ref: NodeId | None = Field(None, description="The Call of a call node, the condition of a selection node")
    line: int | None = None
    outgoing: list[str] = Field(default_factory=list)
    incoming: list[str] = Field(default_factory=list)


class CfgEdge(XrayModel):
    id: str
    kind: EdgeKind
    source: NodeRef
    target: NodeRef
    expr_ref: NodeId | None = None


class SubGraph(XrayModel):
    id: str
    kind: SubGraphKind
    block_ref: NodeId = Field(..., description="The CodeBlock this subgraph was derived from")
    path: str = ""
    name: str | None = None
    nodes: list[CfgNode] = Field(default_factory=list)
    edges: list[CfgEdge] = Field(default_factory=list)
    start: NodeRef
    end: NodeRef


class ControlFlowModel(XrayModel):
    subgraphs: list[SubGraph] = Field(default_factory=list)
