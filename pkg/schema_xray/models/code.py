"""
Language independent Code model.

A `CodeModel` aggregates file and directory `Container`s; a file holds one script
`CodeContainer` whose single top-level `CodeBlock` lists the statements of the file in
source order. Expressions keep the left-to-right nesting of call chains, so
`client.db(x).collection('users').findOne(...)` is three nested `Call`s.

Every statement, expression and block carries a `NodeId` of the form
`"<file index>:<pre-order number>"`, stable across runs for the same bytes.
"""

import enum
from typing import Annotated, Literal

from pydantic import Field

from .base import Diagnostic, XrayModel

NodeId = str


class PrimitiveType(enum.StrEnum):
    STRING = enum.auto()
    INT = enum.auto()
    DOUBLE = enum.auto()
    BOOL = enum.auto()
    NULL = enum.auto()
    UNKNOWN = enum.auto()


class LiteralKind(enum.StrEnum):
    STRING = enum.auto()
    INT = enum.auto()
    DOUBLE = enum.auto()
    BOOL = enum.auto()
    NULL = enum.auto()

    @property
    def primitive(self) -> PrimitiveType:
        return PrimitiveType(self.value)


class BinaryOp(enum.StrEnum):
    EQ = "=="
    STRICT_EQ = "==="
    NE = "!="
    GE = ">="
    LE = "<="
    GT = ">"
    LT = "<"
    ADD = "+"
    SUB = "-"
    AND = "&&"
    OR = "||"

    @property
    def is_comparison(self) -> bool:
        return self in {BinaryOp.EQ, BinaryOp.STRICT_EQ, BinaryOp.NE, BinaryOp.GE, BinaryOp.LE, BinaryOp.GT, BinaryOp.LT}


class ParseMode(enum.StrEnum):
    STRICT = enum.auto()
    LENIENT = enum.auto()


class LambdaStyle(enum.StrEnum):
    ARROW = enum.auto()
    FUNCTION = enum.auto()


class DeclKeyword(enum.StrEnum):
    CONST = enum.auto()
    LET = enum.auto()
    VAR = enum.auto()
    FUNCTION = enum.auto()


class Span(XrayModel):
    line: int = Field(..., description="1-based line of the first character")
    column: int = Field(..., description="1-based column of the first character")
    length: int = Field(..., description="Number of characters covered")
    offset: int = Field(0, description="0-based character offset of the first character")


# -- expressions ---------------------------------------------------------------------


class ExprNode(XrayModel):
    id: NodeId = ""


class LiteralExpr(ExprNode):
    variant: Literal["literal"] = "literal"
    literal_kind: LiteralKind
    lexeme: str = Field(..., description="Decoded value for strings, source text otherwise")


class VarAccess(ExprNode):
    variant: Literal["varAccess"] = "varAccess"
    name: str


class PropertyAccess(ExprNode):
    variant: Literal["propertyAccess"] = "propertyAccess"
    object: "Expr"
    property: str


class IndexAccess(ExprNode):
    variant: Literal["indexAccess"] = "indexAccess"
    object: "Expr"
    index: "Expr"


class Call(ExprNode):
    variant: Literal["call"] = "call"
    receiver: "Expr | None" = None
    method: str
    args: list["Expr"] = Field(default_factory=list)


class Lambda(ExprNode):
    variant: Literal["lambda"] = "lambda"
    params: list[str] = Field(default_factory=list)
    body: "CodeBlock"
    style: LambdaStyle = LambdaStyle.ARROW
    name: str | None = None


class Pair(XrayModel):
    name: str
    value: "Expr"


class ObjectLiteral(ExprNode):
    variant: Literal["objectLiteral"] = "objectLiteral"
    pairs: list[Pair] = Field(default_factory=list)

    def get(self, name: str) -> "Expr | None":
        return next((pair.value for pair in self.pairs if pair.name == name), None)


class ArrayLiteral(ExprNode):
    variant: Literal["arrayLiteral"] = "arrayLiteral"
    items: list["Expr"] = Field(default_factory=list)


class New(ExprNode):
    variant: Literal["new"] = "new"
    class_name: str
    args: list["Expr"] = Field(default_factory=list)


class Binary(ExprNode):
    variant: Literal["binary"] = "binary"
    op: BinaryOp
    lhs: "Expr"
    rhs: "Expr"


class Opaque(ExprNode):
    """Verbatim text of a construct the lenient parser could not model."""

    variant: Literal["opaque"] = "opaque"
    text: str


Expr = Annotated[
    LiteralExpr | VarAccess | PropertyAccess | IndexAccess | Call | Lambda | ObjectLiteral | ArrayLiteral | New | Binary | Opaque,
    Field(discriminator="variant"),
]


# -- statements ----------------------------------------------------------------------


class StatementNode(XrayModel):
    id: NodeId = ""
    span: Span


class ExpressionStmt(StatementNode):
    variant: Literal["expression"] = "expression"
    expr: Expr


class VariableDeclStmt(StatementNode):
    variant: Literal["variableDecl"] = "variableDecl"
    name: str
    keyword: DeclKeyword = DeclKeyword.CONST
    init: Expr | None = None


class AssignmentStmt(StatementNode):
    variant: Literal["assignment"] = "assignment"
    target: Expr
    value: Expr


class IfStmt(StatementNode):
    variant: Literal["if"] = "if"
    cond: Expr
    then: "CodeBlock"
    otherwise: "CodeBlock | None" = Field(None, alias="else")


class WhileStmt(StatementNode):
    variant: Literal["while"] = "while"
    cond: Expr
    body: "CodeBlock"


class ReturnStmt(StatementNode):
    variant: Literal["return"] = "return"
    value: Expr | None = None


Statement = Annotated[
    ExpressionStmt | VariableDeclStmt | AssignmentStmt | IfStmt | WhileStmt | ReturnStmt,
    Field(discriminator="variant"),
]


# -- blocks and containers -----------------------------------------------------------


class VariableDecl(XrayModel):
    name: str = Field(..., min_length=1)
    declared_type: PrimitiveType = PrimitiveType.UNKNOWN
    init_site: NodeId | None = None


class CallableInfo(XrayModel):
    params: list[str] = Field(default_factory=list)
    anonymous: bool = True
    name: str | None = None


class CodeBlock(XrayModel):
    id: NodeId = ""
    statements: list[Statement] = Field(default_factory=list)
    locals: list[VariableDecl] = Field(default_factory=list)
    callable: CallableInfo | None = None


class CodeContainerKind(enum.StrEnum):
    SCRIPT = enum.auto()
    CLASS_BODY = "class-body"


class CodeContainer(XrayModel):
    kind: CodeContainerKind = CodeContainerKind.SCRIPT
    path: str = ""
    blocks: list[CodeBlock] = Field(default_factory=list)
    variable_decls: list[VariableDecl] = Field(default_factory=list)
    warnings: list[Diagnostic] = Field(default_factory=list)

    @property
    def body(self) -> CodeBlock:
        return self.blocks[0]


class ContainerKind(enum.StrEnum):
    DIRECTORY = enum.auto()
    FILE = enum.auto()


class Container(XrayModel):
    kind: ContainerKind
    path: str
    children: list["Container"] = Field(default_factory=list)
    code_containers: list[CodeContainer] = Field(default_factory=list)


class PropertyDecl(XrayModel):
    name: str
    type: PrimitiveType = PrimitiveType.UNKNOWN


class ClassDecl(XrayModel):
    name: str
    properties: list[PropertyDecl] = Field(default_factory=list)


class CodeModel(XrayModel):
    containers: list[Container] = Field(default_factory=list)
    classes: list[ClassDecl] = Field(default_factory=list)
    globals: list[VariableDecl] = Field(default_factory=list)
    type_evidence: dict[str, PrimitiveType] = Field(default_factory=dict)
    warnings: list[Diagnostic] = Field(default_factory=list)

    def files(self) -> list[Container]:
        """File containers in lexicographic path order (depth first over directories)."""
        found: list[Container] = []

        def visit(container: Container) -> None:
            if container.kind == ContainerKind.FILE:
                found.append(container)
            for child in container.children:
                visit(child)

        for root in self.containers:
            visit(root)
        return sorted(found, key=lambda c: c.path)

    def scripts(self) -> list[CodeContainer]:
        return [cc for file in self.files() for cc in file.code_containers]


for _model in (
    PropertyAccess,
    IndexAccess,
    Call,
    Lambda,
    Pair,
    ObjectLiteral,
    ArrayLiteral,
    New,
    Binary,
    ExpressionStmt,
    VariableDeclStmt,
    AssignmentStmt,
    IfStmt,
    WhileStmt,
    ReturnStmt,
    CodeBlock,
    CodeContainer,
    Container,
    CodeModel,
):
    _model.model_rebuild()
