"""Traversal helpers over the Code model shared by the analysis passes."""

from collections.abc import Iterator
from typing import Any

from pydantic import BaseModel

from .models.code import (
    ArrayLiteral,
    AssignmentStmt,
    Binary,
    Call,
    CodeBlock,
    CodeContainer,
    CodeModel,
    Expr,
    ExpressionStmt,
    IfStmt,
    IndexAccess,
    Lambda,
    LiteralExpr,
    New,
    NodeId,
    ObjectLiteral,
    Opaque,
    PropertyAccess,
    ReturnStmt,
    Statement,
    VarAccess,
    VariableDeclStmt,
    WhileStmt,
)

Node = Statement | Expr | CodeBlock

STRUCTURAL_EXCLUDES = frozenset({"id", "span", "initSite"})


def child_nodes(node: Node) -> list[Node]:
    """Direct children of a node in source (pre-order) order."""
    match node:
        case CodeBlock():
            return list(node.statements)
        case ExpressionStmt():
            return [node.expr]
        case VariableDeclStmt():
            return [node.init] if node.init is not None else []
        case AssignmentStmt():
            return [node.target, node.value]
        case IfStmt():
            return [node.cond, node.then] + ([node.otherwise] if node.otherwise is not None else [])
        case WhileStmt():
            return [node.cond, node.body]
        case ReturnStmt():
            return [node.value] if node.value is not None else []
        case PropertyAccess():
            return [node.object]
        case IndexAccess():
            return [node.object, node.index]
        case Call():
            return ([node.receiver] if node.receiver is not None else []) + list(node.args)
        case Lambda():
            return [node.body]
        case ObjectLiteral():
            return [pair.value for pair in node.pairs]
        case ArrayLiteral():
            return list(node.items)
        case New():
            return list(node.args)
        case Binary():
            return [node.lhs, node.rhs]
        case LiteralExpr() | VarAccess() | Opaque():
            return []
    raise TypeError(f"Not a code node: {type(node).__name__}")


def walk(node: Node) -> Iterator[Node]:
    """Pre-order traversal of `node` and everything below it, lambda bodies included."""
    stack: list[Node] = [node]
    while stack:
        current = stack.pop()
        yield current
        stack.extend(reversed(child_nodes(current)))


def walk_shallow(node: Node) -> Iterator[Node]:
    """Pre-order traversal that does not enter lambda bodies."""
    stack: list[Node] = [node]
    while stack:
        current = stack.pop()
        yield current
        if isinstance(current, Lambda):
            continue
        stack.extend(reversed(child_nodes(current)))


def calls_in_evaluation_order(expr: Node) -> list[Call]:
    """Calls of an expression in evaluation order (receiver, then arguments, then the call itself).

    Lambda bodies are skipped: their calls belong to the lambda's own subgraph.
    """
    found: list[Call] = []

    def visit(node: Node) -> None:
        if isinstance(node, Lambda):
            return
        for child in child_nodes(node):
            visit(child)
        if isinstance(node, Call):
            found.append(node)

    visit(expr)
    return found


def access_path(expr: Expr) -> list[str] | None:
    """Flatten `a.b[0].c` into `["a", "b", "[]", "c"]`; None when the chain does not start at a variable."""
    parts: list[str] = []
    current: Any = expr
    while True:
        match current:
            case VarAccess():
                parts.append(current.name)
                return list(reversed(parts))
            case PropertyAccess():
                parts.append(current.property)
                current = current.object
            case IndexAccess():
                parts.append("[]")
                current = current.object
            case _:
                return None


def structural_form(model: BaseModel) -> Any:
    """Dump of a model with node ids, spans and init sites removed, for structural equality."""

    def strip(value: Any) -> Any:
        if isinstance(value, dict):
            return {key: strip(item) for key, item in value.items() if key not in STRUCTURAL_EXCLUDES}
        if isinstance(value, list):
            return [strip(item) for item in value]
        return value

    return strip(model.model_dump(mode="json", by_alias=True))


class CodeIndex:
    """Lookup tables over a parsed `CodeModel`.

    Parameters
    ----------
    code : CodeModel
        The model to index. It is only read.

    Attributes
    ----------
    nodes : dict[NodeId, Node]
        Every identified node by id.
    parents : dict[NodeId, NodeId]
        Parent id of every node except top-level blocks.
    files : dict[NodeId, str]
        Path of the file each node belongs to.
    """

    def __init__(self, code: CodeModel):
        self.code = code
        self.nodes: dict[NodeId, Node] = {}
        self.parents: dict[NodeId, NodeId] = {}
        self.files: dict[NodeId, str] = {}
        self.containers: dict[str, CodeContainer] = {}
        for file in code.files():
            for container in file.code_containers:
                self.containers[file.path] = container
                for block in container.blocks:
                    self._index(block, None, file.path)

    def _index(self, node: Node, parent: NodeId | None, path: str) -> None:
        stack: list[tuple[Node, NodeId | None]] = [(node, parent)]
        while stack:
            current, owner = stack.pop()
            self.nodes[current.id] = current
            self.files[current.id] = path
            if owner is not None:
                self.parents[current.id] = owner
            stack.extend((child, current.id) for child in child_nodes(current))

    def __getitem__(self, node_id: NodeId) -> Node:
        return self.nodes[node_id]

    def __contains__(self, node_id: NodeId) -> bool:
        return node_id in self.nodes

    def parent(self, node_id: NodeId) -> Node | None:
        owner = self.parents.get(node_id)
        return self.nodes[owner] if owner is not None else None

    def ancestors(self, node_id: NodeId) -> Iterator[Node]:
        owner = self.parents.get(node_id)
        while owner is not None:
            yield self.nodes[owner]
            owner = self.parents.get(owner)

    def statement_of(self, node_id: NodeId) -> Statement | None:
        """Innermost statement containing the node (the node itself when it is a statement)."""
        node = self.nodes[node_id]
        if _is_statement(node):
            return node  # type: ignore[return-value]
        for ancestor in self.ancestors(node_id):
            if _is_statement(ancestor):
                return ancestor  # type: ignore[return-value]
        return None

    def block_of(self, statement_id: NodeId) -> CodeBlock:
        owner = self.parent(statement_id)
        if not isinstance(owner, CodeBlock):
            raise KeyError(f"{statement_id} is not a statement")
        return owner

    def enclosing_lambda(self, node_id: NodeId) -> Lambda | None:
        return next((a for a in self.ancestors(node_id) if isinstance(a, Lambda)), None)

    def function_name(self, node_id: NodeId) -> str | None:
        """Name of the outermost named function around a node.

        A lambda is named by its own name or by the variable it initializes; anonymous
        callbacks are skipped.
        """
        name = None
        for ancestor in self.ancestors(node_id):
            if not isinstance(ancestor, Lambda):
                continue
            candidate = ancestor.name
            owner = self.parent(ancestor.id)
            if candidate is None and isinstance(owner, VariableDeclStmt):
                candidate = owner.name
            name = candidate or name
        return name


def _is_statement(node: Node) -> bool:
    return isinstance(node, ExpressionStmt | VariableDeclStmt | AssignmentStmt | IfStmt | WhileStmt | ReturnStmt)
