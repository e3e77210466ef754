"""
Control Flow model derivation and export.

One subgraph is built per script body and per callable (lambda or function) body.
Every Call evaluated by a statement becomes a call node, in evaluation order; an `if`
or `while` becomes a selection node preceded by the calls of its condition. A lambda
passed as an argument is linked from the call node that receives it by a `call` edge
into the start node of the lambda's own subgraph.
"""

import logging
from collections.abc import Iterator

import networkx as nx

from .code_walk import CodeIndex, Node, calls_in_evaluation_order, child_nodes, walk_shallow
from .errors import ModelError
from .models.base import canonical_json
from .models.code import (
    Call,
    CodeBlock,
    CodeModel,
    IfStmt,
    Lambda,
    NodeId,
    Statement,
    VariableDeclStmt,
    WhileStmt,
)
from .models.control_flow import (
    CfgEdge,
    CfgNode,
    ControlFlowModel,
    EdgeKind,
    NodeKind,
    NodeRef,
    SubGraph,
    SubGraphKind,
)

logger = logging.getLogger(__name__)

Pending = list[tuple[CfgNode, EdgeKind, NodeId | None]]

EDGE_ORDER = {EdgeKind.CALL: 0, EdgeKind.COND_TRUE: 1, EdgeKind.SEQ: 2, EdgeKind.COND_FALSE: 3}


class _SubGraphBuilder:
    def __init__(self, owner: "CfgBuilder", graph: SubGraph):
        self.owner = owner
        self.graph = graph

    def node(self, kind: NodeKind, stmt: Statement | None = None, expr_ref: NodeId | None = None) -> CfgNode:
        node = CfgNode(
            id=f"{self.graph.id}.n{len(self.graph.nodes)}",
            kind=kind,
            stmt_ref=stmt.id if stmt is not None else None,
            expr_ref=expr_ref,
            line=stmt.span.line if stmt is not None else None,
        )
        self.graph.nodes.append(node)
        return node

    def edge(self, source: CfgNode, target: CfgNode, kind: EdgeKind, expr_ref: NodeId | None = None) -> CfgEdge:
        edge = CfgEdge(
            id=f"{self.graph.id}.e{len(self.graph.edges)}",
            kind=kind,
            source=source.id,
            target=target.id,
            expr_ref=expr_ref,
        )
        self.graph.edges.append(edge)
        source.outgoing.append(edge.id)
        target.incoming.append(edge.id)
        return edge

    def attach(self, pending: Pending, node: CfgNode) -> Pending:
        for source, kind, expr_ref in pending:
            self.edge(source, node, kind, expr_ref)
        return [(node, EdgeKind.SEQ, None)]

    def build(self, block: CodeBlock) -> None:
        start = self.node(NodeKind.START)
        self.graph.start = start.id
        pending = self.block(block, [(start, EdgeKind.SEQ, None)])
        end = self.node(NodeKind.END)
        self.graph.end = end.id
        self.attach(pending, end)

    def block(self, block: CodeBlock, pending: Pending) -> Pending:
        for statement in block.statements:
            pending = self.statement(statement, pending)
        return pending

    def calls(self, statement: Statement, calls: list[Call], pending: Pending) -> tuple[Pending, CfgNode | None]:
        first = None
        for call in calls:
            node = self.node(NodeKind.CALL, statement, call.id)
            first = first or node
            pending = self.attach(pending, node)
            for arg in call.args:
                if isinstance(arg, Lambda):
                    target = self.owner.callable(arg, self.graph.path)
                    self.edge(node, target, EdgeKind.CALL, call.id)
        return pending, first

    def statement(self, statement: Statement, pending: Pending) -> Pending:
        match statement:
            case IfStmt():
                pending, _ = self.calls(statement, calls_in_evaluation_order(statement.cond), pending)
                self._roots(statement.cond)
                selection = self.node(NodeKind.SELECTION, statement, statement.cond.id)
                self.attach(pending, selection)
                taken = self.block(statement.then, [(selection, EdgeKind.COND_TRUE, statement.cond.id)])
                skipped: Pending = [(selection, EdgeKind.COND_FALSE, statement.cond.id)]
                if statement.otherwise is not None:
                    skipped = self.block(statement.otherwise, skipped)
                return taken + skipped
            case WhileStmt():
                pending, first = self.calls(statement, calls_in_evaluation_order(statement.cond), pending)
                self._roots(statement.cond)
                selection = self.node(NodeKind.SELECTION, statement, statement.cond.id)
                self.attach(pending, selection)
                looped = self.block(statement.body, [(selection, EdgeKind.COND_TRUE, statement.cond.id)])
                self.attach(looped, first or selection)
                return [(selection, EdgeKind.COND_FALSE, statement.cond.id)]
            case _:
                calls = [call for expr in child_nodes(statement) for call in calls_in_evaluation_order(expr)]
                for expr in child_nodes(statement):
                    self._roots(expr)
                if not calls:
                    return self.attach(pending, self.node(NodeKind.STATEMENT, statement))
                pending, _ = self.calls(statement, calls, pending)
                return pending

    def _roots(self, expr: Node) -> None:
        """Lambdas of an expression that are not call arguments become root callables."""
        arguments = {arg.id for node in walk_shallow(expr) if isinstance(node, Call) for arg in node.args}
        for node in walk_shallow(expr):
            if isinstance(node, Lambda) and node.id not in arguments and node.id not in self.owner.built:
                self.owner.callable(node, self.graph.path)


class CfgBuilder:
    """Builds the Control Flow model of a whole `CodeModel`.

    Parameters
    ----------
    code : CodeModel
        The parsed model. It is only read.
    """

    def __init__(self, code: CodeModel):
        self.code = code
        self.index = CodeIndex(code)
        self.model = ControlFlowModel()
        self.built: dict[NodeId, SubGraph] = {}
        self.logger = logging.getLogger(__name__)

    def _new_graph(self, kind: SubGraphKind, block: CodeBlock, path: str, name: str | None) -> SubGraph:
        graph = SubGraph(
            id=f"s{len(self.model.subgraphs)}", kind=kind, block_ref=block.id, path=path, name=name, start="", end=""
        )
        self.model.subgraphs.append(graph)
        return graph

    def callable(self, function: Lambda, path: str) -> CfgNode:
        """Build the subgraph of a lambda body (once) and return its start node."""
        if function.id not in self.built:
            name = function.name
            owner = self.index.parent(function.id) if function.id in self.index else None
            if name is None and isinstance(owner, VariableDeclStmt):
                name = owner.name
            graph = self._new_graph(SubGraphKind.CALLABLE, function.body, path, name)
            self.built[function.id] = graph
            _SubGraphBuilder(self, graph).build(function.body)
        graph = self.built[function.id]
        return graph.nodes[0]

    def build(self) -> ControlFlowModel:
        for file in self.code.files():
            for container in file.code_containers:
                for block in container.blocks:
                    graph = self._new_graph(SubGraphKind.CODE_BLOCK, block, file.path, None)
                    _SubGraphBuilder(self, graph).build(block)
        for graph in self.model.subgraphs:
            if graph.block_ref and graph.block_ref not in self.index:
                raise ModelError(f"Subgraph {graph.id} references missing block {graph.block_ref}")
        self.logger.info(
            f"Built {len(self.model.subgraphs)} subgraph(s) with "
            f"{sum(len(g.nodes) for g in self.model.subgraphs)} node(s)"
        )
        return self.model


def build_cfg(code: CodeModel) -> ControlFlowModel:
    """Derive the Control Flow model of `code` and check its well-formedness.

    Raises
    ------
    ModelError
        When a statement references a missing block or a subgraph is malformed.
    """
    cfg = CfgBuilder(code).build()
    validate_cfg(cfg, code)
    return cfg


def validate_cfg(cfg: ControlFlowModel, code: CodeModel | None = None) -> None:
    """Check the subgraph invariants.

    Start has no incoming sequential or conditional edge, end has no outgoing edge,
    every node is reachable from start and end is reachable from every node. Call edges
    must target the start node of another subgraph; conditional edges must leave a
    selection node.

    Raises
    ------
    ModelError
        On the first violated invariant.
    """
    index = CodeIndex(code) if code is not None else None
    starts = {graph.start: graph.id for graph in cfg.subgraphs}
    for graph in cfg.subgraphs:
        nodes = {node.id: node for node in graph.nodes}
        digraph = nx.DiGraph()
        digraph.add_nodes_from(nodes)
        for edge in graph.edges:
            if edge.kind == EdgeKind.CALL:
                if edge.target not in starts or starts[edge.target] == graph.id:
                    raise ModelError(f"{graph.id}: call edge {edge.id} does not enter another subgraph")
                continue
            if edge.kind in (EdgeKind.COND_TRUE, EdgeKind.COND_FALSE) and nodes[edge.source].kind != NodeKind.SELECTION:
                raise ModelError(f"{graph.id}: conditional edge {edge.id} leaves a {nodes[edge.source].kind} node")
            digraph.add_edge(edge.source, edge.target)

        if graph.start not in nodes or graph.end not in nodes:
            raise ModelError(f"{graph.id}: start or end node missing")
        if digraph.in_degree(graph.start) != 0:
            raise ModelError(f"{graph.id}: start node has incoming edges")
        if digraph.out_degree(graph.end) != 0:
            raise ModelError(f"{graph.id}: end node has outgoing edges")
        reachable = nx.descendants(digraph, graph.start) | {graph.start}
        if unreachable := set(nodes) - reachable:
            raise ModelError(f"{graph.id}: nodes unreachable from start: {sorted(unreachable)}")
        reaching = nx.ancestors(digraph, graph.end) | {graph.end}
        if stuck := set(nodes) - reaching:
            raise ModelError(f"{graph.id}: end is unreachable from {sorted(stuck)}")

        for node in graph.nodes:
            carries = node.stmt_ref is not None
            if carries != (node.kind not in (NodeKind.START, NodeKind.END)):
                raise ModelError(f"{graph.id}: node {node.id} ({node.kind}) has a wrong statement reference")
            if index is not None and carries and node.stmt_ref not in index:
                raise ModelError(f"{graph.id}: node {node.id} references missing statement {node.stmt_ref}")


class CfgIndex:
    """Navigation over a `ControlFlowModel` (getPreviousNode / getNextNode).

    Successors and predecessors follow call edges across subgraphs, so a traversal
    leaving a call node enters the callback it receives, and a traversal reaching a
    callback's start node continues backward into the invoking call node.
    """

    def __init__(self, cfg: ControlFlowModel):
        self.cfg = cfg
        self.nodes: dict[NodeRef, CfgNode] = {}
        self.edges: dict[str, CfgEdge] = {}
        self.graph_of: dict[NodeRef, SubGraph] = {}
        for graph in cfg.subgraphs:
            for node in graph.nodes:
                self.nodes[node.id] = node
                self.graph_of[node.id] = graph
            for edge in graph.edges:
                self.edges[edge.id] = edge

    def successors(self, ref: NodeRef, follow_calls: bool = True) -> list[NodeRef]:
        edges = sorted((self.edges[e] for e in self.nodes[ref].outgoing), key=lambda e: EDGE_ORDER[e.kind])
        return [e.target for e in edges if follow_calls or e.kind != EdgeKind.CALL]

    def predecessors(self, ref: NodeRef, follow_calls: bool = True) -> list[NodeRef]:
        edges = [self.edges[e] for e in self.nodes[ref].incoming]
        return [e.source for e in edges if follow_calls or e.kind != EdgeKind.CALL]

    def call_nodes(self) -> Iterator[CfgNode]:
        """Call nodes in subgraph-linked execution order.

        Root subgraphs (scripts, then uncalled callables) are walked depth first;
        entering a callback through its call edge right after the invoking call node.
        """
        seen: set[NodeRef] = set()
        called = {self.edges[e].target for node in self.nodes.values() for e in node.outgoing if self.edges[e].kind == EdgeKind.CALL}
        roots = [graph for graph in self.cfg.subgraphs if graph.start not in called]
        for graph in roots:
            stack = [graph.start]
            while stack:
                ref = stack.pop()
                if ref in seen:
                    continue
                seen.add(ref)
                node = self.nodes[ref]
                if node.kind == NodeKind.CALL:
                    yield node
                stack.extend(reversed(self.successors(ref)))


def _dot_id(text: str) -> str:
    return '"' + text.replace('"', '\\"') + '"'


def _cypher_var(ref: NodeRef) -> str:
    return ref.replace(".", "_")


def export_graph(cfg: ControlFlowModel, format: str = "dot") -> str:
    """Render the Control Flow model as DOT, graph-cypher or canonical JSON text.

    Parameters
    ----------
    cfg : ControlFlowModel
        The model to export.
    format : str
        `dot` (one cluster per subgraph, node labels `kind:line`), `graph-cypher`
        (CREATE statements for nodes, then edges) or `json`.

    Returns
    -------
    str
        The exported text.
    """
    match format:
        case "json":
            return canonical_json(cfg)
        case "dot":
            lines = ["digraph cfg {"]
            for graph in cfg.subgraphs:
                label = graph.name or f"{graph.kind} {graph.path}".strip()
                lines.append(f"\tsubgraph {_dot_id('cluster_' + graph.id)} {{")
                lines.append(f"\t\tlabel = {_dot_id(label)};")
                for node in graph.nodes:
                    text = f"{node.kind}:{node.line}" if node.line is not None else str(node.kind)
                    shape = "diamond" if node.kind == NodeKind.SELECTION else "box"
                    lines.append(f"\t\t{_dot_id(node.id)} [label={_dot_id(text)}, shape={shape}];")
                lines.append("\t}")
            for graph in cfg.subgraphs:
                for edge in graph.edges:
                    style = "dashed" if edge.kind == EdgeKind.CALL else "solid"
                    lines.append(
                        f"\t{_dot_id(edge.source)} -> {_dot_id(edge.target)} [label={_dot_id(str(edge.kind))}, style={style}];"
                    )
            lines.append("}")
            return "\n".join(lines) + "\n"
        case "graph-cypher":
            lines = []
            for graph in cfg.subgraphs:
                for node in graph.nodes:
                    props = [f"id: '{node.id}'", f"kind: '{node.kind}'", f"subgraph: '{graph.id}'"]
                    if node.stmt_ref is not None:
                        props.append(f"stmtRef: '{node.stmt_ref}'")
                    if node.line is not None:
                        props.append(f"line: {node.line}")
                    lines.append(f"CREATE ({_cypher_var(node.id)}:CfgNode {{{', '.join(props)}}})")
            for graph in cfg.subgraphs:
                for edge in graph.edges:
                    lines.append(
                        f"CREATE ({_cypher_var(edge.source)})-[:{edge.kind.upper()} {{id: '{edge.id}'}}]->"
                        f"({_cypher_var(edge.target)})"
                    )
            return "\n".join(lines) + ";\n" if lines else ""
    raise ValueError(f"Unknown graph format: {format}")
