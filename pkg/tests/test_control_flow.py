import json
from pathlib import Path

import pytest

from schema_xray.code_walk import CodeIndex, walk
from schema_xray.control_flow import CfgIndex, build_cfg, export_graph, validate_cfg
from schema_xray.errors import ModelError
from schema_xray.models.code import Call, CodeModel, ParseMode, StatementNode
from schema_xray.models.control_flow import EdgeKind, NodeKind, SubGraphKind
from schema_xray.parser import inject_sources
from schema_xray.pipeline import Analysis

from .conftest import FIXTURES, ProgramGenerator


def cfg_of(source: str):
    code = inject_sources({"a.js": source})
    return code, build_cfg(code)


def kinds(graph) -> list[NodeKind]:
    return [node.kind for node in graph.nodes]


def test_running_example_subgraphs(fwm: Analysis):
    graphs = fwm.cfg.subgraphs

    assert [g.kind for g in graphs] == [SubGraphKind.CODE_BLOCK, SubGraphKind.CALLABLE, SubGraphKind.CALLABLE]
    assert [kinds(g).count(NodeKind.CALL) for g in graphs] == [3, 3, 3]
    assert [kinds(g).count(NodeKind.SELECTION) for g in graphs] == [0, 0, 1]
    assert kinds(graphs[0]).count(NodeKind.STATEMENT) == 3


def test_callbacks_are_entered_through_call_edges(fwm: Analysis):
    script, outer, inner = fwm.cfg.subgraphs

    calls = [e for g in fwm.cfg.subgraphs for e in g.edges if e.kind == EdgeKind.CALL]
    assert [e.target for e in calls] == [outer.start, inner.start]
    assert calls[0].source in {n.id for n in script.nodes}
    assert calls[1].source in {n.id for n in outer.nodes}


def test_call_nodes_follow_execution_order(fwm: Analysis):
    index = CodeIndex(fwm.code)

    methods = [index[node.expr_ref].method for node in CfgIndex(fwm.cfg).call_nodes()]

    assert methods == ["db", "collection", "findOne", "db", "collection", "findOne", "log", "log", "log"]


def test_if_else_branches_join():
    _, cfg = cfg_of("if (a == 1) {\n  f();\n} else {\n  g();\n}\nh();\n")

    graph = cfg.subgraphs[0]
    assert kinds(graph) == [
        NodeKind.START,
        NodeKind.SELECTION,
        NodeKind.CALL,
        NodeKind.CALL,
        NodeKind.CALL,
        NodeKind.END,
    ]
    selection = graph.nodes[1]
    outgoing = sorted(e.kind for e in graph.edges if e.source == selection.id)
    assert outgoing == sorted([EdgeKind.COND_TRUE, EdgeKind.COND_FALSE])
    after = graph.nodes[4]
    assert len(after.incoming) == 2


def test_if_without_else_falls_through():
    _, cfg = cfg_of("if (a) {\n  f();\n}\n")

    graph = cfg.subgraphs[0]
    end = graph.nodes[-1]
    sources = {e.source: e.kind for e in graph.edges if e.target == end.id}
    assert sorted(sources.values()) == sorted([EdgeKind.SEQ, EdgeKind.COND_FALSE])


def test_while_loops_back_to_condition_calls():
    _, cfg = cfg_of("while (more()) {\n  step();\n}\n")

    graph = cfg.subgraphs[0]
    assert kinds(graph) == [NodeKind.START, NodeKind.CALL, NodeKind.SELECTION, NodeKind.CALL, NodeKind.END]
    back = [e for e in graph.edges if e.source == graph.nodes[3].id]
    assert [e.target for e in back] == [graph.nodes[1].id]


def test_empty_script():
    _, cfg = cfg_of("")

    graph = cfg.subgraphs[0]
    assert kinds(graph) == [NodeKind.START, NodeKind.END]
    assert [(e.source, e.target) for e in graph.edges] == [(graph.start, graph.end)]


def test_function_declaration_is_a_root_callable():
    _, cfg = cfg_of("function findAll(req, res) {\n  res.json(1);\n}\n")

    assert [g.kind for g in cfg.subgraphs] == [SubGraphKind.CODE_BLOCK, SubGraphKind.CALLABLE]
    assert cfg.subgraphs[1].name == "findAll"


def test_every_call_has_exactly_one_node(music: Analysis):
    blocks = [block for script in music.code.scripts() for block in script.blocks]
    calls = {node.id for block in blocks for node in walk(block) if isinstance(node, Call)}

    referenced = [n.expr_ref for g in music.cfg.subgraphs for n in g.nodes if n.kind == NodeKind.CALL]

    assert sorted(referenced) == sorted(calls)


def test_validate_rejects_unreachable_node(fwm: Analysis):
    broken = fwm.cfg.model_copy(deep=True)
    graph = broken.subgraphs[0]
    edge = next(e for e in graph.edges if e.target == graph.end)
    graph.edges.remove(edge)

    with pytest.raises(ModelError):
        validate_cfg(broken)


def test_export_dot(fwm: Analysis):
    text = export_graph(fwm.cfg, "dot")

    assert text.startswith("digraph cfg {\n")
    assert text.count("subgraph ") == 3
    assert text.count("shape=diamond") == 1
    assert text.count("style=dashed") == 2


def test_export_cypher(fwm: Analysis):
    text = export_graph(fwm.cfg, "graph-cypher")

    nodes = sum(len(g.nodes) for g in fwm.cfg.subgraphs)
    edges = sum(len(g.edges) for g in fwm.cfg.subgraphs)
    assert text.count(":CfgNode {") == nodes
    assert text.count(")-[:") == edges
    assert "-[:CALL {" in text


def test_export_json(fwm: Analysis):
    data = json.loads(export_graph(fwm.cfg, "json"))

    assert data["formatVersion"] == "1.0"
    assert len(data["subgraphs"]) == 3


def test_export_unknown_format(fwm: Analysis):
    with pytest.raises(ValueError):
        export_graph(fwm.cfg, "svg")


def generated(seed: int) -> CodeModel:
    return inject_sources({"a.js": ProgramGenerator(seed).program()})


def fixture(path: Path) -> CodeModel:
    return inject_sources({path.name: path.read_text(encoding="utf-8")}, mode=ParseMode.LENIENT)


def assert_covered(code: CodeModel) -> None:
    cfg = build_cfg(code)
    validate_cfg(cfg, code)
    nodes = [node for graph in cfg.subgraphs for node in graph.nodes]
    tree = [node for script in code.scripts() for node in walk(script.body)]

    calls = sorted(node.id for node in tree if isinstance(node, Call))
    assert sorted(n.expr_ref for n in nodes if n.kind == NodeKind.CALL) == calls
    statements = {node.id for node in tree if isinstance(node, StatementNode)}
    assert {n.stmt_ref for n in nodes if n.stmt_ref is not None} == statements


@pytest.mark.parametrize("seed", range(200))
def test_generated_programs_are_covered(seed: int):
    assert_covered(generated(seed))


@pytest.mark.parametrize("path", sorted(FIXTURES.rglob("*.js")), ids=lambda p: str(p.relative_to(FIXTURES)))
def test_fixtures_are_covered(path: Path):
    assert_covered(fixture(path))


@pytest.mark.parametrize("count", [1, 2, 7, 30])
def test_straight_line_script_is_a_chain(count: int):
    lines = [f"let v{i} = {i};" if i % 2 else f"user.name = 'n{i}';" for i in range(count)]
    _, cfg = cfg_of("\n".join(lines) + "\n")

    graph = cfg.subgraphs[0]
    assert len(cfg.subgraphs) == 1
    assert len(graph.nodes) == count + 2
    assert kinds(graph) == [NodeKind.START] + [NodeKind.STATEMENT] * count + [NodeKind.END]
    assert len(graph.edges) == count + 1
    assert {e.kind for e in graph.edges} == {EdgeKind.SEQ}
    assert [(e.source, e.target) for e in graph.edges] == [
        (a.id, b.id) for a, b in zip(graph.nodes, graph.nodes[1:])
    ]
