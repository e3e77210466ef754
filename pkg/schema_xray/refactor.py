"""
Join removal: duplication detection, plan construction and plan application.

A join is removable when the fields it fetches are used together with the document the
join started from. Those fields are copied next to the reference, the join disappears
from the code and every access to a copied field is redirected to the copy.
"""

import hashlib
import json
import logging
from collections.abc import Iterator
from dataclasses import dataclass
from typing import Any, Generic, TypeVar

from .code_walk import CodeIndex, child_nodes, walk, walk_shallow
from .control_flow import CfgIndex
from .errors import PlanStaleError, RewriteError
from .migration import emit_copy, emit_migration
from .models.base import Diagnostic
from .models.code import (
    ArrayLiteral,
    AssignmentStmt,
    Binary,
    Call,
    CodeBlock,
    CodeModel,
    Expr,
    ExpressionStmt,
    IfStmt,
    IndexAccess,
    Lambda,
    LiteralExpr,
    New,
    ObjectLiteral,
    Opaque,
    ParseMode,
    PropertyAccess,
    ReturnStmt,
    Statement,
    VarAccess,
    VariableDeclStmt,
    WhileStmt,
)
from .models.control_flow import ControlFlowModel, NodeRef
from .models.dos import (
    DatabaseOperation,
    DataStructure,
    DosField,
    DOSModel,
    FieldCopy,
    FieldKind,
    FieldSource,
    FieldType,
    JoinDirection,
    JoinLink,
)
from .models.plans import (
    Duplicate,
    FileChange,
    JoinRemovalPlan,
    JoinType,
    PlanLink,
    PlanRow,
    RefactorOutcome,
)
from .models.profile import ApiProfile, load_profile
from .models.uschema import MANY, AggregateFeature, AttributeFeature, EntityType, StructuralVariation, USchemaModel
from .naming import capitalize, entity_name, reference_stem
from .parser import inject_sources
from .printer import print_statement, regenerate
from .uschema import structure_entities

logger = logging.getLogger(__name__)

L = TypeVar("L")

Step = tuple[str, Any]


class JoinEscapeError(RewriteError):
    """The joined documents are used as a whole value, not only through their fields."""


def unchain(expr: Expr) -> tuple[Expr, list[Step]]:
    """Split `a.b[i].c` into its root `a` and the steps `.b`, `[i]`, `.c`."""
    steps: list[Step] = []
    current = expr
    while isinstance(current, PropertyAccess | IndexAccess):
        steps.append(("prop", current.property) if isinstance(current, PropertyAccess) else ("index", current.index))
        current = current.object
    steps.reverse()
    return current, steps


def rechain(root: Expr, steps: list[Step]) -> Expr:
    expr = root
    for kind, value in steps:
        expr = PropertyAccess(object=expr, property=value) if kind == "prop" else IndexAccess(object=expr, index=value)
    return expr


def header_exprs(statement: Statement) -> list[Expr]:
    """Expressions a statement evaluates itself, nested blocks excluded."""
    match statement:
        case IfStmt() | WhileStmt():
            return [statement.cond]
        case ExpressionStmt():
            return [statement.expr]
        case VariableDeclStmt():
            return [statement.init] if statement.init is not None else []
        case AssignmentStmt():
            return [statement.target, statement.value]
        case ReturnStmt():
            return [statement.value] if statement.value is not None else []
    return []


def accesses(expr: Expr, method: str | None = None) -> Iterator[tuple[Expr, str | None]]:
    """Maximal access chains of an expression, with the method they are the receiver of."""
    match expr:
        case Lambda():
            return
        case VarAccess() | PropertyAccess() | IndexAccess():
            root, steps = unchain(expr)
            yield expr, method
            for kind, value in steps:
                if kind == "index":
                    yield from accesses(value)
            if not isinstance(root, VarAccess):
                yield from accesses(root)
            return
        case Call():
            if expr.receiver is not None:
                yield from accesses(expr.receiver, expr.method)
            for arg in expr.args:
                yield from accesses(arg)
            return
    for child in child_nodes(expr):
        yield from accesses(child)  # type: ignore[arg-type]


@dataclass
class JoinAccess(Generic[L]):
    link: L
    base: Expr | None
    rest: list[Step]
    element: bool
    is_list: bool


class JoinView(Generic[L]):
    """Variables through which joined documents, and the documents they join, are reached.

    Parameters
    ----------
    aggregate : bool
        Joins are `$lookup` stages reached through their alias on a base document;
        otherwise the join result is a variable of its own.
    joins : dict[str, tuple[L, bool]]
        Alias or result variable of every join, with its link and whether it is a list.
    base_variable : str | None
        Variable holding the base documents.
    base_many : bool
        The base variable holds a list.
    collection_methods : list[str]
        Array methods of the driver profile.
    """

    def __init__(
        self,
        aggregate: bool,
        joins: dict[str, tuple[L, bool]],
        base_variable: str | None,
        base_many: bool,
        collection_methods: list[str],
    ):
        self.aggregate = aggregate
        self.joins = dict(joins)
        self.collection_methods = set(collection_methods)
        self.elements: dict[str, L] = {}
        self.base_lists: set[str] = set()
        self.base_docs: set[str] = set()
        if base_variable is not None:
            (self.base_lists if base_many else self.base_docs).add(base_variable)

    def _base_skip(self, name: str, steps: list[Step]) -> int | None:
        if name in self.base_docs:
            return 0
        if name in self.base_lists and steps and steps[0][0] == "index":
            return 1
        return None

    def match(self, expr: Expr) -> JoinAccess[L] | None:
        root, steps = unchain(expr)
        if not isinstance(root, VarAccess):
            return None
        name = root.name
        if name in self.elements:
            return JoinAccess(self.elements[name], None, steps, True, False)
        if not self.aggregate:
            if name in self.joins:
                link, is_list = self.joins[name]
                return JoinAccess(link, None, steps, False, is_list)
            return None
        skip = self._base_skip(name, steps)
        if skip is None or len(steps) <= skip:
            return None
        kind, value = steps[skip]
        if kind != "prop" or value not in self.joins:
            return None
        link, is_list = self.joins[value]
        return JoinAccess(link, rechain(root, steps[:skip]), steps[skip + 1 :], False, is_list)

    def is_base(self, expr: Expr) -> bool:
        """Field access on a base document not going through a join."""
        root, steps = unchain(expr)
        if not isinstance(root, VarAccess):
            return False
        skip = self._base_skip(root.name, steps)
        return skip is not None and len(steps) > skip and self.match(expr) is None

    def field(self, access: JoinAccess[L]) -> str | None:
        rest = access.rest
        if access.is_list and not access.element:
            if not rest or rest[0][0] != "index":
                return None
            rest = rest[1:]
        if rest and rest[0][0] == "prop" and rest[0][1] not in self.collection_methods:
            return rest[0][1]
        return None

    def bind_call(self, call: Call) -> None:
        if call.method not in self.collection_methods or call.receiver is None:
            return
        params = [arg.params[0] for arg in call.args if isinstance(arg, Lambda) and arg.params]
        if not params:
            return
        access = self.match(call.receiver)
        if access is not None and access.is_list and not access.rest and not access.element:
            self.elements.update((param, access.link) for param in params)
        elif isinstance(call.receiver, VarAccess) and call.receiver.name in self.base_lists:
            self.base_docs.update(params)

    def bind_alias(self, name: str, value: Expr | None) -> None:
        if not isinstance(value, VarAccess):
            return
        source = value.name
        if source in self.elements:
            self.elements[name] = self.elements[source]
        elif not self.aggregate and source in self.joins:
            self.joins[name] = self.joins[source]
        elif source in self.base_docs:
            self.base_docs.add(name)
        elif source in self.base_lists:
            self.base_lists.add(name)


def structure_at(dos: DOSModel, container: str | None, path: list[str]) -> DataStructure | None:
    found = dos.container(container) if container is not None else None
    if found is None or not found.data_structures:
        return None
    structure = found.data_structures[0]
    for name in (p for p in path if p != "[]"):
        field = structure.field(name)
        inner = field.type.innermost if field is not None else None
        if inner is None or inner.kind != FieldKind.AGGREGATE or inner.target is None:
            return None
        structure = dos.structure(inner.target)
    return structure


def _callback(statement: Statement, variable: str | None) -> Lambda | None:
    if variable is None:
        return None
    return next((n for n in walk_shallow(statement) if isinstance(n, Lambda) and variable in n.params), None)


class DuplicationDetector:
    """Finds, for every join, the joined fields used together with the base document.

    Parameters
    ----------
    cfg : ControlFlowModel
        Control flow of `code`.
    dos : DOSModel
        Extracted model with join marks; a copy is annotated.
    code : CodeModel
        The analyzed code.
    profile : ApiProfile
        Driver profile, for its collection methods.
    """

    def __init__(self, cfg: ControlFlowModel, dos: DOSModel, code: CodeModel, profile: ApiProfile):
        self.logger = logging.getLogger(__name__)
        self.dos = dos.model_copy(deep=True)
        self.profile = profile
        self.index = CodeIndex(code)
        self.flow = CfgIndex(cfg)
        self._structures = sum(1 for _ in self.dos.structures())

    def view(self, op: DatabaseOperation) -> JoinView[JoinLink]:
        methods = self.profile.collection_methods
        if op.aggregate:
            joins = {link.alias: (link, link.unwind_ref is None) for link in op.joins if link.alias}
            return JoinView(True, joins, op.result_variable, op.many, methods)
        prev = self.dos.operation(op.prev_dbo) if op.prev_dbo else None
        joins = {op.result_variable: (op.joins[0], op.many)} if op.result_variable and op.joins else {}
        base = prev.result_variable if prev is not None else None
        return JoinView(False, joins, base, prev.many if prev is not None else False, methods)

    def statements_after(self, op: DatabaseOperation) -> list[Statement]:
        """Statements reached from the join, depth first, limited to the join callback."""
        scope = _callback(self.index[op.stmt_ref], op.result_variable)  # type: ignore[arg-type]
        found: list[Statement] = []
        seen_statements: set[str] = set()
        visited: set[NodeRef] = set()
        stack = list(reversed(self.flow.successors(op.node_ref)))
        while stack:
            ref = stack.pop()
            if ref in visited:
                continue
            visited.add(ref)
            node = self.flow.nodes[ref]
            if node.stmt_ref is not None and node.stmt_ref not in seen_statements:
                seen_statements.add(node.stmt_ref)
                inside = scope is None or any(a.id == scope.id for a in self.index.ancestors(node.stmt_ref))
                if inside:
                    found.append(self.index[node.stmt_ref])  # type: ignore[arg-type]
            stack.extend(reversed(self.flow.successors(ref)))
        return found

    def scan(self, op: DatabaseOperation) -> dict[int, list[str]]:
        view = self.view(op)
        positions = {id(link): n for n, link in enumerate(op.joins)}
        fields: dict[int, list[str]] = {n: [] for n in range(len(op.joins))}
        for statement in self.statements_after(op):
            exprs = header_exprs(statement)
            for expr in exprs:
                for node in walk_shallow(expr):
                    if isinstance(node, Call):
                        view.bind_call(node)
            if isinstance(statement, VariableDeclStmt):
                view.bind_alias(statement.name, statement.init)
            elif isinstance(statement, AssignmentStmt) and isinstance(statement.target, VarAccess):
                view.bind_alias(statement.target.name, statement.value)
            chains = [chain for expr in exprs for chain, _ in accesses(expr)]
            joined = [(access, chain) for chain in chains if (access := view.match(chain)) is not None]
            if not joined:
                continue
            for access, _ in joined:
                if statement.id not in access.link.usage_sites:
                    access.link.usage_sites.append(statement.id)
            if not any(view.is_base(chain) for chain in chains):
                continue
            for access, _ in joined:
                name = view.field(access)
                position = positions[id(access.link)]
                if name is not None and name not in fields[position]:
                    fields[position].append(name)
                if statement.id not in access.link.co_use_sites:
                    access.link.co_use_sites.append(statement.id)
        return fields

    def next_structure_id(self) -> str:
        numbers = [int(s.id[2:]) for s in self.dos.structures() if s.id.startswith("ds") and s.id[2:].isdigit()]
        return f"ds{max(numbers, default=0) + 1}"

    def annotate(self, op: DatabaseOperation, link: JoinLink, fields: list[str]) -> None:
        if link.direction == JoinDirection.FORWARD:
            container, path = link.reference_container, link.reference_field[:-1]
            stem = reference_stem(link.reference_field[-1])
        else:
            container, path = link.referenced_container, []
            stem = entity_name(link.container).lower()
        destination = structure_at(self.dos, container, path)
        if destination is None:
            message = f"{op.id}: no structure at {container}.{'.'.join(path)} receives the copies"
            self.logger.warning(message)
            self.dos.diagnostics.append(Diagnostic(code="copy-destination", message=message, path=op.path, line=op.line))
            return
        joined = structure_at(self.dos, link.container, [])
        copies = []
        for name in fields:
            source = joined.field(name) if joined is not None else None
            type = source.type if source is not None else FieldType.attribute(None)
            copies.append(FieldCopy(source_field=name, new_name=name if len(fields) > 1 else f"{stem}_{name}", type=type))
        holder = stem if len(fields) > 1 else copies[0].new_name
        if destination.field(holder) is not None:
            message = f"{op.id}: {destination.name} already has a field {holder}, using {holder}_dup"
            self.logger.warning(message)
            self.dos.diagnostics.append(Diagnostic(code="copy-name-collision", message=message, path=op.path, line=op.line))
            holder += "_dup"
            if len(fields) == 1:
                copies[0].new_name = holder
        if len(fields) > 1:
            nested = DataStructure(
                id=self.next_structure_id(),
                name=f"{capitalize(stem)}Copy",
                root=False,
                fields=[
                    DosField(name=c.new_name, type=c.type, duplicated_from=FieldSource(container=link.container, field=c.source_field))
                    for c in copies
                ],
            )
            self.dos.nested_structures.append(nested)
            type = FieldType(kind=FieldKind.AGGREGATE, target=nested.id)
            link.embedded = holder
            source = None
        else:
            type = copies[0].type
            source = FieldSource(container=link.container, field=copies[0].source_field)
        if link.collection:
            type = FieldType.collection(type)
        destination.fields.append(DosField(name=holder, type=type, duplicated_from=source))
        link.copies = copies
        link.destination_container = container
        link.destination_path = path

    def detect(self) -> DOSModel:
        for op in self.dos.joins():
            fields = self.scan(op)
            for position, link in enumerate(op.joins):
                if fields[position]:
                    self.annotate(op, link, fields[position])
                else:
                    self.logger.debug(f"{op.id}: no field of {link.container} is used with the base document")
        return self.dos


def detect_duplications(
    cfg: ControlFlowModel, dos: DOSModel, code: CodeModel, profile: ApiProfile | None = None
) -> DOSModel:
    """Annotate every join link with the fields to copy and add the copies to the structures."""
    return DuplicationDetector(cfg, dos, code, profile or load_profile()).detect()


class CodeRewriter:
    """Rewrites statements so that accesses to joined fields read the copies instead.

    Parameters
    ----------
    view : JoinView[PlanLink]
        Bindings of the join being removed; updated while rewriting.
    holders : dict[int, Expr]
        For sequential joins, the expression holding the reference, per link.
    """

    def __init__(self, view: JoinView[PlanLink], holders: dict[int, Expr]):
        self.view = view
        self.holders = holders
        self.rewritten = 0

    def destination(self, access: JoinAccess[PlanLink]) -> Expr:
        if access.base is not None:
            return access.base
        holder = self.holders.get(id(access.link))
        if holder is None:
            raise RewriteError(f"No expression holds the reference {'.'.join(access.link.reference_field)}")
        return holder.model_copy(deep=True)

    def replace(self, access: JoinAccess[PlanLink], original: Expr) -> Expr:
        link, rest = access.link, access.rest
        copied = {d.source_field for d in link.duplicates}

        def check(step: Step | None) -> None:
            if step is None:
                raise JoinEscapeError(f"The joined {link.target_container} documents are used as a whole")
            if step[0] != "prop" or step[1] not in copied:
                raise RewriteError(f"Field {step[1] if step[0] == 'prop' else '[]'} of {link.target_container} is used but not copied")

        if access.element:
            if not rest and link.embedded:
                return original
            check(rest[0] if rest else None)
            self.rewritten += 1
            return original if link.embedded else rechain(unchain(original)[0], rest[1:])
        holder = PropertyAccess(object=self.destination(access), property=link.copy_name)
        if access.is_list:
            if not rest:
                raise JoinEscapeError(f"The joined {link.target_container} list is used as a whole")
            if rest[0][0] == "prop" and rest[0][1] in self.view.collection_methods:
                self.rewritten += 1
                return rechain(holder, rest)
            if rest[0][0] != "index":
                check(rest[0])
            if len(rest) == 1 and link.embedded:
                self.rewritten += 1
                return rechain(holder, rest)
            check(rest[1] if len(rest) > 1 else None)
            self.rewritten += 1
            return rechain(holder, rest if link.embedded else [rest[0], *rest[2:]])
        check(rest[0] if rest else None)
        self.rewritten += 1
        return rechain(holder, rest if link.embedded else rest[1:])

    def expr(self, expr: Expr) -> Expr:
        match expr:
            case Call():
                receiver = expr.receiver
                access = self.view.match(receiver) if receiver is not None else None
                self.view.bind_call(expr)
                if (
                    access is not None
                    and expr.method in self.view.collection_methods
                    and access.is_list
                    and not access.rest
                    and not access.element
                ):
                    self.rewritten += 1
                    receiver = PropertyAccess(object=self.destination(access), property=access.link.copy_name)
                elif receiver is not None:
                    receiver = self.expr(receiver)
                return expr.model_copy(update={"receiver": receiver, "args": [self.expr(a) for a in expr.args]})
            case VarAccess() | PropertyAccess() | IndexAccess():
                if (access := self.view.match(expr)) is not None:
                    return self.replace(access, expr)
                if isinstance(expr, PropertyAccess):
                    return expr.model_copy(update={"object": self.expr(expr.object)})
                if isinstance(expr, IndexAccess):
                    return expr.model_copy(update={"object": self.expr(expr.object), "index": self.expr(expr.index)})
                return expr
            case Lambda():
                return expr.model_copy(update={"body": self.block(expr.body)})
            case ObjectLiteral():
                pairs = [pair.model_copy(update={"value": self.expr(pair.value)}) for pair in expr.pairs]
                return expr.model_copy(update={"pairs": pairs})
            case ArrayLiteral():
                return expr.model_copy(update={"items": [self.expr(item) for item in expr.items]})
            case New():
                return expr.model_copy(update={"args": [self.expr(arg) for arg in expr.args]})
            case Binary():
                return expr.model_copy(update={"lhs": self.expr(expr.lhs), "rhs": self.expr(expr.rhs)})
            case LiteralExpr() | Opaque():
                return expr
        raise TypeError(f"Not an expression: {type(expr).__name__}")

    def statement(self, statement: Statement) -> Statement:
        match statement:
            case ExpressionStmt():
                return statement.model_copy(update={"expr": self.expr(statement.expr)})
            case VariableDeclStmt():
                self.view.bind_alias(statement.name, statement.init)
                init = self.expr(statement.init) if statement.init is not None else None
                return statement.model_copy(update={"init": init})
            case AssignmentStmt():
                if isinstance(statement.target, VarAccess):
                    self.view.bind_alias(statement.target.name, statement.value)
                update = {"target": self.expr(statement.target), "value": self.expr(statement.value)}
                return statement.model_copy(update=update)
            case IfStmt():
                otherwise = self.block(statement.otherwise) if statement.otherwise is not None else None
                update = {"cond": self.expr(statement.cond), "then": self.block(statement.then), "otherwise": otherwise}
                return statement.model_copy(update=update)
            case WhileStmt():
                return statement.model_copy(update={"cond": self.expr(statement.cond), "body": self.block(statement.body)})
            case ReturnStmt():
                value = self.expr(statement.value) if statement.value is not None else None
                return statement.model_copy(update={"value": value})
        raise TypeError(f"Not a statement: {type(statement).__name__}")

    def block(self, block: CodeBlock) -> CodeBlock:
        return block.model_copy(update={"statements": [self.statement(s) for s in block.statements]})


@dataclass
class _Rewrite:
    block: CodeBlock
    statements: list[Statement]
    change: FileChange


class PlanApplier:
    """Applies a join removal plan to a copy of the code.

    Parameters
    ----------
    plan : JoinRemovalPlan
        The plan to apply.
    code : CodeModel
        Code the plan was built from; it is not modified.
    profile : ApiProfile
        Driver profile.
    """

    def __init__(self, plan: JoinRemovalPlan, code: CodeModel, profile: ApiProfile):
        self.logger = logging.getLogger(__name__)
        self.plan = plan
        self.profile = profile
        self.code = code.model_copy(deep=True)
        self.index = CodeIndex(self.code)

    def join_statement(self) -> Statement:
        plan = self.plan
        node = self.index.statement_of(plan.join_stmt_ref) if plan.join_stmt_ref in self.index else None
        if node is None or node.id != plan.join_stmt_ref or print_statement(node) != plan.join_statement:
            raise PlanStaleError(f"Plan {plan.id}: the join statement {plan.join_stmt_ref} is gone or has changed")
        if plan.join_call_ref not in self.index:
            raise PlanStaleError(f"Plan {plan.id}: the join call {plan.join_call_ref} is gone")
        return node  # type: ignore[return-value]

    def view(self) -> JoinView[PlanLink]:
        plan, methods = self.plan, self.profile.collection_methods
        if plan.join_type == JoinType.AGGREGATION:
            joins = {link.alias: (link, link.joined_list) for link in plan.links if link.alias}
            return JoinView(True, joins, plan.result_variable, True, methods)
        link = plan.links[0]
        joins = {plan.result_variable: (link, link.joined_list)} if plan.result_variable else {}
        return JoinView(False, joins, None, False, methods)

    def sequential(self, statement: Statement) -> _Rewrite:
        plan = self.plan
        block = self.index.block_of(statement.id)
        position = next(n for n, s in enumerate(block.statements) if s.id == statement.id)
        holders = {}
        for link in plan.links:
            holder = self.index.nodes.get(link.holder_ref) if link.holder_ref else None
            if holder is not None:
                holders[id(link)] = holder
        rewriter = CodeRewriter(self.view(), holders)  # type: ignore[arg-type]
        callback = _callback(statement, plan.result_variable)
        change = FileChange(path=plan.path, removed_statements=1)
        if callback is not None:
            others = {p for p in callback.params if p != plan.result_variable}
            if any(isinstance(n, VarAccess) and n.name in others for n in walk(callback.body)):
                raise RewriteError(f"Plan {plan.id}: the join callback uses {', '.join(sorted(others))}")
            inlined = [rewriter.statement(s) for s in callback.body.statements]
            statements = [*block.statements[:position], *inlined, *block.statements[position + 1 :]]
        else:
            following = [rewriter.statement(s) for s in block.statements[position + 1 :]]
            statements = [*block.statements[:position], *following]
        change.rewritten_accesses = rewriter.rewritten
        return _Rewrite(block, statements, change)

    def aggregation(self, statement: Statement) -> _Rewrite:
        plan = self.plan
        block = self.index.block_of(statement.id)
        position = next(n for n, s in enumerate(block.statements) if s.id == statement.id)
        removed = {ref for link in plan.links for ref in (link.stage_ref, link.unwind_ref) if ref is not None}
        call = self.index[plan.join_call_ref]
        entry = self.profile.entry(call.method) if isinstance(call, Call) else None
        index = entry.filter_arg_index if entry is not None and entry.filter_arg_index is not None else 0
        pipeline = call.args[index] if isinstance(call, Call) and index < len(call.args) else None
        if not isinstance(pipeline, ArrayLiteral) or not removed <= {item.id for item in pipeline.items}:
            raise PlanStaleError(f"Plan {plan.id}: the pipeline stages to remove are gone")
        pipeline.items = [item for item in pipeline.items if item.id not in removed]
        rewriter = CodeRewriter(self.view(), {})
        rewritten = rewriter.statement(statement)
        statements = [*block.statements[:position], rewritten, *block.statements[position + 1 :]]
        change = FileChange(path=plan.path, removed_stages=len(removed), rewritten_accesses=rewriter.rewritten)
        return _Rewrite(block, statements, change)

    def rewrite(self) -> _Rewrite:
        statement = self.join_statement()
        if self.plan.join_type == JoinType.AGGREGATION:
            return self.aggregation(statement)
        return self.sequential(statement)

    def snippets(self) -> tuple[str, str]:
        """Text of the affected block before and after the rewrite, for review."""
        statement = self.join_statement()
        block = self.index.block_of(statement.id)
        before = "\n".join(print_statement(s) for s in block.statements)
        result = self.rewrite()
        after = "\n".join(print_statement(s) for s in result.statements)
        return before, after

    def apply(self) -> tuple[CodeModel, dict[str, str], FileChange]:
        result = self.rewrite()
        result.block.statements = result.statements
        texts = regenerate(self.code)
        updated = inject_sources(texts, ParseMode.STRICT)
        self.logger.info(f"Applied plan {self.plan.id} to {self.plan.path}: {result.change}")
        return updated, {self.plan.path: texts[self.plan.path]}, result.change


def _plan_link(dos: DOSModel, op: DatabaseOperation, link: JoinLink, entities: dict[str, str]) -> PlanLink:
    joined = structure_at(dos, link.container, [])
    destination = structure_at(dos, link.destination_container, link.destination_path)
    inner = [*link.destination_path, link.embedded] if link.embedded else list(link.destination_path)
    return PlanLink(
        target_entity=entities.get(joined.id, joined.name) if joined is not None else entity_name(link.container),
        target_container=link.container,
        destination_entity=(
            entities.get(destination.id, destination.name)
            if destination is not None
            else entity_name(link.destination_container or "")
        ),
        destination_container=link.destination_container or link.reference_container,
        destination_path=link.destination_path,
        reference_container=link.reference_container,
        reference_field=link.reference_field,
        target_attribute=link.target_attribute,
        direction=link.direction,
        collection=link.collection,
        duplicates=[
            Duplicate(
                source_field=c.source_field,
                new_name=c.new_name,
                type=str(c.type.innermost.primitive or "string"),
                destination_path=inner,
            )
            for c in link.copies
        ],
        embedded=link.embedded,
        alias=link.alias,
        stage_ref=link.stage_ref,
        unwind_ref=link.unwind_ref,
        holder_ref=link.holder_ref,
        joined_list=op.many if not op.aggregate else link.unwind_ref is None,
    )


def _plan_id(plan: JoinRemovalPlan) -> str:
    content = plan.model_dump(mode="json", by_alias=True, exclude={"id", "number"})
    return hashlib.sha1(json.dumps(content, sort_keys=True).encode()).hexdigest()[:12]


def build_plans(
    dos: DOSModel, code: CodeModel, profile: ApiProfile | None = None
) -> list[JoinRemovalPlan]:
    """One join removal plan per join with at least one field to copy.

    Each plan carries the text of the affected block before and after a dry-run
    rewrite. A plan whose joined documents escape is marked `partial`.
    """
    profile = profile or load_profile()
    index = CodeIndex(code)
    plans: list[JoinRemovalPlan] = []
    entities = structure_entities(dos)
    for op in dos.joins():
        links = [_plan_link(dos, op, link, entities) for link in op.joins if link.copies]
        if not links:
            continue
        containers = {links[0].destination_container} | {link.target_container for link in links}
        usage = sorted({site for link in op.joins for site in link.usage_sites})
        lines = {index[site].span.line for site in usage if site in index}  # type: ignore[union-attr]
        plan = JoinRemovalPlan(
            id="",
            number=len(plans) + 1,
            join_op=op.id,
            prev_op=op.prev_dbo,
            query=op.function,
            join_type=JoinType.AGGREGATION if op.aggregate else JoinType.SEQUENTIAL,
            path=op.path,
            line=op.line,
            source_entity=entity_name(links[0].destination_container),
            target_entity=list(dict.fromkeys(link.target_entity for link in links)),
            links=links,
            join_stmt_ref=op.stmt_ref,
            join_call_ref=op.call_ref,
            join_statement=print_statement(index[op.stmt_ref]),  # type: ignore[arg-type]
            result_variable=op.result_variable,
            usage_sites=usage,
            usage_line_count=len(lines),
            related_ops=[other.id for other in dos.operations if other.container_name in containers],
        )
        root = structure_at(dos, links[0].destination_container, [])
        if root is not None:
            plan.source_entity = root.name
        try:
            plan.original_snippet, plan.rewritten_snippet = PlanApplier(plan, code, profile).snippets()
        except JoinEscapeError as e:
            logger.warning(f"Plan for {op.id} is partial: {e}")
            plan.partial = True
        except RewriteError as e:
            logger.warning(f"Plan for {op.id} cannot be rewritten: {e}")
        plan.id = _plan_id(plan)
        plans.append(plan)
    logger.info(f"Built {len(plans)} join removal plan(s)")
    return plans


def _update_schema(plan: JoinRemovalPlan, schema: USchemaModel) -> USchemaModel:
    schema = schema.model_copy(deep=True)
    for link in plan.links:
        entity = schema.entity(link.destination_entity)
        if entity is None:
            logger.warning(f"Plan {plan.id}: entity {link.destination_entity} is not in the schema")
            continue
        variation = entity.variations[0]
        if variation.feature(link.copy_name) is not None:
            continue
        upper = MANY if link.collection else 1
        if link.embedded:
            name = f"{capitalize(link.embedded)}Copy"
            if schema.entity(name) is None:
                features = [
                    AttributeFeature(name=d.new_name, type=d.type, duplicated_from=f"{link.target_container}.{d.source_field}")
                    for d in link.duplicates
                ]
                copy = EntityType(name=name, root=False, variations=[StructuralVariation(id=1, features=features)])
                schema.entity_types.append(copy)
            variation.features.append(AggregateFeature(name=link.embedded, target=name, upper=upper))
        else:
            duplicate = link.duplicates[0]
            variation.features.append(
                AttributeFeature(
                    name=duplicate.new_name,
                    type=duplicate.type,
                    collection=link.collection,
                    duplicated_from=f"{link.target_container}.{duplicate.source_field}",
                )
            )
    return schema


def apply_plan(
    plan: JoinRemovalPlan, code: CodeModel, schema: USchemaModel, profile: ApiProfile | None = None
) -> RefactorOutcome:
    """Apply a plan to the code and schema it was built from.

    Nothing is modified in place: the outcome carries the rewritten code, the updated
    schema, the regenerated sources, the copy statement and the migration script.

    Raises
    ------
    PlanStaleError
        When the statements of the plan no longer exist in `code`.
    RewriteError
        When the plan is partial, or a field of the joined documents is used but not copied.
    """
    if plan.partial:
        raise RewriteError(f"Plan {plan.id} is partial: the joined documents escape the join callback")
    updated, sources, change = PlanApplier(plan, code, profile or load_profile()).apply()
    return RefactorOutcome(
        updated_schema=_update_schema(plan, schema),
        updated_code=updated,
        copy_statement=emit_copy(plan),
        migration_script=emit_migration(plan),
        sources=sources,
        report=[change],
    )


def plan_rows(plans: list[JoinRemovalPlan]) -> list[PlanRow]:
    return [
        PlanRow(
            number=plan.number,
            query=plan.query or "-",
            target_entity=plan.source_entity,
            source_entity=link.target_entity,
            fields=", ".join(d.source_field for d in link.duplicates),
            location=f"In {link.destination_entity}",
            join_type=plan.join_type,
        )
        for plan in plans
        for link in plan.links
    ]


PLAN_COLUMNS = ("#", "Query", "Target Entity", "Source Entity", "Fields", "Location", "Join Type")


def render_plan_table(plans: list[JoinRemovalPlan]) -> str:
    rows = [
        (str(r.number), r.query, r.target_entity, r.source_entity, r.fields, r.location, str(r.join_type))
        for r in plan_rows(plans)
    ]
    widths = [max(len(cell) for cell in column) for column in zip(PLAN_COLUMNS, *rows, strict=False)]
    lines = [" | ".join(cell.ljust(width) for cell, width in zip(row, widths, strict=True)).rstrip() for row in [PLAN_COLUMNS, *rows]]
    lines.insert(1, "-+-".join("-" * width for width in widths))
    return "\n".join(lines) + "\n"
