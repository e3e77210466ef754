"""
Extraction of the Database Operation & Structure (DOS) model.

The extraction runs over the control-flow model in four passes:

1. `find_db_call_nodes` picks the call nodes whose call is a driver method of the API
   profile, applied to a receiver chain that names a container.
2. `backward_traverse` turns every such node into a `DatabaseOperation` and walks the
   control flow backward to find the earlier read whose result feeds its arguments.
   A read of another container filtered by such a value is a sequential join.
3. `forward_traverse` follows the control flow forward from every read and collects how
   its result is used, building the fields of the container documents. Insert and update
   payloads contribute too.
4. `create_references` turns the fields joins go through into references and merges
   structurally identical nested structures.
"""

import logging
from collections import deque
from dataclasses import dataclass

from .code_walk import CodeIndex, access_path, child_nodes, walk_shallow
from .control_flow import CfgIndex
from .errors import ProfileError
from .models.base import Diagnostic, Severity
from .models.code import (
    ArrayLiteral,
    AssignmentStmt,
    Binary,
    BinaryOp,
    Call,
    CodeModel,
    Expr,
    ExpressionStmt,
    IfStmt,
    IndexAccess,
    Lambda,
    LiteralExpr,
    LiteralKind,
    ObjectLiteral,
    PrimitiveType,
    PropertyAccess,
    ReturnStmt,
    Statement,
    VarAccess,
    VariableDeclStmt,
    WhileStmt,
)
from .models.control_flow import CfgNode, ControlFlowModel, NodeKind, NodeRef
from .models.dos import (
    Conjunct,
    DatabaseOperation,
    DataStructure,
    DosContainer,
    DosField,
    DOSModel,
    ExtractOptions,
    FieldKind,
    FieldType,
    JoinDirection,
    JoinLink,
    LiteralValue,
    OperationKind,
    Predicate,
    PredicateOp,
    VariablePath,
)
from .models.profile import ApiProfile, OpKind, ProfileEntry, ResultBinding, load_profile
from .naming import entity_name
from .printer import print_expr
from .typing_inference import resolve_evidence

logger = logging.getLogger(__name__)

OPERATION_KINDS = {
    OpKind.READ: OperationKind.READ,
    OpKind.AGGREGATE_READ: OperationKind.READ,
    OpKind.INSERT: OperationKind.INSERT,
    OpKind.UPDATE: OperationKind.UPDATE,
    OpKind.DELETE: OperationKind.DELETE,
}


@dataclass(frozen=True)
class DbCallNode:
    """A control-flow call node recognized as a database call."""

    node: CfgNode
    call: Call
    statement: Statement
    entry: ProfileEntry
    container: str
    path: str

    @property
    def ref(self) -> NodeRef:
        return self.node.id


@dataclass(frozen=True)
class _Binding:
    """What a variable denotes during a forward traversal: a document, or a list of them."""

    container: str
    prefix: tuple[str, ...]
    is_list: bool
    op: DatabaseOperation


class _Shape:
    """Mutable field tree accumulated for one container."""

    def __init__(self) -> None:
        self.fields: dict[str, _Shape] = {}
        self.collection = False
        self.evidence: set[PrimitiveType] = set()

    def child(self, name: str) -> "_Shape":
        return self.fields.setdefault(name, _Shape())


class DosExtractor:
    """Shared state of the extraction passes over one code and control-flow model.

    Parameters
    ----------
    cfg : ControlFlowModel
        Control flow of `code`.
    code : CodeModel
        The analyzed code; it is only read.
    profile : ApiProfile
        Driver API used to recognize database calls.
    options : ExtractOptions, optional
        Extraction switches.
    dos : DOSModel, optional
        Model produced by an earlier pass, extended in place.
    """

    def __init__(
        self,
        cfg: ControlFlowModel,
        code: CodeModel,
        profile: ApiProfile,
        options: ExtractOptions | None = None,
        dos: DOSModel | None = None,
    ):
        self.logger = logging.getLogger(__name__)
        self.cfg = cfg
        self.code = code
        self.profile = profile
        self.options = options or ExtractOptions()
        self.dos = dos if dos is not None else DOSModel()
        self.index = CodeIndex(code)
        self.flow = CfgIndex(cfg)
        self.declarations: dict[tuple[str, str], Expr] = {}
        for node in self.index.nodes.values():
            if isinstance(node, VariableDeclStmt) and node.init is not None:
                self.declarations.setdefault((self.index.files[node.id], node.name), node.init)
        self._shapes: dict[str, _Shape] = {}
        self._next_structure = 0

    def diagnostic(self, code: str, message: str, path: str | None = None, line: int | None = None) -> None:
        self.logger.warning(f"{path or '<source>'}:{line or 0}: {message}")
        self.dos.diagnostics.append(Diagnostic(severity=Severity.WARNING, code=code, message=message, path=path, line=line))

    # -- recognition -----------------------------------------------------------------

    def string_constant(self, expr: Expr | None, path: str) -> str | None:
        match expr:
            case LiteralExpr(literal_kind=LiteralKind.STRING):
                return expr.lexeme
            case VarAccess():
                init = self.declarations.get((path, expr.name))
                if isinstance(init, LiteralExpr) and init.literal_kind == LiteralKind.STRING:
                    return init.lexeme
        return None

    def receiver_chain(self, call: Call, path: str) -> list[Call]:
        """Calls the receiver of `call` is built from, following variables bound to call chains."""
        chain: list[Call] = []
        followed: set[str] = set()
        current = call.receiver
        while current is not None:
            match current:
                case Call():
                    chain.append(current)
                    current = current.receiver
                case PropertyAccess():
                    current = current.object
                case VarAccess() if (path, current.name) in self.declarations and current.name not in followed:
                    followed.add(current.name)
                    current = self.declarations[(path, current.name)]
                case _:
                    break
        return chain

    def container_of(self, call: Call, entry: ProfileEntry, path: str) -> str | None:
        selector = entry.container_arg
        for link in self.receiver_chain(call, path):
            if link.method != selector.method:
                continue
            argument = link.args[selector.arg_index] if selector.arg_index < len(link.args) else None
            name = self.string_constant(argument, path)
            if name is None:
                raise ProfileError(f"{path}: the container of `{call.method}` is not a constant string")
            return name
        return None

    def db_call_nodes(self) -> list[DbCallNode]:
        found: list[DbCallNode] = []
        for node in self.flow.call_nodes():
            call = self.index[node.expr_ref] if node.expr_ref is not None else None
            if not isinstance(call, Call) or (entry := self.profile.entry(call.method)) is None:
                continue
            path = self.index.files[call.id]
            container = self.container_of(call, entry, path)
            if container is None or node.stmt_ref is None:
                continue
            statement = self.index[node.stmt_ref]
            found.append(DbCallNode(node, call, statement, entry, container, path))  # type: ignore[arg-type]
        self.logger.debug(f"Found {len(found)} database calls")
        return found

    # -- operations ------------------------------------------------------------------

    @staticmethod
    def argument(call: Call, index: int | None) -> Expr | None:
        return call.args[index] if index is not None and index < len(call.args) else None

    def result_variable(self, call: Call, entry: ProfileEntry) -> str | None:
        position = self.profile.callback_result_index
        if entry.result_binding == ResultBinding.CALLBACK_PARAM:
            callback = self.argument(call, entry.callback_arg_index)
            if isinstance(callback, Lambda):
                return callback.params[position] if position < len(callback.params) else None
        current: Expr = call
        while isinstance(owner := self.index.parent(current.id), Call) and owner.method in self.profile.cursor_methods:
            if owner.receiver is None or owner.receiver.id != current.id:
                break
            callback = next((arg for arg in owner.args if isinstance(arg, Lambda)), None)
            if callback is not None:
                return callback.params[position] if position < len(callback.params) else None
            current = owner
        match self.index.parent(current.id):
            case VariableDeclStmt() as declaration:
                return declaration.name
            case AssignmentStmt(target=VarAccess() as target):
                return target.name
        return None

    @staticmethod
    def operand(expr: Expr) -> LiteralValue | VariablePath | None:
        if isinstance(expr, LiteralExpr):
            return LiteralValue(literal_kind=expr.literal_kind, lexeme=expr.lexeme)
        if (path := access_path(expr)) is not None:
            return VariablePath(path=path, expr_ref=expr.id)
        return None

    def predicate(self, filter: ObjectLiteral) -> Predicate:
        conjuncts: list[Conjunct] = []
        for pair in filter.pairs:
            if pair.name.startswith("$"):
                continue
            value, op = pair.value, PredicateOp.EQ
            if isinstance(value, ObjectLiteral) and len(value.pairs) == 1 and value.pairs[0].name in ("$in", "$eq"):
                op = PredicateOp.IN if value.pairs[0].name == "$in" else PredicateOp.EQ
                value = value.pairs[0].value
            if (rhs := self.operand(value)) is not None:
                conjuncts.append(Conjunct(field_path=pair.name.split("."), op=op, rhs=rhs))
        return Predicate(conjuncts=conjuncts)

    def lookup(self, op: DatabaseOperation, stage: ObjectLiteral, body: ObjectLiteral) -> JoinLink | None:
        keys = ("from", "localField", "foreignField", "as")
        values = [self.string_constant(body.get(key), op.path) for key in keys]
        if any(value is None for value in values):
            self.diagnostic("lookup-unresolved", "A $lookup stage does not use constant strings", op.path, op.line)
            return None
        joined, local, foreign, alias = values  # type: ignore[misc]
        key = self.profile.primary_key
        if foreign == key:
            return JoinLink(
                container=joined,
                direction=JoinDirection.FORWARD,
                reference_container=op.container_name,
                reference_field=local.split("."),
                referenced_container=joined,
                target_attribute=key,
                alias=alias,
                stage_ref=stage.id,
            )
        if local == key:
            return JoinLink(
                container=joined,
                direction=JoinDirection.REVERSE,
                reference_container=joined,
                reference_field=foreign.split("."),
                referenced_container=op.container_name,
                target_attribute=key,
                alias=alias,
                stage_ref=stage.id,
            )
        self.diagnostic("lookup-unsupported", f"$lookup on {local} = {joined}.{foreign} joins no primary key", op.path, op.line)
        return None

    def unwind_alias(self, body: Expr, path: str) -> str | None:
        if isinstance(body, ObjectLiteral):
            body = body.get("path")  # type: ignore[assignment]
        name = self.string_constant(body, path)
        return name[1:] if name and name.startswith("$") else None

    def pipeline(self, op: DatabaseOperation, pipeline: Expr | None) -> None:
        if not isinstance(pipeline, ArrayLiteral):
            self.diagnostic("pipeline-unresolved", f"The pipeline of {op.id} is not an array literal", op.path, op.line)
            return
        for stage in pipeline.items:
            if not isinstance(stage, ObjectLiteral) or len(stage.pairs) != 1:
                continue
            name, body = stage.pairs[0].name, stage.pairs[0].value
            if name == "$match" and isinstance(body, ObjectLiteral):
                op.filter = self.predicate(body)
            elif name == "$lookup" and isinstance(body, ObjectLiteral):
                if (link := self.lookup(op, stage, body)) is not None:
                    op.joins.append(link)
            elif name == "$unwind":
                alias = self.unwind_alias(body, op.path)
                for link in op.joins:
                    if link.alias == alias:
                        link.unwind_ref = stage.id
        for link in op.joins:
            if link.direction == JoinDirection.REVERSE:
                link.collection = link.unwind_ref is None
        op.is_join = bool(op.joins)

    def operation(self, number: int, db: DbCallNode) -> DatabaseOperation:
        entry, call = db.entry, db.call
        op = DatabaseOperation(
            id=f"op{number}",
            kind=OPERATION_KINDS[entry.op_kind],
            method=call.method,
            aggregate=entry.op_kind == OpKind.AGGREGATE_READ,
            stmt_ref=db.statement.id,
            call_ref=call.id,
            node_ref=db.ref,
            path=db.path,
            line=db.statement.span.line,
            function=self.index.function_name(call.id),
            container_name=db.container,
            many=entry.many,
            params=[print_expr(arg) for arg in call.args if not isinstance(arg, Lambda)],
        )
        if op.kind == OperationKind.READ:
            op.result_variable = self.result_variable(call, entry)
        filter = self.argument(call, entry.filter_arg_index)
        if op.aggregate:
            self.pipeline(op, filter)
        elif isinstance(filter, ObjectLiteral):
            op.filter = self.predicate(filter)
        return op

    # -- backward traversal ----------------------------------------------------------

    @staticmethod
    def argument_roots(call: Call) -> list[str]:
        names: list[str] = []
        for arg in call.args:
            if isinstance(arg, Lambda):
                continue
            for node in walk_shallow(arg):
                if isinstance(node, VarAccess) and node.name not in names:
                    names.append(node.name)
        return names

    @staticmethod
    def expand(path: list[str], expansions: dict[str, list[str]]) -> list[str]:
        for _ in range(len(expansions) + 1):
            origin = expansions.get(path[0])
            if origin is None or origin[0] == path[0]:
                break
            path = [*origin, *path[1:]]
        return path

    def track_alias(self, ref: NodeRef, tracked: set[str], expansions: dict[str, list[str]]) -> None:
        """Add the variables an already tracked variable was computed from."""
        node = self.flow.nodes[ref]
        if node.kind == NodeKind.CALL and node.expr_ref is not None:
            call = self.index[node.expr_ref]
            if isinstance(call, Call) and call.method in self.profile.collection_methods and call.receiver is not None:
                receiver = access_path(call.receiver)
                for arg in call.args:
                    if receiver and isinstance(arg, Lambda) and arg.params and arg.params[0] in tracked:
                        expansions.setdefault(arg.params[0], [*receiver, "[]"])
                        tracked.add(receiver[0])
        if node.stmt_ref is None:
            return
        match self.index[node.stmt_ref]:
            case VariableDeclStmt(name=name, init=value) if name in tracked and value is not None:
                pass
            case AssignmentStmt(target=VarAccess(name=name), value=value) if name in tracked:
                pass
            case _:
                return
        path = access_path(value)
        if path is not None and path[0] != name:
            expansions.setdefault(name, path)
            tracked.add(path[0])
        else:
            tracked.update(n.name for n in walk_shallow(value) if isinstance(n, VarAccess))

    def link(self, prev: DatabaseOperation, op: DatabaseOperation, tracked: set[str], expansions: dict[str, list[str]]) -> None:
        op.prev_dbo = prev.id
        prev.next_dbos.append(op.id)
        if op.kind != OperationKind.READ or op.aggregate or op.filter is None:
            return
        if prev.container_name == op.container_name:
            return
        key = self.profile.primary_key
        for conjunct in op.filter.conjuncts:
            if not isinstance(conjunct.rhs, VariablePath) or conjunct.rhs.root not in tracked:
                continue
            path = self.expand(list(conjunct.rhs.path), expansions)
            if path[0] != prev.result_variable:
                continue
            field = path[1:]
            if prev.many and field[:1] == ["[]"]:
                field = field[1:]
            if not field or field[-1] == "[]":
                continue
            if field == [key]:
                link = JoinLink(
                    container=op.container_name,
                    direction=JoinDirection.REVERSE,
                    reference_container=op.container_name,
                    reference_field=conjunct.field_path,
                    referenced_container=prev.container_name,
                    target_attribute=key,
                    alias=op.result_variable,
                    collection=op.many,
                )
            else:
                link = JoinLink(
                    container=op.container_name,
                    reference_container=prev.container_name,
                    reference_field=field,
                    referenced_container=op.container_name,
                    target_attribute=".".join(conjunct.field_path),
                    collection=conjunct.op == PredicateOp.IN,
                    alias=op.result_variable,
                )
            holder = self.index[conjunct.rhs.expr_ref] if conjunct.rhs.expr_ref is not None else None
            if isinstance(holder, PropertyAccess | IndexAccess):
                link.holder_ref = holder.object.id
            op.joins.append(link)
            op.is_join = True

    def search_backward(self, op: DatabaseOperation, call: Call, by_node: dict[NodeRef, DatabaseOperation]) -> None:
        tracked = set(self.argument_roots(call))
        if not tracked:
            return
        expansions: dict[str, list[str]] = {}
        seen = {op.node_ref}
        queue = deque(self.flow.predecessors(op.node_ref))
        while queue:
            ref = queue.popleft()
            if ref in seen:
                continue
            seen.add(ref)
            other = by_node.get(ref)
            if other is not None and other.result_variable is not None and other.result_variable in tracked:
                self.link(other, op, tracked, expansions)
                return
            self.track_alias(ref, tracked, expansions)
            queue.extend(self.flow.predecessors(ref))

    def backward(self, db_nodes: list[DbCallNode]) -> DOSModel:
        self.dos.operations = [self.operation(number, db) for number, db in enumerate(db_nodes)]
        by_node = {op.node_ref: op for op in self.dos.operations}
        for db, op in zip(db_nodes, self.dos.operations, strict=True):
            self.search_backward(op, db.call, by_node)
        return self.dos

    # -- forward traversal -----------------------------------------------------------

    def shape(self, container: str) -> _Shape:
        if container not in self._shapes:
            root = _Shape()
            root.child(self.profile.primary_key).evidence.add(PrimitiveType.STRING)
            self._shapes[container] = root
        return self._shapes[container]

    def record(
        self,
        container: str,
        path: list[str] | tuple[str, ...],
        evidence: PrimitiveType | None = None,
        collection: bool = False,
    ) -> None:
        shape = self.shape(container)
        field: _Shape | None = None
        for name in path:
            if name == "[]":
                if field is not None:
                    field.collection = True
                continue
            field = shape.child(name)
            shape = field
        if field is None:
            return
        if evidence is not None:
            field.evidence.add(evidence)
        field.collection = field.collection or collection

    def resolve(self, path: list[str], bindings: dict[str, _Binding]) -> _Binding | None:
        binding = bindings.get(path[0])
        if binding is None:
            return None
        rest = list(path[1:])
        if binding.is_list:
            if not rest:
                return binding
            if rest[0] != "[]":
                return None
            rest = rest[1:]
        full = [*binding.prefix, *rest]
        op = binding.op
        if op.aggregate and binding.container == op.container_name and full:
            link = next((link for link in op.joins if link.alias == full[0]), None)
            if link is not None:
                full = full[1:]
                is_list = link.unwind_ref is None
                if full[:1] == ["[]"]:
                    full, is_list = full[1:], False
                return _Binding(link.container, tuple(full), is_list and not full, op)
        return _Binding(binding.container, tuple(full), False, op)

    def use(
        self,
        path: list[str],
        bindings: dict[str, _Binding],
        evidence: PrimitiveType | None = None,
        method: str | None = None,
        collection: bool = False,
    ) -> None:
        if method is None and len(path) > 1 and path[-1] in self.profile.collection_methods:
            path, collection = path[:-1], True
        binding = self.resolve(path, bindings)
        if binding is None or binding.is_list or not binding.prefix:
            return
        if method is not None and method in self.profile.collection_methods:
            collection = True
        self.record(binding.container, binding.prefix, evidence, collection)

    def scan(self, expr: Expr, bindings: dict[str, _Binding]) -> None:
        """Record the uses of bound variables in an expression, lambda bodies excluded."""
        match expr:
            case Lambda():
                return
            case VarAccess() | PropertyAccess() | IndexAccess() if (path := access_path(expr)) is not None:
                self.use(path, bindings)
                current: Expr = expr
                while isinstance(current, PropertyAccess | IndexAccess):
                    if isinstance(current, IndexAccess):
                        self.scan(current.index, bindings)
                    current = current.object
                return
            case Call(receiver=receiver) if receiver is not None and (path := access_path(receiver)) is not None:
                self.use(path, bindings, method=expr.method)
                for arg in expr.args:
                    self.scan(arg, bindings)
                return
            case Binary(op=op, lhs=lhs, rhs=rhs) if op.is_comparison:
                for side, other in ((lhs, rhs), (rhs, lhs)):
                    if isinstance(other, LiteralExpr) and (path := access_path(side)) is not None:
                        self.use(path, bindings, evidence=other.literal_kind.primitive)
                    else:
                        self.scan(side, bindings)
                return
            case ObjectLiteral():
                for pair in expr.pairs:
                    if pair.name == "$in" and (path := access_path(pair.value)) is not None:
                        self.use(path, bindings, collection=True)
                    else:
                        self.scan(pair.value, bindings)
                return
        for child in child_nodes(expr):
            self.scan(child, bindings)  # type: ignore[arg-type]

    def bind(self, name: str, value: Expr, bindings: dict[str, _Binding]) -> None:
        path = access_path(value)
        binding = self.resolve(path, bindings) if path is not None else None
        if binding is None:
            return
        bindings[name] = binding
        if binding.prefix and not binding.is_list:
            self.record(binding.container, binding.prefix)

    def scan_statement(self, statement: Statement, bindings: dict[str, _Binding]) -> None:
        match statement:
            case IfStmt() | WhileStmt():
                self.scan(statement.cond, bindings)
            case ExpressionStmt():
                self.scan(statement.expr, bindings)
            case ReturnStmt() if statement.value is not None:
                self.scan(statement.value, bindings)
            case VariableDeclStmt() if statement.init is not None:
                self.scan(statement.init, bindings)
                self.bind(statement.name, statement.init, bindings)
            case AssignmentStmt():
                target = access_path(statement.target)
                if isinstance(statement.value, LiteralExpr) and target is not None:
                    self.use(target, bindings, evidence=statement.value.literal_kind.primitive)
                else:
                    self.scan(statement.target, bindings)
                self.scan(statement.value, bindings)
                if isinstance(statement.target, VarAccess):
                    self.bind(statement.target.name, statement.value, bindings)

    def bind_elements(self, call: Call, bindings: dict[str, _Binding]) -> None:
        """Bind the first parameter of a collection method callback to the element."""
        if call.method not in self.profile.collection_methods or call.receiver is None:
            return
        path = access_path(call.receiver)
        binding = self.resolve(path, bindings) if path is not None else None
        if binding is None:
            return
        if binding.is_list:
            element = _Binding(binding.container, binding.prefix, False, binding.op)
        elif binding.prefix:
            element = _Binding(binding.container, (*binding.prefix, "[]"), False, binding.op)
        else:
            return
        for arg in call.args:
            if isinstance(arg, Lambda) and arg.params:
                bindings[arg.params[0]] = element

    def follow(self, op: DatabaseOperation) -> None:
        if op.result_variable is None:
            return
        bindings = {op.result_variable: _Binding(op.container_name, (), op.many, op)}
        scanned: set[str] = set()
        visited: set[NodeRef] = set()
        stack = list(reversed(self.flow.successors(op.node_ref)))
        while stack:
            ref = stack.pop()
            if ref in visited:
                continue
            visited.add(ref)
            node = self.flow.nodes[ref]
            if node.stmt_ref is not None and node.stmt_ref not in scanned:
                scanned.add(node.stmt_ref)
                self.scan_statement(self.index[node.stmt_ref], bindings)  # type: ignore[arg-type]
            if node.kind == NodeKind.CALL and node.expr_ref is not None:
                call = self.index[node.expr_ref]
                if isinstance(call, Call):
                    self.bind_elements(call, bindings)
            stack.extend(reversed(self.flow.successors(ref)))

    def mine(self, container: str, prefix: list[str], literal: ObjectLiteral) -> None:
        for pair in literal.pairs:
            if not pair.name.startswith("$"):
                self.mine_value(container, [*prefix, *pair.name.split(".")], pair.value)

    def mine_value(self, container: str, path: list[str], value: Expr) -> None:
        match value:
            case LiteralExpr():
                self.record(container, path, value.literal_kind.primitive)
            case ObjectLiteral() if value.pairs:
                self.mine(container, path, value)
            case ArrayLiteral():
                self.record(container, path, collection=True)
                for item in value.items:
                    if isinstance(item, ObjectLiteral):
                        self.mine(container, [*path, "[]"], item)
                    elif isinstance(item, LiteralExpr):
                        self.record(container, path, item.literal_kind.primitive)
            case Binary(op=BinaryOp.OR, lhs=lhs, rhs=rhs):
                for side in (rhs, lhs):
                    if isinstance(side, ArrayLiteral | LiteralExpr | ObjectLiteral):
                        self.mine_value(container, path, side)
                        return
                self.record(container, path)
            case _:
                self.record(container, path)

    def payload(self, op: DatabaseOperation) -> None:
        entry = self.profile.entry(op.method)
        call = self.index[op.call_ref]
        if entry is None or not isinstance(call, Call):
            return
        payload = self.argument(call, entry.payload_arg_index)
        if entry.payload_operator and isinstance(payload, ObjectLiteral):
            payload = payload.get(entry.payload_operator)
        if isinstance(payload, ObjectLiteral):
            self.mine(op.container_name, [], payload)

    def structure_id(self) -> str:
        self._next_structure += 1
        return f"ds{self._next_structure}"

    def materialize_field(self, name: str, shape: _Shape, nested: list[DataStructure], container: str) -> DosField:
        if shape.fields:
            structure_id = self.structure_id()
            fields = [self.materialize_field(n, s, nested, container) for n, s in shape.fields.items()]
            nested.append(DataStructure(id=structure_id, name=entity_name(name), root=False, fields=fields))
            base = FieldType(kind=FieldKind.AGGREGATE, target=structure_id)
        else:
            primitive = resolve_evidence(shape.evidence) if shape.evidence else None
            if shape.evidence and primitive is None:
                found = ", ".join(sorted(shape.evidence))
                self.diagnostic("type-conflict", f"{container}.{name} has conflicting types: {found}")
            base = FieldType.attribute(primitive)
        return DosField(name=name, type=FieldType.collection(base) if shape.collection else base)

    def materialize(self) -> None:
        self._next_structure = 0
        containers: list[DosContainer] = []
        nested: list[DataStructure] = []
        for name, shape in self._shapes.items():
            structure_id = self.structure_id()
            fields = [self.materialize_field(n, s, nested, name) for n, s in shape.fields.items()]
            root = DataStructure(id=structure_id, name=entity_name(name), root=True, fields=fields)
            containers.append(DosContainer(name=name, data_structures=[root]))
        self.dos.containers = containers
        self.dos.nested_structures = nested
        roots = {c.name: c.data_structures[0].id for c in containers}
        for op in self.dos.operations:
            if op.kind == OperationKind.READ:
                op.result_ds = roots.get(op.container_name)

    def forward(self) -> DOSModel:
        for op in self.dos.operations:
            self.shape(op.container_name)
            for link in op.joins:
                self.shape(link.container)
            if op.filter is not None:
                for conjunct in op.filter.conjuncts:
                    evidence = conjunct.rhs.literal_kind.primitive if isinstance(conjunct.rhs, LiteralValue) else None
                    self.record(op.container_name, conjunct.field_path, evidence)
            if op.kind == OperationKind.READ:
                self.follow(op)
            elif op.kind in (OperationKind.INSERT, OperationKind.UPDATE) and self.options.payload_structures:
                self.payload(op)
        self.materialize()
        return self.dos


def _reference(dos: DOSModel, op: DatabaseOperation, link: JoinLink) -> None:
    def unresolved(reason: str) -> None:
        message = f"{op.id}: reference {link.reference_container}.{'.'.join(link.reference_field)} {reason}"
        logger.warning(message)
        dos.diagnostics.append(Diagnostic(code="reference-unresolved", message=message, path=op.path, line=op.line))

    container = dos.container(link.reference_container)
    if container is None or not container.data_structures:
        unresolved("has no container")
        return
    owner = container.data_structures[0]
    names = [name for name in link.reference_field if name != "[]"]
    field: DosField | None = None
    for position, name in enumerate(names):
        field = owner.field(name)
        last = position == len(names) - 1
        if field is None:
            if not last:
                unresolved("does not exist")
                return
            field = DosField(name=name, type=FieldType.attribute(None))
            owner.fields.append(field)
        if not last:
            inner = field.type.innermost
            if inner.kind != FieldKind.AGGREGATE or inner.target is None:
                unresolved("crosses a non-embedded field")
                return
            owner = dos.structure(inner.target)
    if field is None:
        return
    reference = FieldType(kind=FieldKind.REFERENCE, target_container=link.referenced_container, target_attribute=link.target_attribute)
    collection = field.type.kind == FieldKind.COLLECTION or (link.collection and link.direction == JoinDirection.FORWARD)
    field.type = FieldType.collection(reference) if collection else reference
    if link.direction == JoinDirection.FORWARD:
        link.collection = collection


def _retarget(type: FieldType, replace: dict[str, str]) -> None:
    if type.kind == FieldKind.AGGREGATE and type.target in replace:
        type.target = replace[type.target]
    if type.element is not None:
        _retarget(type.element, replace)


def deduplicate(dos: DOSModel) -> DOSModel:
    """Merge nested structures with identical fields, in place, until none remain."""
    while True:
        first: dict[str, str] = {}
        replace: dict[str, str] = {}
        for structure in dos.nested_structures:
            signature = structure.signature()
            if signature in first:
                replace[structure.id] = first[signature]
            else:
                first[signature] = structure.id
        if not replace:
            return dos
        logger.debug(f"Merging duplicated structures {sorted(replace)}")
        dos.nested_structures = [s for s in dos.nested_structures if s.id not in replace]
        for structure in dos.structures():
            for field in structure.fields:
                _retarget(field.type, replace)


def find_db_call_nodes(cfg: ControlFlowModel, code: CodeModel, profile: ApiProfile | None = None) -> list[DbCallNode]:
    """Call nodes invoking a database method, in subgraph-linked execution order.

    Raises
    ------
    ProfileError
        When a database call names its container with a non-constant expression.
    """
    return DosExtractor(cfg, code, profile or load_profile()).db_call_nodes()


def backward_traverse(
    db_nodes: list[DbCallNode], cfg: ControlFlowModel, code: CodeModel, profile: ApiProfile | None = None
) -> DOSModel:
    """Create the operations of `db_nodes` and link each one to the read it depends on."""
    return DosExtractor(cfg, code, profile or load_profile()).backward(db_nodes)


def forward_traverse(
    dos: DOSModel,
    cfg: ControlFlowModel,
    code: CodeModel,
    profile: ApiProfile | None = None,
    options: ExtractOptions | None = None,
) -> DOSModel:
    """Build containers and data structures from how operation results are used."""
    extractor = DosExtractor(cfg, code, profile or load_profile(), options, dos.model_copy(deep=True))
    return extractor.forward()


def create_references(dos: DOSModel) -> DOSModel:
    """Type the fields joins go through as references, then merge duplicated structures."""
    dos = dos.model_copy(deep=True)
    for op in dos.joins():
        for link in op.joins:
            _reference(dos, op, link)
    return deduplicate(dos)


def extract_dos(
    cfg: ControlFlowModel,
    code: CodeModel,
    profile: ApiProfile | None = None,
    options: ExtractOptions | None = None,
) -> DOSModel:
    profile = profile or load_profile()
    options = options or ExtractOptions()
    db_nodes = find_db_call_nodes(cfg, code, profile)
    dos = backward_traverse(db_nodes, cfg, code, profile)
    dos = forward_traverse(dos, cfg, code, profile, options)
    if options.references:
        dos = create_references(dos)
    logger.info(f"Extracted {len(dos.operations)} operations, {len(dos.joins())} joins, {len(dos.containers)} containers")
    return dos
