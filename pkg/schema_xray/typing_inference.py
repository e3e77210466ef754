import logging
from collections import defaultdict

from .code_walk import walk
from .models.base import Diagnostic
from .models.code import (
    AssignmentStmt,
    Binary,
    ClassDecl,
    CodeBlock,
    CodeModel,
    Expr,
    IndexAccess,
    LiteralExpr,
    ObjectLiteral,
    PrimitiveType,
    PropertyAccess,
    PropertyDecl,
    VarAccess,
    VariableDeclStmt,
)

logger = logging.getLogger(__name__)


def _evidence_name(expr: Expr) -> str | None:
    match expr:
        case VarAccess():
            return expr.name
        case PropertyAccess():
            return expr.property
        case IndexAccess(object=PropertyAccess() | VarAccess() as inner):
            return _evidence_name(inner)
    return None


def resolve_evidence(types: set[PrimitiveType]) -> PrimitiveType | None:
    """Collapse the evidence found for one name; None means the evidence conflicts."""
    found = set(types)
    if len(found) > 1:
        found.discard(PrimitiveType.NULL)
    if found == {PrimitiveType.INT, PrimitiveType.DOUBLE}:
        return PrimitiveType.DOUBLE
    if len(found) == 1:
        return found.pop()
    return None


class TypeInferrer:
    """Collects literal evidence for variables and properties of a `CodeModel`.

    Evidence comes from initializations and assignments with a literal, comparisons
    against a literal, and literal values in object literals (query filters, payloads).
    """

    def __init__(self) -> None:
        self.evidence: dict[str, set[PrimitiveType]] = defaultdict(set)
        self.members: dict[str, dict[str, set[PrimitiveType]]] = defaultdict(dict)
        self.logger = logging.getLogger(__name__)

    def record(self, target: Expr, literal: LiteralExpr) -> None:
        if (name := _evidence_name(target)) is not None:
            self.evidence[name].add(literal.literal_kind.primitive)
        if isinstance(target, PropertyAccess) and isinstance(target.object, VarAccess):
            self.members[target.object.name].setdefault(target.property, set()).add(literal.literal_kind.primitive)

    def visit(self, block: CodeBlock) -> None:
        for node in walk(block):
            match node:
                case VariableDeclStmt(init=LiteralExpr() as literal):
                    self.evidence[node.name].add(literal.literal_kind.primitive)
                case AssignmentStmt(value=LiteralExpr() as literal):
                    self.record(node.target, literal)
                case Binary() if node.op.is_comparison:
                    if isinstance(node.rhs, LiteralExpr):
                        self.record(node.lhs, node.rhs)
                    elif isinstance(node.lhs, LiteralExpr):
                        self.record(node.rhs, node.lhs)
                case ObjectLiteral():
                    for pair in node.pairs:
                        if isinstance(pair.value, LiteralExpr):
                            self.evidence[pair.name].add(pair.value.literal_kind.primitive)
                case PropertyAccess(object=VarAccess() as base):
                    self.members[base.name].setdefault(node.property, set())


def infer_local_types(model: CodeModel) -> CodeModel:
    """Annotate a copy of `model` with locally inferred primitive types.

    Variables initialized from a literal or compared to one take the literal's type;
    everything else stays `unknown`. Conflicting evidence yields `unknown` and a warning.

    Parameters
    ----------
    model : CodeModel
        A parsed model; it is not modified.

    Returns
    -------
    CodeModel
        The annotated copy, with `typeEvidence`, `classes` and declared types filled in.
    """
    annotated = model.model_copy(deep=True)
    inferrer = TypeInferrer()
    for container in annotated.scripts():
        for block in container.blocks:
            inferrer.visit(block)

    type_evidence: dict[str, PrimitiveType] = {}
    for name in sorted(inferrer.evidence):
        resolved = resolve_evidence(inferrer.evidence[name])
        if resolved is None:
            kinds = ", ".join(sorted(inferrer.evidence[name]))
            annotated.warnings.append(
                Diagnostic(code="type-conflict", message=f"Conflicting literal evidence for '{name}': {kinds}")
            )
            logger.warning(f"Conflicting literal evidence for '{name}': {kinds}")
            resolved = PrimitiveType.UNKNOWN
        type_evidence[name] = resolved
    annotated.type_evidence = type_evidence

    def declared(name: str) -> PrimitiveType:
        return type_evidence.get(name, PrimitiveType.UNKNOWN)

    for container in annotated.scripts():
        for decl in container.variable_decls:
            decl.declared_type = declared(decl.name)
        for block in container.blocks:
            for node in walk(block):
                if isinstance(node, CodeBlock):
                    for decl in node.locals:
                        decl.declared_type = declared(decl.name)
    for decl in annotated.globals:
        decl.declared_type = declared(decl.name)

    annotated.classes = [
        ClassDecl(
            name=variable,
            properties=[
                PropertyDecl(name=prop, type=resolve_evidence(kinds) or PrimitiveType.UNKNOWN)
                for prop, kinds in members.items()
            ],
        )
        for variable, members in sorted(inferrer.members.items())
    ]
    logger.info(f"Inferred types for {len(type_evidence)} name(s) and {len(annotated.classes)} class(es)")
    return annotated
