"""Canonical source regeneration from the Code model (2-space indent, single quotes, semicolons)."""

import logging
import re

from .models.code import (
    ArrayLiteral,
    AssignmentStmt,
    Binary,
    BinaryOp,
    Call,
    CodeBlock,
    CodeContainer,
    CodeModel,
    Expr,
    ExpressionStmt,
    IfStmt,
    IndexAccess,
    Lambda,
    LambdaStyle,
    LiteralExpr,
    LiteralKind,
    New,
    ObjectLiteral,
    Opaque,
    PropertyAccess,
    ReturnStmt,
    Statement,
    VarAccess,
    VariableDeclStmt,
    WhileStmt,
)

logger = logging.getLogger(__name__)

INDENT = "  "

PRECEDENCE = {
    BinaryOp.OR: 1,
    BinaryOp.AND: 2,
    BinaryOp.EQ: 3,
    BinaryOp.STRICT_EQ: 3,
    BinaryOp.NE: 3,
    BinaryOp.GE: 4,
    BinaryOp.LE: 4,
    BinaryOp.GT: 4,
    BinaryOp.LT: 4,
    BinaryOp.ADD: 5,
    BinaryOp.SUB: 5,
}
POSTFIX = 10

_IDENTIFIER = re.compile(r"[A-Za-z_$][\w$]*")
_QUOTE_ESCAPES = {"\\": "\\\\", "'": "\\'", "\n": "\\n", "\r": "\\r", "\t": "\\t", "\0": "\\0"}


def quote(text: str) -> str:
    return "'" + "".join(_QUOTE_ESCAPES.get(char, char) for char in text) + "'"


def _precedence(expr: Expr) -> int:
    match expr:
        case Binary():
            return PRECEDENCE[expr.op]
        case Lambda():
            return 0
        case LiteralExpr() if expr.lexeme.startswith("-"):
            return 6
        case _:
            return POSTFIX


class SourcePrinter:
    """Prints statements and expressions at a given indentation depth."""

    def block(self, block: CodeBlock, depth: int) -> list[str]:
        lines: list[str] = []
        for statement in block.statements:
            lines.extend(self.statement(statement, depth))
        return lines

    def braced(self, block: CodeBlock, depth: int) -> str:
        """`{`, the block's lines, and the closing brace at `depth` (the opening line is the caller's)."""
        inner = self.block(block, depth + 1)
        if not inner:
            return "{}"
        return "{\n" + "\n".join(inner) + "\n" + INDENT * depth + "}"

    def statement(self, statement: Statement, depth: int) -> list[str]:
        pad = INDENT * depth
        match statement:
            case ExpressionStmt(expr=Opaque() as opaque):
                text = opaque.text
                return [pad + (text if text.endswith("}") else text + ";")]
            case ExpressionStmt():
                text = self.expr(statement.expr, depth)
                if self._needs_statement_parens(statement.expr):
                    text = f"({text})"
                return [f"{pad}{text};"]
            case VariableDeclStmt(init=Lambda(name=str()) as function) if statement.keyword == "function":
                return [pad + self.function(function, depth)]
            case VariableDeclStmt():
                if statement.init is None:
                    return [f"{pad}{statement.keyword} {statement.name};"]
                return [f"{pad}{statement.keyword} {statement.name} = {self.expr(statement.init, depth)};"]
            case AssignmentStmt():
                return [f"{pad}{self.expr(statement.target, depth)} = {self.expr(statement.value, depth)};"]
            case IfStmt():
                return [pad + self._if(statement, depth)]
            case WhileStmt():
                return [f"{pad}while ({self.expr(statement.cond, depth)}) {self.braced(statement.body, depth)}"]
            case ReturnStmt():
                if statement.value is None:
                    return [f"{pad}return;"]
                return [f"{pad}return {self.expr(statement.value, depth)};"]
        raise TypeError(f"Cannot print {type(statement).__name__}")

    def _if(self, statement: IfStmt, depth: int) -> str:
        text = f"if ({self.expr(statement.cond, depth)}) {self.braced(statement.then, depth)}"
        otherwise = statement.otherwise
        if otherwise is None:
            return text
        if len(otherwise.statements) == 1 and isinstance(otherwise.statements[0], IfStmt):
            return f"{text} else {self._if(otherwise.statements[0], depth)}"
        return f"{text} else {self.braced(otherwise, depth)}"

    @staticmethod
    def _needs_statement_parens(expr: Expr) -> bool:
        current = expr
        while True:
            match current:
                case ObjectLiteral():
                    return True
                case Lambda(style=LambdaStyle.FUNCTION):
                    return True
                case PropertyAccess() | IndexAccess():
                    current = current.object
                case Call(receiver=receiver) if receiver is not None:
                    current = receiver
                case Binary():
                    current = current.lhs
                case _:
                    return False

    def function(self, function: Lambda, depth: int) -> str:
        name = f" {function.name}" if function.name else ""
        return f"function{name}({', '.join(function.params)}) {self.braced(function.body, depth)}"

    def expr(self, expr: Expr, depth: int) -> str:
        match expr:
            case LiteralExpr(literal_kind=LiteralKind.STRING):
                return quote(expr.lexeme)
            case LiteralExpr():
                return expr.lexeme
            case VarAccess():
                return expr.name
            case PropertyAccess():
                return f"{self._operand(expr.object, depth)}.{expr.property}"
            case IndexAccess():
                return f"{self._operand(expr.object, depth)}[{self.expr(expr.index, depth)}]"
            case Call():
                args = ", ".join(self.expr(arg, depth) for arg in expr.args)
                if expr.receiver is None:
                    return f"{expr.method}({args})"
                return f"{self._operand(expr.receiver, depth)}.{expr.method}({args})"
            case Lambda(style=LambdaStyle.FUNCTION):
                return self.function(expr, depth)
            case Lambda():
                return f"({', '.join(expr.params)}) => {self.braced(expr.body, depth)}"
            case ObjectLiteral():
                if not expr.pairs:
                    return "{}"
                pairs = ", ".join(f"{self._key(pair.name)}: {self.expr(pair.value, depth)}" for pair in expr.pairs)
                return f"{{ {pairs} }}"
            case ArrayLiteral():
                return "[" + ", ".join(self.expr(item, depth) for item in expr.items) + "]"
            case New():
                return f"new {expr.class_name}(" + ", ".join(self.expr(arg, depth) for arg in expr.args) + ")"
            case Binary():
                level = PRECEDENCE[expr.op]
                lhs = self.expr(expr.lhs, depth)
                rhs = self.expr(expr.rhs, depth)
                if _precedence(expr.lhs) < level:
                    lhs = f"({lhs})"
                if _precedence(expr.rhs) <= level:
                    rhs = f"({rhs})"
                return f"{lhs} {expr.op} {rhs}"
            case Opaque():
                return expr.text
        raise TypeError(f"Cannot print {type(expr).__name__}")

    def _operand(self, expr: Expr, depth: int) -> str:
        text = self.expr(expr, depth)
        return f"({text})" if _precedence(expr) < POSTFIX or isinstance(expr, New) else text

    @staticmethod
    def _key(name: str) -> str:
        return name if _IDENTIFIER.fullmatch(name) else quote(name)


def print_container(container: CodeContainer) -> str:
    printer = SourcePrinter()
    lines = [line for block in container.blocks for line in printer.block(block, 0)]
    return "\n".join(lines) + "\n" if lines else ""


def print_statement(statement: Statement, depth: int = 0) -> str:
    return "\n".join(SourcePrinter().statement(statement, depth))


def print_expr(expr: Expr) -> str:
    return SourcePrinter().expr(expr, 0)


def regenerate(model: CodeModel | CodeContainer) -> dict[str, str]:
    """Regenerate canonical source text.

    Parameters
    ----------
    model : CodeModel | CodeContainer
        A whole model, or a single container.

    Returns
    -------
    dict[str, str]
        Text per file path. An empty container prints as the empty string.
    """
    if isinstance(model, CodeContainer):
        return {model.path: print_container(model)}
    texts = {file.path: "".join(print_container(cc) for cc in file.code_containers) for file in model.files()}
    logger.debug(f"Regenerated {len(texts)} file(s)")
    return texts
