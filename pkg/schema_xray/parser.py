"""
Injector from the supported ECMAScript subset into the Code model.

The subset covers `const`/`let`/`var`, function declarations, arrow and classic
anonymous functions, `if`/`else`, `while`, `return`, expression and assignment
statements, member/index/call chains, object and array literals, string, number,
boolean and `null` literals, and the binary operators of `BinaryOp`.
"""

import bisect
import enum
import itertools
import logging
import re
from collections.abc import Iterable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .code_walk import walk
from .errors import ProjectSyntaxError, SourceReadError, SourceSyntaxError
from .models.base import Diagnostic
from .models.code import (
    ArrayLiteral,
    AssignmentStmt,
    BinaryOp,
    Binary,
    Call,
    CallableInfo,
    CodeBlock,
    CodeContainer,
    CodeModel,
    Container,
    ContainerKind,
    DeclKeyword,
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
    Pair,
    ParseMode,
    PropertyAccess,
    ReturnStmt,
    Span,
    Statement,
    VarAccess,
    VariableDecl,
    VariableDeclStmt,
    WhileStmt,
)

logger = logging.getLogger(__name__)

DEFAULT_INCLUDE = ("**/*.js",)


class TokenKind(enum.StrEnum):
    IDENT = enum.auto()
    NUMBER = enum.auto()
    STRING = enum.auto()
    TEMPLATE = enum.auto()
    PUNCT = enum.auto()
    EOF = enum.auto()


@dataclass(frozen=True, slots=True)
class Token:
    kind: TokenKind
    value: str
    offset: int
    end: int
    newline_before: bool


PUNCTUATORS = (
    "===", "!==", "...", "**=", "==", "!=", ">=", "<=", "&&", "||", "=>", "++", "--",
    "+=", "-=", "*=", "/=", "%=", "?.", "??", "**",
)  # fmt: skip
OPENERS = {"(": ")", "[": "]", "{": "}"}
CLOSERS = {value: key for key, value in OPENERS.items()}

RESERVED = frozenset(
    {
        "async", "await", "break", "case", "catch", "class", "const", "continue", "debugger",
        "default", "delete", "do", "else", "export", "extends", "false", "finally", "for",
        "function", "if", "import", "in", "instanceof", "let", "new", "null", "return", "super",
        "switch", "throw", "true", "try", "typeof", "var", "void", "while", "with", "yield",
    }
)  # fmt: skip
UNSUPPORTED_STATEMENTS = frozenset(
    {"async", "await", "break", "class", "continue", "debugger", "do", "export", "for", "import",
     "switch", "throw", "try", "with", "yield"}
)  # fmt: skip
UNSUPPORTED_OPERATORS = frozenset(
    {"!==", "?", "??", "*", "/", "%", "**", "&", "|", "^", "+=", "-=", "*=", "/=", "%=", "**=", "instanceof", "in"}
)
LEVELS: tuple[frozenset[str], ...] = (
    frozenset({"||"}),
    frozenset({"&&"}),
    frozenset({"==", "===", "!="}),
    frozenset({">=", "<=", ">", "<"}),
    frozenset({"+", "-"}),
)

_WHITESPACE = re.compile(r"[\s\ufeff]+")
_IDENT = re.compile(r"[A-Za-z_$][\w$]*")
_NUMBER = re.compile(r"0[xX][0-9a-fA-F]+|\d+(?:\.\d+)?(?:[eE][+-]?\d+)?")
_INT = re.compile(r"0[xX][0-9a-fA-F]+|\d+")
_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "b": "\b", "f": "\f", "v": "\v", "0": "\0"}


def _positions(source: str) -> list[int]:
    return [0] + [match.end() for match in re.finditer(r"\n", source)]


class Tokenizer:
    """Splits source text into tokens, dropping whitespace and comments."""

    def __init__(self, source: str, path: str | None = None):
        self.source = source
        self.path = path
        self.line_starts = _positions(source)

    def location(self, offset: int) -> tuple[int, int]:
        index = bisect.bisect_right(self.line_starts, offset) - 1
        return index + 1, offset - self.line_starts[index] + 1

    def error(self, message: str, offset: int) -> SourceSyntaxError:
        line, column = self.location(offset)
        return SourceSyntaxError(message, line, column, self.path)

    def tokens(self) -> list[Token]:
        source = self.source
        found: list[Token] = []
        pos = 0
        newline = False
        while pos < len(source):
            if match := _WHITESPACE.match(source, pos):
                newline = newline or "\n" in match.group()
                pos = match.end()
                continue
            if source.startswith("//", pos):
                end = source.find("\n", pos)
                pos = len(source) if end < 0 else end
                continue
            if source.startswith("/*", pos):
                end = source.find("*/", pos + 2)
                if end < 0:
                    raise self.error("unterminated comment", pos)
                newline = newline or "\n" in source[pos:end]
                pos = end + 2
                continue
            char = source[pos]
            if char in "'\"":
                value, end = self._string(pos)
                found.append(Token(TokenKind.STRING, value, pos, end, newline))
            elif char == "`":
                end = self._template(pos)
                found.append(Token(TokenKind.TEMPLATE, source[pos:end], pos, end, newline))
            elif match := _IDENT.match(source, pos):
                found.append(Token(TokenKind.IDENT, match.group(), pos, match.end(), newline))
                end = match.end()
            elif match := _NUMBER.match(source, pos):
                end = match.end()
                found.append(Token(TokenKind.NUMBER, match.group(), pos, end, newline))
            else:
                punct = next((p for p in PUNCTUATORS if source.startswith(p, pos)), char)
                end = pos + len(punct)
                found.append(Token(TokenKind.PUNCT, punct, pos, end, newline))
            pos = end
            newline = False
        found.append(Token(TokenKind.EOF, "", len(source), len(source), True))
        return found

    def _string(self, start: int) -> tuple[str, int]:
        quote = self.source[start]
        chars: list[str] = []
        pos = start + 1
        while pos < len(self.source):
            char = self.source[pos]
            if char == quote:
                return "".join(chars), pos + 1
            if char == "\n":
                break
            if char == "\\":
                pos += 1
                if pos >= len(self.source):
                    break
                escaped = self.source[pos]
                if escaped == "u" and re.fullmatch(r"[0-9a-fA-F]{4}", self.source[pos + 1 : pos + 5]):
                    chars.append(chr(int(self.source[pos + 1 : pos + 5], 16)))
                    pos += 5
                    continue
                if escaped == "\n":
                    pos += 1
                    continue
                chars.append(_ESCAPES.get(escaped, escaped))
            else:
                chars.append(char)
            pos += 1
        raise self.error("unterminated string literal", start)

    def _template(self, start: int) -> int:
        pos = start + 1
        while pos < len(self.source):
            if self.source[pos] == "\\":
                pos += 2
                continue
            if self.source[pos] == "`":
                return pos + 1
            pos += 1
        raise self.error("unterminated template literal", start)


class Parser:
    """Recursive-descent parser producing one script `CodeContainer`.

    Parameters
    ----------
    source : str
        Source text.
    path : str
        Path reported in errors and warnings.
    mode : ParseMode
        In lenient mode the innermost unsupported statement is replaced by an opaque
        statement and a warning; only unbalanced delimiters remain fatal.
    """

    def __init__(self, source: str, path: str = "<source>", mode: ParseMode = ParseMode.STRICT):
        self.source = source
        self.path = path
        self.mode = mode
        self.tokenizer = Tokenizer(source, path)
        self.tokens = self.tokenizer.tokens()
        self.pos = 0
        self.warnings: list[Diagnostic] = []
        self.logger = logging.getLogger(__name__)

    # -- token helpers ---------------------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def advance(self) -> Token:
        token = self.tokens[self.pos]
        if token.kind != TokenKind.EOF:
            self.pos += 1
        return token

    def at(self, value: str, ahead: int = 0) -> bool:
        token = self.peek(ahead)
        return token.kind in (TokenKind.PUNCT, TokenKind.IDENT) and token.value == value

    def expect(self, value: str) -> Token:
        if not self.at(value):
            raise self.error(f"expected '{value}' but found {self._describe(self.peek())}")
        return self.advance()

    def error(self, message: str, token: Token | None = None) -> SourceSyntaxError:
        token = token or self.peek()
        return self.tokenizer.error(message, token.offset)

    @staticmethod
    def _describe(token: Token) -> str:
        return "end of input" if token.kind == TokenKind.EOF else f"'{token.value}'"

    def span(self, start: Token) -> Span:
        end = self.tokens[self.pos - 1].end if self.pos > 0 else start.end
        line, column = self.tokenizer.location(start.offset)
        return Span(line=line, column=column, length=max(end - start.offset, 0), offset=start.offset)

    # -- entry point -----------------------------------------------------------------

    def parse(self) -> CodeContainer:
        self._check_balance()
        statements = self._statements()
        if self.peek().kind != TokenKind.EOF:
            raise self.error(f"unexpected {self._describe(self.peek())}")
        body = CodeBlock(statements=statements)
        return CodeContainer(path=self.path, blocks=[body], warnings=self.warnings)

    def _check_balance(self) -> None:
        stack: list[Token] = []
        for token in self.tokens:
            if token.kind != TokenKind.PUNCT:
                continue
            if token.value in OPENERS:
                stack.append(token)
            elif token.value in CLOSERS:
                if not stack or stack[-1].value != CLOSERS[token.value]:
                    raise self.error(f"unbalanced '{token.value}'", token)
                stack.pop()
        if stack:
            raise self.error(f"unclosed '{stack[-1].value}'", stack[-1])

    # -- statements ------------------------------------------------------------------

    def _statements(self) -> list[Statement]:
        statements: list[Statement] = []
        while self.peek().kind != TokenKind.EOF and not self.at("}"):
            if self.at(";"):
                self.advance()
                continue
            statements.append(self._statement_or_opaque())
        return statements

    def _statement_or_opaque(self) -> Statement:
        start = self.pos
        try:
            return self._statement()
        except SourceSyntaxError as e:
            if self.mode == ParseMode.STRICT:
                raise
            self.pos = start
            return self._opaque(e)

    def _opaque(self, cause: SourceSyntaxError) -> Statement:
        start = self.pos
        first = self.peek()
        depth = 0
        while True:
            token = self.peek()
            if token.kind == TokenKind.EOF or (depth == 0 and token.value in CLOSERS and token.kind == TokenKind.PUNCT):
                break
            if token.kind == TokenKind.PUNCT and token.value in OPENERS:
                depth += 1
            elif token.kind == TokenKind.PUNCT and token.value in CLOSERS:
                depth -= 1
            self.advance()
            if depth:
                continue
            following = self.peek()
            if token.value == ";" and token.kind == TokenKind.PUNCT:
                break
            if following.kind == TokenKind.EOF or (following.kind == TokenKind.PUNCT and following.value in CLOSERS):
                break
            if following.newline_before and self._can_end(token):
                break
        if self.pos == start:
            self.advance()
        last = self.tokens[self.pos - 1]
        text = self.source[first.offset : last.end].rstrip()
        if text.endswith(";"):
            text = text[:-1].rstrip()
        line, column = self.tokenizer.location(first.offset)
        self.warnings.append(
            Diagnostic(
                code="lenient-opaque",
                message=f"Unsupported code kept as an opaque statement: {cause.message}",
                path=self.path,
                line=line,
            )
        )
        self.logger.warning(f"{self.path}:{line}:{column}: {cause.message}; kept as opaque statement")
        return ExpressionStmt(span=self.span(first), expr=Opaque(text=text))

    @staticmethod
    def _can_end(token: Token) -> bool:
        if token.kind in (TokenKind.IDENT, TokenKind.NUMBER, TokenKind.STRING, TokenKind.TEMPLATE):
            return True
        return token.value in (")", "]", "}", "++", "--")

    def _statement(self) -> Statement:
        token = self.peek()
        if token.kind == TokenKind.IDENT:
            if token.value in UNSUPPORTED_STATEMENTS:
                raise self.error(f"unsupported statement '{token.value}'")
            if token.value in ("const", "let", "var"):
                return self._variable_decl()
            if token.value == "function" and self.peek(1).kind == TokenKind.IDENT:
                return self._function_decl()
            if token.value == "if":
                return self._if()
            if token.value == "while":
                return self._while()
            if token.value == "return":
                return self._return()
            if token.value == "else":
                raise self.error("'else' without 'if'")
        if self.at("{"):
            raise self.error("nested blocks are not supported")
        expr = self._expression()
        if self.at("="):
            if not isinstance(expr, VarAccess | PropertyAccess | IndexAccess):
                raise self.error("invalid assignment target")
            self.advance()
            value = self._expression()
            self._end_statement()
            return AssignmentStmt(span=self.span(token), target=expr, value=value)
        self._end_statement()
        return ExpressionStmt(span=self.span(token), expr=expr)

    def _end_statement(self) -> None:
        if self.at(";"):
            self.advance()
            return
        token = self.peek()
        if token.kind == TokenKind.EOF or self.at("}") or token.newline_before:
            return
        if token.value in UNSUPPORTED_OPERATORS or token.value in ("++", "--"):
            raise self.error(f"unsupported operator '{token.value}'")
        raise self.error(f"unexpected {self._describe(token)}")

    def _variable_decl(self) -> Statement:
        start = self.advance()
        name = self._identifier()
        init = None
        if self.at("="):
            self.advance()
            init = self._expression()
        if self.at(","):
            raise self.error("multiple declarators are not supported")
        self._end_statement()
        return VariableDeclStmt(span=self.span(start), name=name, keyword=DeclKeyword(start.value), init=init)

    def _function_decl(self) -> Statement:
        start = self.advance()
        name = self._identifier()
        function = self._function_rest(name)
        if self.at(";"):
            self.advance()
        return VariableDeclStmt(span=self.span(start), name=name, keyword=DeclKeyword.FUNCTION, init=function)

    def _if(self) -> Statement:
        start = self.expect("if")
        self.expect("(")
        cond = self._expression()
        self.expect(")")
        then = self._branch()
        otherwise = None
        if self.at("else"):
            self.advance()
            if self.at("if"):
                otherwise = CodeBlock(statements=[self._if()])
            else:
                otherwise = self._branch()
        return IfStmt(span=self.span(start), cond=cond, then=then, otherwise=otherwise)

    def _while(self) -> Statement:
        start = self.expect("while")
        self.expect("(")
        cond = self._expression()
        self.expect(")")
        body = self._branch()
        return WhileStmt(span=self.span(start), cond=cond, body=body)

    def _return(self) -> Statement:
        start = self.expect("return")
        value = None
        token = self.peek()
        if not (self.at(";") or self.at("}") or token.kind == TokenKind.EOF or token.newline_before):
            value = self._expression()
        self._end_statement()
        return ReturnStmt(span=self.span(start), value=value)

    def _branch(self) -> CodeBlock:
        if self.at("{"):
            return self._block()
        return CodeBlock(statements=[self._statement_or_opaque()])

    def _block(self, callable: CallableInfo | None = None) -> CodeBlock:
        self.expect("{")
        statements = self._statements()
        self.expect("}")
        return CodeBlock(statements=statements, callable=callable)

    # -- expressions -----------------------------------------------------------------

    def _expression(self) -> Expr:
        expr = self._binary(0)
        token = self.peek()
        if token.kind != TokenKind.STRING and token.value in UNSUPPORTED_OPERATORS:
            raise self.error(f"unsupported operator '{token.value}'")
        return expr

    def _binary(self, level: int) -> Expr:
        if level == len(LEVELS):
            return self._unary()
        lhs = self._binary(level + 1)
        while self.peek().kind == TokenKind.PUNCT and self.peek().value in LEVELS[level]:
            op = BinaryOp(self.advance().value)
            rhs = self._binary(level + 1)
            lhs = Binary(op=op, lhs=lhs, rhs=rhs)
        return lhs

    def _unary(self) -> Expr:
        token = self.peek()
        if token.kind == TokenKind.PUNCT:
            if token.value == "-" and self.peek(1).kind == TokenKind.NUMBER and self.peek(1).offset == token.end:
                self.advance()
                number = self.advance()
                return LiteralExpr(literal_kind=self._number_kind(number.value), lexeme=f"-{number.value}")
            if token.value in ("!", "-", "+", "++", "--", "~", "..."):
                raise self.error(f"unsupported operator '{token.value}'")
        if token.kind == TokenKind.IDENT and token.value in ("typeof", "delete", "void", "await", "async", "yield"):
            raise self.error(f"unsupported operator '{token.value}'")
        return self._postfix()

    def _postfix(self) -> Expr:
        expr = self._primary()
        while True:
            if self.at("."):
                self.advance()
                name = self._property_name()
                if name == "then" and self.at("("):
                    raise self.error("promise chains are not supported")
                if self.at("("):
                    expr = Call(receiver=expr, method=name, args=self._arguments())
                else:
                    expr = PropertyAccess(object=expr, property=name)
            elif self.at("["):
                self.advance()
                index = self._expression()
                self.expect("]")
                expr = IndexAccess(object=expr, index=index)
            elif self.at("("):
                if not isinstance(expr, VarAccess):
                    raise self.error("calls on computed callees are not supported")
                expr = Call(receiver=None, method=expr.name, args=self._arguments())
            elif self.at("?."):
                raise self.error("optional chaining is not supported")
            elif self.peek().kind == TokenKind.TEMPLATE:
                raise self.error("template literals are not supported")
            else:
                return expr

    def _primary(self) -> Expr:
        token = self.peek()
        match token.kind:
            case TokenKind.NUMBER:
                self.advance()
                return LiteralExpr(literal_kind=self._number_kind(token.value), lexeme=token.value)
            case TokenKind.STRING:
                self.advance()
                return LiteralExpr(literal_kind=LiteralKind.STRING, lexeme=token.value)
            case TokenKind.TEMPLATE:
                raise self.error("template literals are not supported")
            case TokenKind.PUNCT:
                if token.value == "(":
                    if self._arrow_ahead():
                        return self._arrow()
                    self.advance()
                    expr = self._expression()
                    self.expect(")")
                    return expr
                if token.value == "{":
                    return self._object()
                if token.value == "[":
                    return self._array()
            case TokenKind.IDENT:
                if token.value in ("true", "false"):
                    self.advance()
                    return LiteralExpr(literal_kind=LiteralKind.BOOL, lexeme=token.value)
                if token.value == "null":
                    self.advance()
                    return LiteralExpr(literal_kind=LiteralKind.NULL, lexeme="null")
                if token.value == "function":
                    self.advance()
                    name = self._identifier() if self.peek().kind == TokenKind.IDENT else None
                    return self._function_rest(name)
                if token.value == "new":
                    self.advance()
                    class_name = self._identifier()
                    args = self._arguments() if self.at("(") else []
                    return New(class_name=class_name, args=args)
                if token.value in RESERVED:
                    raise self.error(f"unsupported keyword '{token.value}'")
                if self.at("=>", 1):
                    return self._arrow()
                self.advance()
                return VarAccess(name=token.value)
            case TokenKind.EOF:
                pass
        raise self.error(f"unexpected {self._describe(token)}")

    @staticmethod
    def _number_kind(lexeme: str) -> LiteralKind:
        return LiteralKind.INT if _INT.fullmatch(lexeme) else LiteralKind.DOUBLE

    def _arrow_ahead(self) -> bool:
        depth = 0
        for index in range(self.pos, len(self.tokens)):
            token = self.tokens[index]
            if token.kind != TokenKind.PUNCT:
                continue
            if token.value in OPENERS:
                depth += 1
            elif token.value in CLOSERS:
                depth -= 1
                if depth == 0:
                    following = self.tokens[index + 1]
                    return following.kind == TokenKind.PUNCT and following.value == "=>"
        return False

    def _arrow(self) -> Lambda:
        if self.peek().kind == TokenKind.IDENT:
            params = [self._identifier()]
        else:
            params = self._params()
        self.expect("=>")
        info = CallableInfo(params=params, anonymous=True)
        if self.at("{"):
            body = self._block(info)
        else:
            start = self.peek()
            value = self._expression()
            body = CodeBlock(statements=[ReturnStmt(span=self.span(start), value=value)], callable=info)
        return Lambda(params=params, body=body, style=LambdaStyle.ARROW)

    def _function_rest(self, name: str | None) -> Lambda:
        params = self._params()
        info = CallableInfo(params=params, anonymous=name is None, name=name)
        body = self._block(info)
        return Lambda(params=params, body=body, style=LambdaStyle.FUNCTION, name=name)

    def _params(self) -> list[str]:
        self.expect("(")
        params: list[str] = []
        while not self.at(")"):
            if self.at("..."):
                raise self.error("rest parameters are not supported")
            name = self._identifier()
            if name in params:
                raise self.error(f"duplicate parameter '{name}'")
            if self.at("="):
                raise self.error("default parameters are not supported")
            params.append(name)
            if not self.at(")"):
                self.expect(",")
        self.expect(")")
        return params

    def _arguments(self) -> list[Expr]:
        self.expect("(")
        args: list[Expr] = []
        while not self.at(")"):
            if self.at("..."):
                raise self.error("spread arguments are not supported")
            args.append(self._expression())
            if not self.at(")"):
                self.expect(",")
        self.expect(")")
        return args

    def _object(self) -> ObjectLiteral:
        self.expect("{")
        pairs: list[Pair] = []
        while not self.at("}"):
            token = self.peek()
            if token.kind not in (TokenKind.IDENT, TokenKind.STRING, TokenKind.NUMBER):
                raise self.error(f"unsupported object key {self._describe(token)}")
            self.advance()
            if self.at(":"):
                self.advance()
                pairs.append(Pair(name=token.value, value=self._expression()))
            elif token.kind == TokenKind.IDENT and token.value not in RESERVED and (self.at(",") or self.at("}")):
                pairs.append(Pair(name=token.value, value=VarAccess(name=token.value)))
            else:
                raise self.error(f"unsupported object member {self._describe(self.peek())}")
            if not self.at("}"):
                self.expect(",")
        self.expect("}")
        return ObjectLiteral(pairs=pairs)

    def _array(self) -> ArrayLiteral:
        self.expect("[")
        items: list[Expr] = []
        while not self.at("]"):
            if self.at(",") or self.at("..."):
                raise self.error("array holes and spreads are not supported")
            items.append(self._expression())
            if not self.at("]"):
                self.expect(",")
        self.expect("]")
        return ArrayLiteral(items=items)

    def _identifier(self) -> str:
        token = self.peek()
        if token.kind == TokenKind.IDENT and token.value not in RESERVED:
            return self.advance().value
        if self.at("{") or self.at("["):
            raise self.error("destructuring is not supported")
        raise self.error(f"expected an identifier but found {self._describe(token)}")

    def _property_name(self) -> str:
        token = self.peek()
        if token.kind != TokenKind.IDENT:
            raise self.error(f"expected a property name but found {self._describe(token)}")
        return self.advance().value


def number_nodes(container: CodeContainer, file_index: int) -> None:
    """Assign pre-order NodeIds and fill the block-level variable declarations."""
    counter = itertools.count()
    for block in container.blocks:
        for node in walk(block):
            node.id = f"{file_index}:{next(counter)}"
    for block in container.blocks:
        for node in walk(block):
            if isinstance(node, CodeBlock):
                node.locals = [
                    VariableDecl(name=stmt.name, init_site=stmt.id if stmt.init is not None else None)
                    for stmt in node.statements
                    if isinstance(stmt, VariableDeclStmt)
                ]
    container.variable_decls = [decl.model_copy() for decl in container.body.locals]


def parse_source(
    source: str, path: str = "<source>", mode: ParseMode = ParseMode.STRICT, file_index: int = 0
) -> CodeContainer:
    """Parse one source file into a script `CodeContainer`.

    Parameters
    ----------
    source : str
        Source text in the supported subset.
    path : str
        Path used in diagnostics.
    mode : ParseMode
        Strict mode raises on the first unsupported construct, lenient mode keeps it as an
        opaque statement and records a warning.
    file_index : int
        Prefix of the NodeIds of this file.

    Returns
    -------
    CodeContainer
        The script container, with exactly one top-level block.

    Raises
    ------
    SourceSyntaxError
        On malformed input (strict) or unbalanced delimiters (both modes).
    """
    container = Parser(source, path, mode).parse()
    number_nodes(container, file_index)
    logger.debug(f"Parsed {path}: {len(container.body.statements)} top-level statements")
    return container


def _parse_entry(args: tuple[str, str, ParseMode, int]) -> CodeContainer | SourceSyntaxError:
    source, path, mode, index = args
    try:
        return parse_source(source, path, mode, index)
    except SourceSyntaxError as e:
        return e


def inject_sources(files: dict[str, str], mode: ParseMode = ParseMode.STRICT, max_workers: int = 4) -> CodeModel:
    """Build a `CodeModel` from in-memory sources keyed by relative posix path.

    Raises
    ------
    ProjectSyntaxError
        When any file fails to parse.
    """
    paths = sorted(files)
    jobs = [(files[path], path, mode, index) for index, path in enumerate(paths)]
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        results = list(pool.map(_parse_entry, jobs))

    errors = [result for result in results if isinstance(result, SourceSyntaxError)]
    if errors:
        raise ProjectSyntaxError(errors)

    root = Container(kind=ContainerKind.DIRECTORY, path=".")
    directories: dict[str, Container] = {".": root}
    model = CodeModel(containers=[root])
    for path, container in zip(paths, results, strict=True):
        assert isinstance(container, CodeContainer)
        parent = root
        parts = path.split("/")
        for depth in range(1, len(parts)):
            directory = "/".join(parts[:depth])
            if directory not in directories:
                directories[directory] = Container(kind=ContainerKind.DIRECTORY, path=directory)
                parent.children.append(directories[directory])
            parent = directories[directory]
        parent.children.append(Container(kind=ContainerKind.FILE, path=path, code_containers=[container]))
        model.globals.extend(decl.model_copy() for decl in container.variable_decls)
        model.warnings.extend(container.warnings)
    for directory in directories.values():
        directory.children.sort(key=lambda child: child.path)
    logger.info(f"Injected {len(paths)} file(s) with {len(model.warnings)} warning(s)")
    return model


def collect_files(root: Path, include: Iterable[str] = DEFAULT_INCLUDE) -> dict[str, str]:
    """Read every file under `root` matching one of the `include` globs.

    A `root` that is a file is read on its own.

    Raises
    ------
    SourceReadError
        When `root` does not exist or a matched file cannot be read as UTF-8.
    """
    root = Path(root)
    if root.is_file():
        matched = {root}
        base = root.parent
    elif root.is_dir():
        base = root
        matched = {path for pattern in include for path in root.glob(pattern) if path.is_file()}
    else:
        raise SourceReadError(root, "no such file or directory")

    files: dict[str, str] = {}
    for path in sorted(matched):
        try:
            files[path.relative_to(base).as_posix()] = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as e:
            raise SourceReadError(path, str(e)) from e
    return files


def inject_project(
    root: Path,
    include: Iterable[str] = DEFAULT_INCLUDE,
    mode: ParseMode = ParseMode.STRICT,
    max_workers: int = 4,
) -> CodeModel:
    """Parse every matched file below `root` into one `CodeModel`.

    Files are parsed concurrently; containers are ordered lexicographically by path and
    nested under directory containers.
    """
    logger.info(f"Injecting {root} (mode={mode})")
    return inject_sources(collect_files(Path(root), include), mode, max_workers)
