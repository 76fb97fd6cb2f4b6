"""Lossless Kotlin tokenizer and tolerant island parser.

The parser recognizes only the constructs the feature detectors and the
normalization denominators need. Anything else is folded into ``Other``
nodes so that parsing never fails on unusual or broken input.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterator

__all__ = [
    "DecodeError",
    "NodeKind",
    "SourceTree",
    "SyntaxNode",
    "Token",
    "TokenKind",
    "count_lloc",
    "decode_source",
    "parse",
    "parse_source",
    "tokenize",
    "MODIFIERS",
]


class DecodeError(ValueError):
    """Raised when a source file is not valid UTF-8."""

    def __init__(self, path: str, offset: int, reason: str = "invalid utf-8") -> None:
        super().__init__(f"{path}: byte {offset}: {reason}")
        self.path = path
        self.offset = offset


class TokenKind(str, enum.Enum):
    KEYWORD = "keyword"
    IDENTIFIER = "identifier"
    OPERATOR = "operator"
    STRING = "string-literal"
    NUMBER = "number"
    COMMENT = "comment"
    WHITESPACE = "whitespace"
    OTHER = "other"


@dataclass(frozen=True, slots=True)
class Token:
    """A lexical token. ``line`` and ``column`` are 1-based."""

    kind: TokenKind
    text: str
    line: int
    column: int

    @property
    def end_line(self) -> int:
        """Line of the token's last character."""
        return self.line + self.text.count("\n", 0, max(len(self.text) - 1, 0))


class NodeKind(str, enum.Enum):
    FILE = "File"
    CLASS_DECL = "ClassDecl"
    OBJECT_DECL = "ObjectDecl"
    COMPANION_OBJECT_DECL = "CompanionObjectDecl"
    FUNCTION_DECL = "FunctionDecl"
    CONSTRUCTOR_DECL = "ConstructorDecl"
    PROPERTY_DECL = "PropertyDecl"
    VARIABLE_DECL = "VariableDecl"
    DESTRUCTURING_DECL = "DestructuringDecl"
    LAMBDA_EXPR = "LambdaExpr"
    CALL_EXPR = "CallExpr"
    CALL_ARGUMENT = "CallArgument"
    BINARY_OP = "BinaryOp"
    UNARY_POSTFIX_OP = "UnaryPostfixOp"
    WHEN_EXPR = "WhenExpr"
    STRING_LITERAL = "StringLiteral"
    STRING_TEMPLATE_ENTRY = "StringTemplateEntry"
    TYPE_ALIAS_DECL = "TypeAliasDecl"
    SUPER_TYPE_ENTRY = "SuperTypeEntry"
    MODIFIER = "Modifier"
    BLOCK = "Block"
    OTHER = "Other"


@dataclass(eq=False, slots=True)
class SyntaxNode:
    kind: NodeKind
    start_line: int
    end_line: int = 0
    children: list[SyntaxNode] = field(default_factory=list)
    attrs: dict = field(default_factory=dict)

    @property
    def name(self) -> str | None:
        return self.attrs.get("name")

    @property
    def line(self) -> int:
        """Line a detector should report for this node."""
        return self.attrs.get("line", self.start_line)

    @property
    def modifiers(self) -> frozenset[str]:
        return frozenset(c.attrs["text"] for c in self.children if c.kind is NodeKind.MODIFIER)

    def walk(self) -> Iterator[SyntaxNode]:
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))


@dataclass(slots=True)
class SourceTree:
    path: str
    root: SyntaxNode
    tokens: list[Token]
    token_count: int
    physical_lines: int
    warnings: int = 0


# --------------------------------------------------------------------------
# Lexer
# --------------------------------------------------------------------------

HARD_KEYWORDS = frozenset(
    """as break class continue do else false for fun if in interface is null
    object package return super this throw true try typealias typeof val var
    when while""".split()
)

MODIFIERS = frozenset(
    """abstract actual annotation companion const crossinline data enum expect
    external final infix inline inner internal lateinit noinline open operator
    out override private protected public reified sealed suspend tailrec value
    vararg""".split()
)

_OPERATORS = sorted(
    """!== === ..< ?. ?: !! .. :: -> == != <= >= && || ++ -- += -= *= /= %=
    + - * / % = < > ! ? . , ; : ( ) { } [ ] @ & | # ~ ^""".split(),
    key=len,
    reverse=True,
)

_WS_RE = re.compile(r"[ \t\r\n\f\v﻿  -​  　]+")
_IDENT_RE = re.compile(r"[^\W\d]\w*")
_BACKTICK_RE = re.compile(r"`[^`\r\n]+`")
_NUMBER_RE = re.compile(
    r"0[xX][0-9a-fA-F_]+[uU]?[lL]?"
    r"|0[bB][01_]+[uU]?[lL]?"
    r"|\d[\d_]*\.\d[\d_]*(?:[eE][+-]?\d[\d_]*)?[fFdD]?"
    r"|\d[\d_]*(?:[eE][+-]?\d[\d_]*)?[fFdD]?[uU]?[lL]?"
)
_CHAR_RE = re.compile(r"'(?:\\u[0-9a-fA-F]{4}|\\.|[^'\\\r\n])'")
_TEMPLATE_ID_RE = re.compile(r"\$([^\W\d]\w*|`[^`\r\n]+`)")


def decode_source(data: bytes, path: str = "<memory>") -> str:
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DecodeError(path, exc.start, exc.reason) from None


def _skip_block_comment(src: str, i: int) -> int:
    """Return the index just past a (nesting) block comment starting at ``i``."""
    depth = 0
    n = len(src)
    while i < n:
        if src.startswith("/*", i):
            depth += 1
            i += 2
        elif src.startswith("*/", i):
            depth -= 1
            i += 2
            if depth == 0:
                return i
        else:
            i += 1
    return n


def _scan_literal(src: str, i: int, mode: str) -> int:
    """Scan a string literal or template hole without recursion.

    ``mode`` is ``"string"`` when ``i`` points at an opening quote, or
    ``"hole"`` when ``i`` points just after ``${``. Returns the index just
    past the construct. Unterminated single-line strings stop at the end of
    the line; anything else unterminated runs to the end of input.
    """
    n = len(src)
    # frames: ["raw"], ["str"] or ["hole", brace_depth]
    stack: list[list] = []
    if mode == "hole":
        stack.append(["hole", 1])
    elif src.startswith('"""', i):
        stack.append(["raw"])
        i += 3
    else:
        stack.append(["str"])
        i += 1
    while i < n and stack:
        top = stack[-1]
        ch = src[i]
        if top[0] == "hole":
            if ch == "{":
                top[1] += 1
                i += 1
            elif ch == "}":
                top[1] -= 1
                i += 1
                if top[1] == 0:
                    stack.pop()
            elif ch == '"':
                if src.startswith('"""', i):
                    stack.append(["raw"])
                    i += 3
                else:
                    stack.append(["str"])
                    i += 1
            elif ch == "'":
                m = _CHAR_RE.match(src, i)
                i = m.end() if m else i + 1
            elif src.startswith("/*", i):
                i = _skip_block_comment(src, i)
            elif src.startswith("//", i):
                j = src.find("\n", i)
                i = n if j < 0 else j
            else:
                i += 1
        elif top[0] == "raw":
            if src.startswith('"""', i):
                i += 3
                while i < n and src[i] == '"':
                    i += 1
                stack.pop()
            elif src.startswith("${", i):
                stack.append(["hole", 1])
                i += 2
            else:
                i += 1
        else:
            if ch == "\\":
                i += 2
            elif ch == '"':
                i += 1
                stack.pop()
            elif ch == "\n":
                stack.pop()
            elif src.startswith("${", i):
                stack.append(["hole", 1])
                i += 2
            else:
                i += 1
    return min(i, n)


def _skip_template_expr(src: str, i: int) -> int:
    """``i`` points just after ``${``; return the index just past the closing brace."""
    return _scan_literal(src, i, "hole")


def _skip_string(src: str, i: int) -> int:
    """``i`` points at the opening quote; return the index just past the literal."""
    return _scan_literal(src, i, "string")


def tokenize(source: str | bytes, path: str = "<memory>", *, line: int = 1, column: int = 1) -> list[Token]:
    """Split Kotlin source into a lossless token stream.

    Joining the ``text`` of all returned tokens reproduces the input exactly.
    String literals (including raw strings with template holes) and nested
    block comments each come out as a single token.

    Raises:
        DecodeError: if ``source`` is bytes and not valid UTF-8.
    """
    src = decode_source(source, path) if isinstance(source, bytes) else source
    tokens: list[Token] = []
    i = 0
    n = len(src)
    cur_line, cur_col = line, column

    while i < n:
        ch = src[i]
        if (m := _WS_RE.match(src, i)) is not None:
            kind, j = TokenKind.WHITESPACE, m.end()
        elif src.startswith("//", i) or (i == 0 and src.startswith("#!")):
            j = src.find("\n", i)
            kind, j = TokenKind.COMMENT, (n if j < 0 else j)
        elif src.startswith("/*", i):
            kind, j = TokenKind.COMMENT, _skip_block_comment(src, i)
        elif ch == '"':
            kind, j = TokenKind.STRING, _skip_string(src, i)
        elif ch == "'":
            m = _CHAR_RE.match(src, i)
            kind, j = TokenKind.OTHER, (m.end() if m else i + 1)
        elif ch.isdigit() and (m := _NUMBER_RE.match(src, i)) is not None:
            kind, j = TokenKind.NUMBER, m.end()
        elif (m := _IDENT_RE.match(src, i)) is not None:
            j = m.end()
            kind = TokenKind.KEYWORD if m.group() in HARD_KEYWORDS else TokenKind.IDENTIFIER
        elif ch == "`" and (m := _BACKTICK_RE.match(src, i)) is not None:
            kind, j = TokenKind.IDENTIFIER, m.end()
        else:
            for op in _OPERATORS:
                if src.startswith(op, i):
                    kind, j = TokenKind.OPERATOR, i + len(op)
                    break
            else:
                kind, j = TokenKind.OTHER, i + 1
        text = src[i:j]
        tokens.append(Token(kind, text, cur_line, cur_col))
        nl = text.count("\n")
        if nl:
            cur_line += nl
            cur_col = len(text) - text.rfind("\n")
        else:
            cur_col += len(text)
        i = j
    return tokens


def count_lloc(tree: SourceTree | list[Token]) -> int:
    """Count physical lines holding at least one non-blank, non-comment token."""
    tokens = tree.tokens if isinstance(tree, SourceTree) else tree
    lines: set[int] = set()
    for tok in tokens:
        if tok.kind in (TokenKind.WHITESPACE, TokenKind.COMMENT):
            continue
        lines.update(range(tok.line, tok.end_line + 1))
    return len(lines)


def _physical_lines(text: str) -> int:
    if not text:
        return 0
    return text.count("\n") + (0 if text.endswith("\n") else 1)


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


@dataclass(slots=True)
class _Sig:
    """A significant (non-trivia) token plus newline context."""

    tok: Token
    nl: bool
    end_line: int

    @property
    def text(self) -> str:
        return self.tok.text

    @property
    def kind(self) -> TokenKind:
        return self.tok.kind

    @property
    def line(self) -> int:
        return self.tok.line


_EOF = _Sig(Token(TokenKind.OTHER, "", 0, 0), True, 0)

_OPENERS = {"(": ")", "[": "]", "{": "}"}
_CLOSERS = frozenset(_OPENERS.values())

_BINARY_PREC = {
    "||": 1,
    "&&": 2,
    "==": 3, "!=": 3, "===": 3, "!==": 3,
    "<": 4, ">": 4, "<=": 4, ">=": 4,
    "in": 5, "!in": 5, "is": 5, "!is": 5,
    "?:": 6,
    # 7: named infix function
    "..": 8, "..<": 8,
    "+": 9, "-": 9,
    "*": 10, "/": 10, "%": 10,
    "as": 11, "as?": 11,
}
_INFIX_PREC = 7
_NL_CONTINUES = frozenset({"||", "&&", "?:", "as", "as?"})
_ASSIGN_OPS = frozenset({"=", "+=", "-=", "*=", "/=", "%="})

# Soft keywords that never act as infix function names in expression position.
_NOT_INFIX = frozenset({"by", "where", "get", "set", "catch", "finally", "constructor", "init"}) | MODIFIERS

_DECL_KEYWORDS = frozenset({"class", "interface", "fun", "val", "var", "object", "typealias", "constructor"})

_MAX_DEPTH = 80


class _Parser:
    def __init__(self, tokens: list[Token], depth: int = 0) -> None:
        sig: list[_Sig] = []
        nl = True
        for tok in tokens:
            if tok.kind in (TokenKind.WHITESPACE, TokenKind.COMMENT):
                if "\n" in tok.text:
                    nl = True
                continue
            sig.append(_Sig(tok, nl, tok.end_line))
            nl = False
        self.toks = sig
        self.pos = 0
        self.nl_sensitive = [True]
        self.depth = depth
        self.warnings = 0

    # -- token helpers --------------------------------------------------

    @property
    def cur(self) -> _Sig:
        return self.toks[self.pos] if self.pos < len(self.toks) else _EOF

    def peek(self, k: int = 1) -> _Sig:
        j = self.pos + k
        return self.toks[j] if j < len(self.toks) else _EOF

    def at_eof(self) -> bool:
        return self.pos >= len(self.toks)

    def is_(self, text: str, k: int = 0) -> bool:
        t = self.peek(k) if k else self.cur
        return t is not _EOF and t.text == text and t.kind in (TokenKind.OPERATOR, TokenKind.KEYWORD, TokenKind.IDENTIFIER)

    def is_op(self, text: str, k: int = 0) -> bool:
        t = self.peek(k) if k else self.cur
        return t.kind is TokenKind.OPERATOR and t.text == text

    def is_kw(self, text: str, k: int = 0) -> bool:
        t = self.peek(k) if k else self.cur
        return t.kind is TokenKind.KEYWORD and t.text == text

    def is_ident(self, text: str | None = None, k: int = 0) -> bool:
        t = self.peek(k) if k else self.cur
        return t.kind is TokenKind.IDENTIFIER and (text is None or t.text == text)

    def newline_before(self, k: int = 0) -> bool:
        t = self.peek(k) if k else self.cur
        return t.nl and self.nl_sensitive[-1]

    def adjacent(self, k: int) -> bool:
        """True if token ``k`` ahead starts right where token ``k-1`` ends."""
        a, b = self.peek(k - 1), self.peek(k)
        if a is _EOF or b is _EOF:
            return False
        return a.tok.line == b.tok.line and a.tok.column + len(a.text) == b.tok.column

    def advance(self) -> _Sig:
        t = self.cur
        if self.pos < len(self.toks):
            self.pos += 1
        return t

    def here(self) -> int:
        return self.last_line() if self.at_eof() else self.cur.line

    def last_line(self) -> int:
        if self.pos == 0:
            return 1
        return self.toks[self.pos - 1].end_line

    def node(self, kind: NodeKind, at_line: int | None = None, **attrs) -> SyntaxNode:
        start = self.here() if at_line is None else at_line
        return SyntaxNode(kind, start, start, [], attrs)

    def close(self, node: SyntaxNode) -> SyntaxNode:
        end = max(self.last_line(), node.start_line)
        for child in node.children:
            if child.end_line > end:
                end = child.end_line
            if child.start_line < node.start_line:
                node.start_line = child.start_line
        node.end_line = end
        return node

    def recover(self, parent: SyntaxNode | None) -> None:
        """Consume one token (or a balanced group) that nothing recognized."""
        self.warnings += 1
        start = self.pos
        line = self.here()
        self.skip_balanced()
        if self.pos == start:
            self.advance()
        if parent is not None:
            parent.children.append(self.close(self.node(NodeKind.OTHER, line, role="unparsed")))

    def skip_balanced(self) -> None:
        """Skip one token; if it opens a bracket, skip through its match."""
        t = self.cur
        if t.kind is not TokenKind.OPERATOR or t.text not in _OPENERS:
            self.advance()
            return
        stack = [_OPENERS[t.text]]
        self.advance()
        while stack and not self.at_eof():
            t = self.advance()
            if t.kind is TokenKind.OPERATOR:
                if t.text in _OPENERS:
                    stack.append(_OPENERS[t.text])
                elif t.text in _CLOSERS:
                    while stack and stack[-1] != t.text:
                        stack.pop()
                    if stack:
                        stack.pop()

    def skip_semis(self) -> None:
        while self.is_op(";"):
            self.advance()

    # -- annotations, modifiers, types ----------------------------------

    def skip_annotations(self) -> None:
        while self.is_op("@") and not self.at_eof():
            self.advance()
            if self.is_op("["):
                self.skip_balanced()
                continue
            # @file:Target, @get:Foo
            if self.cur.kind in (TokenKind.IDENTIFIER, TokenKind.KEYWORD) and self.is_op(":", 1):
                self.advance()
                self.advance()
            if self.is_op("["):
                self.skip_balanced()
                continue
            while self.cur.kind in (TokenKind.IDENTIFIER, TokenKind.KEYWORD):
                self.advance()
                if self.is_op(".") and self.peek(1).kind is TokenKind.IDENTIFIER:
                    self.advance()
                    continue
                break
            if self.is_op("<"):
                end = self.match_type_args(self.pos)
                if end is not None:
                    self.pos = end
            if self.is_op("(") and not self.cur.nl:
                self.skip_balanced()

    def parse_modifiers(self) -> list[SyntaxNode]:
        mods: list[SyntaxNode] = []
        while True:
            if self.is_op("@"):
                self.skip_annotations()
                continue
            t = self.cur
            if t.kind is TokenKind.IDENTIFIER and t.text in MODIFIERS:
                nxt = self.peek(1)
                is_mod = (
                    (nxt.kind is TokenKind.IDENTIFIER and (nxt.text in MODIFIERS or nxt.text == "constructor"))
                    or (nxt.kind is TokenKind.KEYWORD and nxt.text in _DECL_KEYWORDS)
                    or (nxt.kind is TokenKind.OPERATOR and nxt.text == "@")
                    or (t.text in ("private", "public", "internal", "protected", "override", "open", "abstract", "final")
                        and nxt.kind is TokenKind.IDENTIFIER and nxt.text in ("get", "set"))
                )
                if is_mod:
                    mods.append(self.close(self.node(NodeKind.MODIFIER, text=t.text)))
                    self.advance()
                    continue
            break
        return mods

    def match_type_args(self, i: int) -> int | None:
        """If ``toks[i]`` opens a plausible type-argument list, return the index after ``>``."""
        toks = self.toks
        if i >= len(toks) or toks[i].text != "<":
            return None
        depth = 0
        j = i
        allowed_ops = {"<", ">", ",", ".", "?", "*", "(", ")", "->", ":", "@", "&"}
        while j < len(toks):
            t = toks[j]
            if t.kind is TokenKind.OPERATOR:
                if t.text not in allowed_ops:
                    return None
                if t.text == "<":
                    depth += 1
                elif t.text == ">":
                    depth -= 1
                    if depth == 0:
                        return j + 1
            elif t.kind is TokenKind.KEYWORD:
                if t.text not in ("in", "out", "suspend"):
                    return None
            elif t.kind is not TokenKind.IDENTIFIER:
                return None
            j += 1
            if j - i > 200:
                return None
        return None

    def skip_type(self, arrow: bool = True) -> None:
        """Skip a type reference (nullable, generic, function, receiver types)."""
        self.skip_annotations()
        while self.is_ident() and self.cur.text in ("suspend",) and (self.is_op("(", 1) or self.peek(1).kind is TokenKind.IDENTIFIER):
            self.advance()
        if self.is_op("("):
            self.skip_balanced()
            if self.is_op(".") and self.is_op("(", 1):
                self.advance()
                self.skip_balanced()
        elif self.cur.kind in (TokenKind.IDENTIFIER, TokenKind.KEYWORD) or self.is_op("*"):
            if self.cur.kind is TokenKind.KEYWORD and self.cur.text not in ("in", "out"):
                return
            while True:
                self.advance()
                if self.is_op("<") and not self.newline_before():
                    end = self.match_type_args(self.pos)
                    if end is not None:
                        self.pos = end
                while self.is_op("?") and not self.newline_before():
                    self.advance()
                if (self.is_op(".") or self.is_op("?.")) and not self.newline_before():
                    if self.peek(1).kind is TokenKind.IDENTIFIER:
                        self.advance()
                        continue
                    if self.is_op("(", 1):
                        self.advance()
                        self.skip_balanced()
                break
        else:
            return
        while self.is_op("?") and not self.newline_before():
            self.advance()
        if arrow and self.is_op("->"):
            self.advance()
            self.skip_type()
        if self.is_op("&") and not self.newline_before():
            self.advance()
            self.skip_type()

    # -- statements ------------------------------------------------------

    def parse_file(self) -> SyntaxNode:
        root = SyntaxNode(NodeKind.FILE, 1, 1)
        self.parse_statements(root, ctx="top", closing=False)
        root.end_line = max((t.end_line for t in self.toks[-1:]), default=1)
        return root

    def parse_statements(self, parent: SyntaxNode, ctx: str, closing: bool) -> None:
        while not self.at_eof():
            self.skip_semis()
            if self.at_eof():
                break
            if self.is_op("}"):
                if closing:
                    return
                self.recover(parent)
                continue
            if self.cur.kind is TokenKind.OPERATOR and self.cur.text in (")", "]"):
                self.recover(parent)
                continue
            start = self.pos
            stmt = self.parse_statement(ctx)
            if stmt is not None:
                parent.children.append(stmt)
            if self.pos == start:
                self.recover(parent)

    def parse_block(self, ctx: str = "local") -> SyntaxNode:
        block = self.node(NodeKind.BLOCK)
        self.advance()  # {
        self.nl_sensitive.append(True)
        self.parse_statements(block, ctx=ctx, closing=True)
        self.nl_sensitive.pop()
        if self.is_op("}"):
            self.advance()
        return self.close(block)

    def parse_statement(self, ctx: str) -> SyntaxNode | None:
        if self.depth > _MAX_DEPTH:
            self.recover(None)
            return None
        self.depth += 1
        try:
            return self._statement(ctx)
        finally:
            self.depth -= 1

    def _statement(self, ctx: str) -> SyntaxNode | None:
        t = self.cur
        if t.kind is TokenKind.KEYWORD and t.text in ("package", "import") or (
            t.kind is TokenKind.IDENTIFIER and t.text == "import" and self.peek(1).kind is TokenKind.IDENTIFIER and ctx == "top"
        ):
            node = self.node(NodeKind.OTHER, role=t.text)
            line = t.line
            self.advance()
            while not self.at_eof() and self.cur.line == line and not self.is_op(";"):
                self.advance()
            return self.close(node)

        # label definition: name@ statement
        if t.kind is TokenKind.IDENTIFIER and self.is_op("@", 1) and self.adjacent(1) and not self.adjacent(2):
            self.advance()
            self.advance()
            return self.parse_statement(ctx)

        start_line = t.line
        mods = self.parse_modifiers()
        t = self.cur
        if mods:
            start_line = mods[0].start_line
        elif self.pos > 0 and t.line != start_line:
            start_line = t.line

        if t.kind is TokenKind.KEYWORD:
            if t.text in ("class", "interface"):
                return self.parse_class(mods, start_line)
            if t.text == "fun":
                if self.is_kw("interface", 1):
                    return self.parse_class(mods, start_line)
                return self.parse_function(mods, start_line, ctx)
            if t.text in ("val", "var"):
                return self.parse_property(mods, start_line, ctx)
            if t.text == "object" and (self.peek(1).kind is TokenKind.IDENTIFIER or "companion" in {m.attrs["text"] for m in mods}):
                return self.parse_object(mods, start_line)
            if t.text == "typealias":
                return self.parse_typealias(mods, start_line)
            if t.text == "for":
                return self.parse_for()
            if t.text == "while":
                return self.parse_while()
            if t.text == "do":
                return self.parse_do_while()
        elif t.kind is TokenKind.IDENTIFIER:
            if t.text == "constructor" and self.is_op("(", 1) and ctx == "class":
                return self.parse_secondary_constructor(mods, start_line)
            if t.text == "init" and self.is_op("{", 1) and ctx == "class":
                node = self.node(NodeKind.OTHER, role="init")
                self.advance()
                node.children.append(self.parse_block())
                return self.close(node)
            if t.text == "companion" and self.is_kw("object", 1):
                mods.append(self.close(self.node(NodeKind.MODIFIER, text="companion")))
                self.advance()
                return self.parse_object(mods, start_line)
        if mods:
            # dangling modifiers: keep them visible as an Other container
            holder = self.node(NodeKind.OTHER, start_line, role="modifiers")
            holder.children.extend(mods)
            expr = self.parse_expression_statement()
            if expr is not None:
                holder.children.append(expr)
            return self.close(holder)
        return self.parse_expression_statement()

    def parse_expression_statement(self) -> SyntaxNode | None:
        left = self.parse_expression()
        if left is None:
            return None
        t = self.cur
        if t.kind is TokenKind.OPERATOR and t.text in _ASSIGN_OPS and not self.newline_before():
            op = self.node(NodeKind.BINARY_OP, left.start_line, op=t.text, line=t.line)
            self.advance()
            op.children.append(left)
            right = self.parse_expression()
            if right is not None:
                op.children.append(right)
            return self.close(op)
        return left

    def parse_control_body(self) -> SyntaxNode | None:
        if self.is_op("{"):
            return self.parse_block()
        if self.is_op(";"):
            return None
        return self.parse_statement("local")

    # -- declarations ----------------------------------------------------

    def parse_type_params(self) -> None:
        if self.is_op("<"):
            end = self.match_type_args(self.pos)
            if end is not None:
                self.pos = end
            else:
                self.skip_angle_fallback()

    def skip_angle_fallback(self) -> None:
        depth = 0
        while not self.at_eof():
            t = self.advance()
            if t.text == "<":
                depth += 1
            elif t.text == ">":
                depth -= 1
                if depth <= 0:
                    return
            elif t.text in ("{", "}", "(", ")", ";", "="):
                self.pos -= 1
                return

    def parse_where(self) -> None:
        if self.is_ident("where"):
            self.advance()
            while not self.at_eof():
                self.skip_annotations()
                if self.cur.kind is not TokenKind.IDENTIFIER:
                    break
                self.advance()
                if self.is_op(":"):
                    self.advance()
                    self.skip_type()
                if self.is_op(","):
                    self.advance()
                    continue
                break

    def parse_params(self, owner: SyntaxNode, ctor: bool) -> None:
        """Parse ``(p: T = d, ...)`` appending parameter nodes to ``owner``."""
        self.advance()  # (
        self.nl_sensitive.append(False)
        while not self.at_eof() and not self.is_op(")"):
            if self.is_op(","):
                self.advance()
                continue
            if self.cur.kind is TokenKind.OPERATOR and self.cur.text in ("}", "{"):
                break
            start = self.pos
            line = self.cur.line
            mods = self.parse_modifiers()
            binding = None
            if self.is_kw("val") or self.is_kw("var"):
                binding = self.cur.text
                self.advance()
            if self.cur.kind is TokenKind.IDENTIFIER or self.is_kw("in") is False and self.cur.kind is TokenKind.KEYWORD and self.cur.text not in ("val", "var"):
                name = self.cur.text
                name_line = self.cur.line
                self.advance()
                kind = NodeKind.PROPERTY_DECL if (ctor and binding) else NodeKind.OTHER
                param = self.node(kind, line if mods else name_line, role="param", name=name, has_default=False)
                param.children.extend(mods)
                if self.is_op(":"):
                    self.advance()
                    self.skip_type()
                    param.attrs["has_type_annotation"] = True
                if self.is_op("="):
                    self.advance()
                    param.attrs["has_default"] = True
                    expr = self.parse_expression()
                    if expr is not None:
                        param.children.append(expr)
                owner.children.append(self.close(param))
            if self.pos == start:
                self.recover(owner)
            elif not (self.is_op(",") or self.is_op(")")):
                # junk inside the parameter list
                self.recover(owner)
        self.nl_sensitive.pop()
        if self.is_op(")"):
            self.advance()

    def parse_function(self, mods: list[SyntaxNode], start_line: int, ctx: str) -> SyntaxNode:
        fun_tok = self.advance()
        node = self.node(NodeKind.FUNCTION_DECL, start_line, name=None, receiver=None, line=start_line)
        node.children.extend(mods)
        node.attrs["fun_line"] = fun_tok.line
        self.parse_type_params()
        hdr_start = self.pos
        while not self.at_eof():
            if self.is_op("("):
                j = self._matching(self.pos)
                after = self.toks[j] if j < len(self.toks) else _EOF
                if j > self.pos and after.kind is TokenKind.OPERATOR and after.text in (".", "?."):
                    self.pos = j
                    continue
                break
            if self.is_op("<"):
                end = self.match_type_args(self.pos)
                if end is None:
                    break
                self.pos = end
                continue
            t = self.cur
            if t.kind is TokenKind.IDENTIFIER or (t.kind is TokenKind.OPERATOR and t.text in (".", "?.", "?")):
                if self.pos > hdr_start and (t.nl or (
                        t.kind is TokenKind.IDENTIFIER and self.toks[self.pos - 1].kind is TokenKind.IDENTIFIER)):
                    break
                self.advance()
                continue
            break
        header = self.toks[hdr_start:self.pos]
        if header:
            last = header[-1]
            if last.kind is TokenKind.IDENTIFIER:
                node.attrs["name"] = last.text
                node.attrs["name_line"] = last.line
                if len(header) >= 2 and header[-2].text in (".", "?."):
                    node.attrs["receiver"] = "".join(h.text for h in header[:-2]) + ("?" if header[-2].text == "?." else "")
            elif last.text in (".", "?."):
                node.attrs["receiver"] = "".join(h.text for h in header[:-1])
        self.parse_type_params()
        if self.is_op("("):
            self.parse_params(node, ctor=False)
        if self.is_op(":"):
            self.advance()
            self.skip_type()
        self.parse_where()
        if self.is_op("{"):
            body = self.parse_block()
            body.attrs["role"] = "function-body"
            node.children.append(body)
        elif self.is_op("="):
            self.advance()
            expr = self.parse_expression()
            if expr is not None:
                wrapper = self.node(NodeKind.OTHER, expr.start_line, role="function-body")
                wrapper.children.append(expr)
                node.children.append(self.close(wrapper))
        return self.close(node)

    def _matching(self, i: int) -> int:
        """Index just past the token that closes the opener at ``i``."""
        saved = self.pos
        self.pos = i
        self.skip_balanced()
        end = self.pos
        self.pos = saved
        return end

    def parse_property(self, mods: list[SyntaxNode], start_line: int, ctx: str) -> SyntaxNode:
        kw = self.advance()
        self.parse_type_params()
        if self.is_op("("):
            return self.parse_destructuring(mods, start_line, kw.line)
        var = self.node(NodeKind.VARIABLE_DECL, kw.line, binding=kw.text, name=None, receiver=None,
                        has_initializer=False, has_type_annotation=False, delegated=False)
        hdr_start = self.pos
        while not self.at_eof():
            t = self.cur
            if self.is_op("<"):
                end = self.match_type_args(self.pos)
                if end is None:
                    break
                self.pos = end
                continue
            if self.is_op("(") and self.pos > hdr_start:
                j = self._matching(self.pos)
                after = self.toks[j] if j < len(self.toks) else _EOF
                if after.text in (".", "?."):
                    self.pos = j
                    continue
                break
            if t.kind is TokenKind.IDENTIFIER or (t.kind is TokenKind.OPERATOR and t.text in (".", "?.", "?")) or (
                t.kind is TokenKind.OPERATOR and t.text == "(" and self.pos == hdr_start
            ):
                if self.pos > hdr_start and (t.nl or (
                        t.kind is TokenKind.IDENTIFIER and self.toks[self.pos - 1].kind is TokenKind.IDENTIFIER)):
                    break
                if t.text == "(":
                    self.pos = self._matching(self.pos)
                    continue
                self.advance()
                continue
            break
        header = self.toks[hdr_start:self.pos]
        if header and header[-1].kind is TokenKind.IDENTIFIER:
            var.attrs["name"] = header[-1].text
            if len(header) >= 2 and header[-2].text in (".", "?."):
                var.attrs["receiver"] = "".join(h.text for h in header[:-2])
        if self.is_op(":") and not self.newline_before():
            self.advance()
            self.skip_type()
            var.attrs["has_type_annotation"] = True
        self.parse_where()
        if self.is_op("=") and not self.newline_before():
            self.advance()
            var.attrs["has_initializer"] = True
            expr = self.parse_expression()
            if expr is not None:
                var.children.append(expr)
        elif self.is_ident("by") and not self.newline_before():
            var.attrs["delegated"] = True
            var.attrs["by_line"] = self.cur.line
            self.advance()
            expr = self.parse_expression()
            if expr is not None:
                var.children.append(expr)
        if ctx in ("top", "class"):
            self.parse_accessors(var)
        self.close(var)
        if ctx == "local" and not var.attrs["delegated"]:
            var.children[:0] = mods
            return var
        prop = self.node(NodeKind.PROPERTY_DECL, start_line, name=var.attrs["name"], delegated=var.attrs["delegated"],
                         local=ctx == "local", line=kw.line)
        prop.children.extend(mods)
        prop.children.append(var)
        return self.close(prop)

    def parse_accessors(self, var: SyntaxNode) -> None:
        for _ in range(2):
            save = self.pos
            self.skip_semis()
            mods = self.parse_modifiers()
            if self.cur.kind is TokenKind.IDENTIFIER and self.cur.text in ("get", "set"):
                nxt = self.peek(1)
                if nxt.text in ("(", "=", "{", "}", ";") or nxt.nl or nxt is _EOF or mods:
                    acc = self.node(NodeKind.OTHER, role="accessor", name=self.cur.text)
                    acc.children.extend(mods)
                    self.advance()
                    if self.is_op("("):
                        self.parse_params(acc, ctor=False)
                    if self.is_op(":"):
                        self.advance()
                        self.skip_type()
                    if self.is_op("{"):
                        acc.children.append(self.parse_block())
                    elif self.is_op("="):
                        self.advance()
                        expr = self.parse_expression()
                        if expr is not None:
                            acc.children.append(expr)
                    var.children.append(self.close(acc))
                    continue
            self.pos = save
            return

    def parse_destructuring(self, mods: list[SyntaxNode], start_line: int, line: int) -> SyntaxNode:
        node = self.node(NodeKind.DESTRUCTURING_DECL, start_line, components=[], line=line)
        node.children.extend(mods)
        self.parse_destructuring_components(node)
        if self.is_op(":"):
            self.advance()
            self.skip_type()
        if self.is_op("="):
            self.advance()
            expr = self.parse_expression()
            if expr is not None:
                node.children.append(expr)
        return self.close(node)

    def parse_destructuring_components(self, node: SyntaxNode) -> None:
        self.advance()  # (
        self.nl_sensitive.append(False)
        while not self.at_eof() and not self.is_op(")"):
            t = self.cur
            if t.kind is TokenKind.IDENTIFIER:
                node.attrs["components"].append(t.text)
                self.advance()
                if self.is_op(":"):
                    self.advance()
                    self.skip_type()
            elif self.is_op(","):
                self.advance()
            elif self.is_op("@"):
                self.skip_annotations()
            else:
                self.recover(None)
        self.nl_sensitive.pop()
        if self.is_op(")"):
            self.advance()

    def parse_class(self, mods: list[SyntaxNode], start_line: int) -> SyntaxNode:
        if self.is_kw("fun"):
            self.advance()
        kw = self.advance()
        node = self.node(NodeKind.CLASS_DECL, start_line, name=None, interface=kw.text == "interface", line=start_line)
        node.children.extend(mods)
        if self.cur.kind is TokenKind.IDENTIFIER:
            node.attrs["name"] = self.advance().text
        self.parse_type_params()
        # primary constructor
        save = self.pos
        ctor_mods = self.parse_modifiers() if not self.newline_before() else []
        if self.is_ident("constructor") and (self.is_op("(", 1)):
            self.advance()
        if self.is_op("(") and (not self.newline_before() or ctor_mods):
            ctor = self.node(NodeKind.CONSTRUCTOR_DECL, primary=True)
            ctor.children.extend(ctor_mods)
            self.parse_params(ctor, ctor=True)
            node.children.append(self.close(ctor))
        else:
            self.pos = save
        self.parse_supertypes(node)
        self.parse_where()
        if self.is_op("{"):
            enum = "enum" in {m.attrs["text"] for m in mods}
            node.children.append(self.parse_class_body(enum))
        return self.close(node)

    def parse_supertypes(self, owner: SyntaxNode) -> None:
        if not self.is_op(":"):
            return
        self.advance()
        while not self.at_eof():
            entry = self.node(NodeKind.SUPER_TYPE_ENTRY, delegated=False)
            start = self.pos
            self.skip_type()
            if self.pos == start:
                break
            entry.attrs["type"] = "".join(t.text for t in self.toks[start:self.pos])
            if self.is_op("(") and not self.newline_before():
                self.parse_call_args(entry)
            if self.is_ident("by") and not self.newline_before():
                entry.attrs["delegated"] = True
                self.advance()
                expr = self.parse_expression(no_trailing_lambda=True)
                if expr is not None:
                    entry.children.append(expr)
            owner.children.append(self.close(entry))
            if self.is_op(","):
                self.advance()
                continue
            break

    def parse_class_body(self, enum: bool = False) -> SyntaxNode:
        block = self.node(NodeKind.BLOCK, role="class-body")
        self.advance()  # {
        self.nl_sensitive.append(True)
        if enum:
            self.parse_enum_entries(block)
        self.parse_statements(block, ctx="class", closing=True)
        self.nl_sensitive.pop()
        if self.is_op("}"):
            self.advance()
        return self.close(block)

    def parse_enum_entries(self, block: SyntaxNode) -> None:
        while not self.at_eof():
            self.skip_annotations()
            if self.is_op(";"):
                self.advance()
                return
            if self.is_op("}"):
                return
            if self.cur.kind is not TokenKind.IDENTIFIER or (self.cur.text in MODIFIERS and not self.is_op(",", 1) and not self.is_op("(", 1)):
                return
            if self.is_op(":", 1) or self.is_op("=", 1):
                return
            entry = self.node(NodeKind.OTHER, role="enum-entry", name=self.cur.text)
            self.advance()
            if self.is_op("("):
                self.parse_call_args(entry)
            if self.is_op("{"):
                entry.children.append(self.parse_class_body())
            block.children.append(self.close(entry))
            if self.is_op(","):
                self.advance()
                continue
            if self.is_op(";"):
                self.advance()
            return

    def parse_object(self, mods: list[SyntaxNode], start_line: int, expression: bool = False) -> SyntaxNode:
        self.advance()  # object
        companion = "companion" in {m.attrs["text"] for m in mods}
        kind = NodeKind.COMPANION_OBJECT_DECL if companion else NodeKind.OBJECT_DECL
        node = self.node(kind, start_line, name=None, literal=expression, line=start_line)
        node.children.extend(mods)
        if not expression and self.cur.kind is TokenKind.IDENTIFIER and not self.newline_before():
            node.attrs["name"] = self.advance().text
        self.parse_type_params()
        self.parse_supertypes(node)
        if self.is_op("{"):
            node.children.append(self.parse_class_body())
        return self.close(node)

    def parse_typealias(self, mods: list[SyntaxNode], start_line: int) -> SyntaxNode:
        self.advance()
        node = self.node(NodeKind.TYPE_ALIAS_DECL, start_line, name=None, line=start_line)
        node.children.extend(mods)
        if self.cur.kind is TokenKind.IDENTIFIER:
            node.attrs["name"] = self.advance().text
        self.parse_type_params()
        if self.is_op("="):
            self.advance()
            self.skip_type()
        return self.close(node)

    def parse_secondary_constructor(self, mods: list[SyntaxNode], start_line: int) -> SyntaxNode:
        self.advance()  # constructor
        node = self.node(NodeKind.CONSTRUCTOR_DECL, start_line, primary=False, line=start_line)
        node.children.extend(mods)
        self.parse_params(node, ctor=False)
        if self.is_op(":"):
            self.advance()
            deleg = self.node(NodeKind.OTHER, role="delegation-call")
            if self.cur.kind is TokenKind.KEYWORD and self.cur.text in ("this", "super"):
                self.advance()
            if self.is_op("("):
                self.parse_call_args(deleg)
            node.children.append(self.close(deleg))
        if self.is_op("{"):
            node.children.append(self.parse_block())
        return self.close(node)

    # -- loops -----------------------------------------------------------

    def parse_for(self) -> SyntaxNode:
        node = self.node(NodeKind.OTHER, role="for")
        self.advance()
        if self.is_op("("):
            self.advance()
            self.nl_sensitive.append(False)
            self.skip_annotations()
            if self.is_kw("val") or self.is_kw("var"):
                self.advance()
            if self.is_op("("):
                d = self.node(NodeKind.DESTRUCTURING_DECL, components=[])
                self.parse_destructuring_components(d)
                node.children.append(self.close(d))
            elif self.cur.kind is TokenKind.IDENTIFIER:
                self.advance()
            if self.is_op(":"):
                self.advance()
                self.skip_type()
            if self.is_kw("in"):
                self.advance()
            expr = self.parse_expression()
            if expr is not None:
                node.children.append(expr)
            while not self.at_eof() and not self.is_op(")"):
                self.recover(node)
                if self.is_op("{") or self.is_op("}"):
                    break
            self.nl_sensitive.pop()
            if self.is_op(")"):
                self.advance()
        body = self.parse_control_body()
        if body is not None:
            node.children.append(body)
        return self.close(node)

    def parse_paren_condition(self, owner: SyntaxNode, role: str = "cond") -> None:
        if not self.is_op("("):
            return
        cond = self.node(NodeKind.OTHER, role=role)
        self.advance()
        self.nl_sensitive.append(False)
        expr = self.parse_expression()
        if expr is not None:
            cond.children.append(expr)
        while not self.at_eof() and not self.is_op(")"):
            if self.is_op("{") or self.is_op("}"):
                break
            self.recover(cond)
        self.nl_sensitive.pop()
        if self.is_op(")"):
            self.advance()
        owner.children.append(self.close(cond))

    def parse_while(self) -> SyntaxNode:
        node = self.node(NodeKind.OTHER, role="while")
        self.advance()
        self.parse_paren_condition(node)
        body = self.parse_control_body()
        if body is not None:
            node.children.append(body)
        return self.close(node)

    def parse_do_while(self) -> SyntaxNode:
        node = self.node(NodeKind.OTHER, role="do")
        self.advance()
        body = self.parse_control_body()
        if body is not None:
            node.children.append(body)
        if self.is_kw("while"):
            self.advance()
            self.parse_paren_condition(node)
        return self.close(node)

    # -- expressions -----------------------------------------------------

    def parse_expression(self, no_trailing_lambda: bool = False) -> SyntaxNode | None:
        if self.depth > _MAX_DEPTH:
            if not self.at_eof() and not (self.cur.kind is TokenKind.OPERATOR and self.cur.text in _CLOSERS):
                line = self.cur.line
                self.warnings += 1
                self.skip_balanced()
                return self.close(self.node(NodeKind.OTHER, line, role="too-deep"))
            return None
        self.depth += 1
        saved = getattr(self, "_no_lambda", False)
        self._no_lambda = no_trailing_lambda
        try:
            return self.parse_binary(0)
        finally:
            self._no_lambda = saved
            self.depth -= 1

    def _binary_op_here(self) -> tuple[str, int, int] | None:
        """Return (op, precedence, token count) for a binary operator at the cursor."""
        t = self.cur
        if t is _EOF:
            return None
        nl = self.newline_before()
        if t.kind is TokenKind.OPERATOR:
            if t.text == "!" and (self.is_kw("in", 1) or self.is_kw("is", 1)) and self.adjacent(1):
                if nl:
                    return None
                return "!" + self.peek(1).text, 5, 2
            prec = _BINARY_PREC.get(t.text)
            if prec is None:
                return None
            if nl and t.text not in _NL_CONTINUES:
                return None
            return t.text, prec, 1
        if t.kind is TokenKind.KEYWORD:
            if t.text == "as":
                if self.is_op("?", 1) and self.adjacent(1):
                    return "as?", 11, 2
                return "as", 11, 1
            if t.text in ("in", "is") and not nl:
                return t.text, 5, 1
            return None
        if t.kind is TokenKind.IDENTIFIER and not nl and t.text not in _NOT_INFIX:
            nxt = self.peek(1)
            if nxt is _EOF or nxt.nl and self.nl_sensitive[-1]:
                return None
            if self._can_start_expression(nxt):
                return t.text, _INFIX_PREC, 1
        return None

    @staticmethod
    def _can_start_expression(t: _Sig) -> bool:
        if t.kind in (TokenKind.IDENTIFIER, TokenKind.NUMBER, TokenKind.STRING, TokenKind.OTHER):
            return True
        if t.kind is TokenKind.KEYWORD:
            return t.text in ("this", "super", "null", "true", "false", "if", "when", "try", "object", "fun")
        return t.text in ("(", "-", "+", "!", "::", "{", "[")

    def parse_binary(self, min_prec: int) -> SyntaxNode | None:
        left = self.parse_prefix()
        if left is None:
            return None
        while True:
            found = self._binary_op_here()
            if found is None:
                break
            op, prec, width = found
            if prec <= min_prec and not (prec == min_prec == 0):
                if prec <= min_prec:
                    break
            op_tok = self.cur
            node = self.node(NodeKind.BINARY_OP, left.start_line, op=op, line=op_tok.line)
            for _ in range(width):
                self.advance()
            node.children.append(left)
            if op in ("is", "!is"):
                node.attrs["lhs_name"] = left.attrs.get("ident")
                self.skip_type(arrow=False)
            elif op in ("as", "as?"):
                self.skip_type(arrow=False)
            else:
                right = self.parse_binary(prec)
                if right is not None:
                    node.children.append(right)
            left = self.close(node)
        return left

    def parse_prefix(self) -> SyntaxNode | None:
        prefixes: list[SyntaxNode] = []
        while True:
            t = self.cur
            if t.kind is TokenKind.OPERATOR and t.text in ("-", "+", "!", "++", "--", "*"):
                prefixes.append(self.node(NodeKind.OTHER, role="prefix", op=t.text))
                self.advance()
            elif t.kind is TokenKind.OPERATOR and t.text == "@":
                self.skip_annotations()
            elif t.kind is TokenKind.IDENTIFIER and self.is_op("@", 1) and self.adjacent(1):
                # label: lbl@ { ... }
                self.advance()
                self.advance()
            else:
                break
        expr = self.parse_postfix()
        for node in reversed(prefixes):
            if expr is not None:
                node.children.append(expr)
            expr = self.close(node)
        return expr

    def parse_postfix(self) -> SyntaxNode | None:
        expr = self.parse_primary()
        if expr is None:
            return None
        while not self.at_eof():
            t = self.cur
            nl = self.newline_before()
            if t.kind is TokenKind.OPERATOR:
                if t.text in (".", "?."):
                    nxt = self.peek(1)
                    if nxt.kind not in (TokenKind.IDENTIFIER, TokenKind.KEYWORD):
                        break
                    access = self.node(NodeKind.BINARY_OP, expr.start_line, op=t.text, line=t.line,
                                       receiver_name=expr.attrs.get("ident"), member=nxt.text)
                    access.children.append(expr)
                    self.advance()
                    self.advance()
                    expr = self.close(access)
                    self.parse_type_args_for_call()
                    continue
                if t.text == "::":
                    ref = self.node(NodeKind.OTHER, expr.start_line, role="callable-ref")
                    ref.children.append(expr)
                    self.advance()
                    if self.cur.kind in (TokenKind.IDENTIFIER, TokenKind.KEYWORD):
                        self.advance()
                    expr = self.close(ref)
                    continue
                if nl:
                    break
                if t.text == "!!":
                    op = self.node(NodeKind.UNARY_POSTFIX_OP, expr.start_line, op="!!", line=t.line)
                    op.children.append(expr)
                    self.advance()
                    expr = self.close(op)
                    continue
                if t.text in ("++", "--"):
                    op = self.node(NodeKind.UNARY_POSTFIX_OP, expr.start_line, op=t.text, line=t.line)
                    op.children.append(expr)
                    self.advance()
                    expr = self.close(op)
                    continue
                if t.text == "(" or t.text == "<" and self.parse_type_args_for_call(peek_only=True):
                    if t.text == "<":
                        self.parse_type_args_for_call()
                    expr = self.parse_call(expr)
                    continue
                if t.text == "{" and self._callable(expr) and not self._no_lambda:
                    expr = self.parse_call(expr)
                    continue
                if t.text == "[":
                    idx = self.node(NodeKind.OTHER, expr.start_line, role="index")
                    idx.children.append(expr)
                    self.parse_call_args(idx, closer="]")
                    expr = self.close(idx)
                    continue
            break
        return expr

    @staticmethod
    def _callable(expr: SyntaxNode) -> bool:
        if "ident" in expr.attrs and expr.attrs.get("role") == "ident":
            return True
        if expr.kind is NodeKind.BINARY_OP and expr.attrs.get("op") in (".", "?."):
            return True
        if expr.kind is NodeKind.CALL_EXPR:
            return not expr.attrs.get("has_trailing_lambda", False)
        return False

    def parse_type_args_for_call(self, peek_only: bool = False) -> bool:
        if not self.is_op("<") or self.newline_before():
            return False
        end = self.match_type_args(self.pos)
        if end is None:
            return False
        after = self.toks[end] if end < len(self.toks) else _EOF
        ok = after.text in ("(", "::") or (after.text == "{" and not after.nl)
        if ok and not peek_only:
            self.pos = end
        return ok

    def parse_call(self, callee: SyntaxNode) -> SyntaxNode:
        name = callee.attrs.get("member") if callee.kind is NodeKind.BINARY_OP else callee.attrs.get("ident")
        if callee.kind is NodeKind.CALL_EXPR and self.is_op("{"):
            # trailing lambda after an argument list: fold into the same call
            arg = self.node(NodeKind.CALL_ARGUMENT, named=False, lambda_arg=True)
            arg.children.append(self.parse_lambda())
            callee.children.append(self.close(arg))
            callee.attrs["has_trailing_lambda"] = True
            return self.close(callee)
        line = callee.attrs.get("name_line", self.toks[self.pos - 1].line if callee.kind is NodeKind.BINARY_OP else callee.start_line)
        call = self.node(NodeKind.CALL_EXPR, callee.start_line, name=name, line=line)
        if callee.kind is NodeKind.BINARY_OP:
            call.attrs["line"] = callee.attrs.get("member_line", callee.end_line)
        call.children.append(callee)
        if self.is_op("("):
            self.parse_call_args(call)
        if self.is_op("{") and not self.newline_before() and not self._no_lambda:
            arg = self.node(NodeKind.CALL_ARGUMENT, named=False, lambda_arg=True)
            arg.children.append(self.parse_lambda())
            call.children.append(self.close(arg))
            call.attrs["has_trailing_lambda"] = True
        return self.close(call)

    def parse_call_args(self, owner: SyntaxNode, closer: str = ")") -> None:
        self.advance()  # ( or [
        self.nl_sensitive.append(False)
        saved_no_lambda = getattr(self, "_no_lambda", False)
        self._no_lambda = False
        while not self.at_eof() and not self.is_op(closer):
            if self.is_op(","):
                self.advance()
                continue
            if self.cur.kind is TokenKind.OPERATOR and self.cur.text in _CLOSERS:
                break
            start = self.pos
            arg = self.node(NodeKind.CALL_ARGUMENT, named=False, lambda_arg=False)
            self.skip_annotations()
            if self.cur.kind is TokenKind.IDENTIFIER and self.is_op("=", 1) and closer == ")":
                arg.attrs["named"] = True
                arg.attrs["name"] = self.cur.text
                self.advance()
                self.advance()
            expr = self.parse_expression()
            if expr is not None:
                arg.children.append(expr)
                if expr.kind is NodeKind.LAMBDA_EXPR:
                    arg.attrs["lambda_arg"] = True
            if closer == ")":
                owner.children.append(self.close(arg))
            elif expr is not None:
                owner.children.append(expr)
            if self.pos == start:
                self.recover(owner)
            elif not (self.is_op(",") or self.is_op(closer)):
                self.recover(owner)
        self._no_lambda = saved_no_lambda
        self.nl_sensitive.pop()
        if self.is_op(closer):
            self.advance()

    def parse_primary(self) -> SyntaxNode | None:
        t = self.cur
        if t is _EOF:
            return None
        if t.kind is TokenKind.STRING:
            return self.parse_string()
        if t.kind is TokenKind.NUMBER or (t.kind is TokenKind.OTHER and t.text.startswith("'")):
            self.advance()
            return self.close(self.node(NodeKind.OTHER, t.line, role="literal"))
        if t.kind is TokenKind.IDENTIFIER:
            if t.text == "suspend" and self.is_op("{", 1) and not self.peek(1).nl:
                self.advance()
                lam = self.parse_lambda()
                lam.start_line = t.line
                lam.attrs["suspend"] = True
                lam.attrs["line"] = t.line
                return lam
            self.advance()
            node = self.node(NodeKind.OTHER, t.line, role="ident", ident=t.text)
            return self.close(node)
        if t.kind is TokenKind.KEYWORD:
            kw = t.text
            if kw in ("this", "super", "null", "true", "false"):
                node = self.node(NodeKind.OTHER, role="keyword", keyword=kw)
                self.advance()
                if kw == "super" and self.is_op("<"):
                    end = self.match_type_args(self.pos)
                    if end is not None:
                        self.pos = end
                if self.is_op("@") and self.adjacent(1) and self.peek(1).kind is TokenKind.IDENTIFIER:
                    self.advance()
                    self.advance()
                return self.close(node)
            if kw == "if":
                return self.parse_if()
            if kw == "when":
                return self.parse_when()
            if kw == "try":
                return self.parse_try()
            if kw == "object":
                return self.parse_object([], t.line, expression=True)
            if kw == "fun":
                return self.parse_function([], t.line, "local")
            if kw in ("return", "throw", "break", "continue"):
                node = self.node(NodeKind.OTHER, role=kw)
                self.advance()
                if self.is_op("@") and self.adjacent(1):
                    self.advance()
                    if self.cur.kind is TokenKind.IDENTIFIER:
                        self.advance()
                if kw in ("return", "throw") and not self.newline_before() and self._can_start_expression(self.cur) \
                        and not (self.cur.kind is TokenKind.OPERATOR and self.cur.text in _CLOSERS):
                    expr = self.parse_expression()
                    if expr is not None:
                        node.children.append(expr)
                return self.close(node)
            if kw in ("for", "while", "do"):
                return self.parse_statement("local")
            if kw in ("val", "var", "class", "interface", "typealias"):
                return self.parse_statement("local")
            return None
        if t.kind is TokenKind.OPERATOR:
            if t.text == "(":
                node = self.node(NodeKind.OTHER, role="paren")
                self.advance()
                self.nl_sensitive.append(False)
                saved = getattr(self, "_no_lambda", False)
                self._no_lambda = False
                inner = self.parse_expression()
                self._no_lambda = saved
                if inner is not None:
                    node.children.append(inner)
                while not self.at_eof() and not self.is_op(")"):
                    if self.cur.kind is TokenKind.OPERATOR and self.cur.text in ("}", "]", "{"):
                        break
                    self.recover(node)
                self.nl_sensitive.pop()
                if self.is_op(")"):
                    self.advance()
                return self.close(node)
            if t.text == "{":
                return self.parse_lambda()
            if t.text == "::":
                node = self.node(NodeKind.OTHER, role="callable-ref")
                self.advance()
                if self.cur.kind in (TokenKind.IDENTIFIER, TokenKind.KEYWORD):
                    self.advance()
                return self.close(node)
            if t.text == "[":
                node = self.node(NodeKind.OTHER, role="collection-literal")
                self.parse_call_args(node, closer="]")
                return self.close(node)
        return None

    def parse_if(self) -> SyntaxNode:
        node = self.node(NodeKind.OTHER, role="if")
        self.advance()
        self.parse_paren_condition(node)
        then = self.node(NodeKind.OTHER, role="then")
        body = self.parse_control_body()
        if body is not None:
            then.children.append(body)
        node.children.append(self.close(then))
        save = self.pos
        self.skip_semis()
        if self.is_kw("else"):
            self.advance()
            other = self.node(NodeKind.OTHER, role="else")
            body = self.parse_control_body()
            if body is not None:
                other.children.append(body)
            node.children.append(self.close(other))
        else:
            self.pos = save
        return self.close(node)

    def parse_when(self) -> SyntaxNode:
        node = self.node(NodeKind.WHEN_EXPR, subject_name=None)
        self.advance()
        if self.is_op("(") and not self.newline_before():
            subject = self.node(NodeKind.OTHER, role="when-subject")
            self.advance()
            self.nl_sensitive.append(False)
            self.skip_annotations()
            if self.is_kw("val"):
                decl = self.parse_property([], self.cur.line, "local")
                subject.children.append(decl)
                node.attrs["subject_name"] = decl.attrs.get("name")
            else:
                expr = self.parse_expression()
                if expr is not None:
                    subject.children.append(expr)
                    node.attrs["subject_name"] = expr.attrs.get("ident") if expr.attrs.get("role") == "ident" else None
            while not self.at_eof() and not self.is_op(")"):
                if self.cur.kind is TokenKind.OPERATOR and self.cur.text in ("{", "}"):
                    break
                self.recover(subject)
            self.nl_sensitive.pop()
            if self.is_op(")"):
                self.advance()
            node.children.append(self.close(subject))
        if not self.is_op("{"):
            return self.close(node)
        self.advance()
        self.nl_sensitive.append(True)
        while not self.at_eof() and not self.is_op("}"):
            self.skip_semis()
            if self.is_op("}"):
                break
            start = self.pos
            branch = self.parse_when_branch()
            node.children.append(branch)
            if self.pos == start:
                self.recover(node)
        self.nl_sensitive.pop()
        if self.is_op("}"):
            self.advance()
        return self.close(node)

    def parse_when_branch(self) -> SyntaxNode:
        branch = self.node(NodeKind.OTHER, role="when-branch")
        self.nl_sensitive.append(False)
        while not self.at_eof() and not self.is_op("->"):
            if self.is_op(","):
                self.advance()
                continue
            if self.cur.kind is TokenKind.OPERATOR and self.cur.text in ("}", "{"):
                break
            start = self.pos
            cond = self.node(NodeKind.OTHER, role="when-cond", is_check=False)
            if self.is_kw("else"):
                self.advance()
                cond.attrs["else"] = True
            elif self.is_kw("is") or (self.is_op("!") and self.is_kw("is", 1)):
                cond.attrs["is_check"] = self.is_kw("is")
                if self.is_op("!"):
                    self.advance()
                self.advance()
                self.skip_type(arrow=False)
            elif self.is_kw("in") or (self.is_op("!") and self.is_kw("in", 1)):
                if self.is_op("!"):
                    self.advance()
                self.advance()
                expr = self.parse_expression()
                if expr is not None:
                    cond.children.append(expr)
            else:
                expr = self.parse_expression()
                if expr is not None:
                    cond.children.append(expr)
            branch.children.append(self.close(cond))
            if self.pos == start:
                self.recover(branch)
            elif not (self.is_op(",") or self.is_op("->")):
                # a bare newline ends the condition list (malformed branch)
                break
        self.nl_sensitive.pop()
        if self.is_op("->"):
            self.advance()
            body = self.node(NodeKind.OTHER, role="when-body")
            stmt = self.parse_control_body()
            if stmt is not None:
                body.children.append(stmt)
            branch.children.append(self.close(body))
        return self.close(branch)

    def parse_try(self) -> SyntaxNode:
        node = self.node(NodeKind.OTHER, role="try")
        self.advance()
        if self.is_op("{"):
            node.children.append(self.parse_block())
        while True:
            save = self.pos
            self.skip_semis()
            if self.is_ident("catch") and self.is_op("(", 1):
                self.advance()
                clause = self.node(NodeKind.OTHER, role="catch")
                self.parse_params(clause, ctor=False)
                if self.is_op("{"):
                    clause.children.append(self.parse_block())
                node.children.append(self.close(clause))
                continue
            if self.is_ident("finally") and self.is_op("{", 1):
                self.advance()
                node.children.append(self.parse_block())
                continue
            self.pos = save
            break
        return self.close(node)

    def parse_lambda(self) -> SyntaxNode:
        node = self.node(NodeKind.LAMBDA_EXPR, suspend=False)
        self.advance()  # {
        self.nl_sensitive.append(True)
        self.try_lambda_params(node)
        body = self.node(NodeKind.BLOCK, role="lambda-body")
        self.parse_statements(body, ctx="local", closing=True)
        node.children.append(self.close(body))
        self.nl_sensitive.pop()
        if self.is_op("}"):
            self.advance()
        return self.close(node)

    def try_lambda_params(self, lam: SyntaxNode) -> None:
        save = self.pos
        params: list[SyntaxNode] = []
        if self.is_op("->"):
            self.advance()
            return
        while not self.at_eof():
            self.skip_annotations()
            if self.is_op("("):
                d = self.node(NodeKind.DESTRUCTURING_DECL, components=[])
                j = self._matching(self.pos)
                inner = self.toks[self.pos + 1:j - 1] if j - 1 > self.pos else []
                if not all(x.kind is TokenKind.IDENTIFIER or x.text in (",", ":", "<", ">", "?", ".") for x in inner):
                    break
                self.parse_destructuring_components(d)
                params.append(self.close(d))
            elif self.cur.kind is TokenKind.IDENTIFIER:
                self.advance()
            else:
                break
            if self.is_op(":"):
                self.advance()
                self.skip_type(arrow=False)
            if self.is_op(","):
                self.advance()
                continue
            if self.is_op("->"):
                self.advance()
                lam.children.extend(params)
                return
            break
        self.pos = save

    def parse_string(self) -> SyntaxNode:
        tok = self.advance().tok
        node = SyntaxNode(NodeKind.STRING_LITERAL, tok.line, tok.end_line, [], {"raw": tok.text.startswith('"""')})
        for entry in self._template_entries(tok):
            node.children.append(entry)
        return node

    def _template_entries(self, tok: Token) -> list[SyntaxNode]:
        text = tok.text
        raw = text.startswith('"""')
        i = 3 if raw else 1
        n = len(text)
        entries: list[SyntaxNode] = []
        while i < n:
            ch = text[i]
            if ch == "\\" and not raw:
                i += 2
                continue
            if ch == "$":
                if text.startswith("${", i):
                    end = _skip_template_expr(text, i + 2)
                    line, col = _position(tok, i)
                    entry = SyntaxNode(NodeKind.STRING_TEMPLATE_ENTRY, line, line, [], {"expr": True})
                    inner_end = end - 1 if end <= n and text[end - 1] == "}" else end
                    inner_text = text[i + 2:inner_end]
                    if inner_text.strip():
                        sub_tokens = tokenize(inner_text, line=line, column=col + 2)
                        sub = _Parser(sub_tokens, depth=self.depth + 1)
                        sub.nl_sensitive = [False]
                        expr = sub.parse_expression()
                        self.warnings += sub.warnings
                        if expr is not None:
                            entry.children.append(expr)
                        if not sub.at_eof():
                            self.warnings += 1
                    entry.end_line = max([entry.start_line] + [c.end_line for c in entry.children])
                    entry.end_line = min(max(entry.end_line, line + inner_text.count("\n")), tok.end_line)
                    entries.append(entry)
                    i = end
                    continue
                m = _TEMPLATE_ID_RE.match(text, i)
                if m is not None:
                    line, _ = _position(tok, i)
                    entries.append(SyntaxNode(NodeKind.STRING_TEMPLATE_ENTRY, line, line, [],
                                              {"expr": False, "ident": m.group(1)}))
                    i = m.end()
                    continue
            i += 1
        return entries


def _position(tok: Token, offset: int) -> tuple[int, int]:
    prefix = tok.text[:offset]
    nl = prefix.count("\n")
    if nl:
        return tok.line + nl, len(prefix) - prefix.rfind("\n")
    return tok.line, tok.column + offset


def parse(tokens: list[Token], path: str = "<memory>", source: str | None = None) -> SourceTree:
    """Build a SourceTree from a token stream. Never raises on odd input."""
    parser = _Parser(tokens)
    root = parser.parse_file()
    text = source if source is not None else "".join(t.text for t in tokens)
    root.end_line = max(root.end_line, _physical_lines(text), 1)
    return SourceTree(
        path=path,
        root=root,
        tokens=tokens,
        token_count=sum(1 for t in tokens if t.kind not in (TokenKind.WHITESPACE, TokenKind.COMMENT)),
        physical_lines=_physical_lines(text),
        warnings=parser.warnings,
    )


def parse_source(source: str | bytes, path: str = "<memory>") -> SourceTree:
    """Tokenize and parse in one step."""
    text = decode_source(source, path) if isinstance(source, bytes) else source
    return parse(tokenize(text, path), path, text)
