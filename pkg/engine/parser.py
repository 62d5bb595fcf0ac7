"""
Concrete syntax of the expression language.

    expr      := einsum | aggregate | delta | ones | number | name
    einsum    := '#(' format ';' expr (',' expr)* ')'
    aggregate := '(' expr ('+' expr)* ')'
    delta     := 'delta(' INT ';' [INT (',' INT)*] ')'
    ones      := 'ones(' [INT (',' INT)*] ')'
    format    := string (',' string)* '->' string
    string    := (LETTER | '{' INT '}')*

Whitespace is insignificant everywhere. See docs/grammar.md.
"""

from __future__ import annotations

import math
import re
from typing import Optional

from engine.core import (
    AggregateNode,
    DeltaLeaf,
    EinsumNode,
    Expression,
    FormatString,
    IndexString,
    IndexSymbol,
    NamedLeaf,
    OnesLeaf,
    ScalarLeaf,
)
from engine.errors import ArityMismatch, ParseError, SourceSpan

_TOKENS = {
    "arrow": r"->",
    "hash": r"\#",
    "number": r"-?\d+(\.\d*)?([Ee][+\-]?\d+)?",
    "name": r"[A-Za-z_][A-Za-z0-9_]*",
    "tag": r"\{\s*\d+\s*\}",
    "lbrace": r"\{",
    "lpar": r"\(",
    "rpar": r"\)",
    "comma": r",",
    "semi": r";",
    "plus": r"\+",
    "skip": r"\s+",
    "error": r".",
}
_REGEX = re.compile("|".join(f"(?P<{name}>{text})" for name, text in _TOKENS.items()))
_KEYWORDS = {"delta", "ones", "inf", "true", "false"}


class _Token:
    __slots__ = ("kind", "text", "start", "end")

    def __init__(self, kind: str, text: str, start: int, end: int):
        self.kind, self.text, self.start, self.end = kind, text, start, end

    @property
    def span(self) -> SourceSpan:
        return SourceSpan(self.start, self.end)


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    for mo in _REGEX.finditer(text):
        kind = str(mo.lastgroup)
        if kind == "skip":
            continue
        if kind == "error":
            raise ParseError(SourceSpan(mo.start(), mo.end()), f"Unexpected character {mo.group()!r}")
        if kind == "lbrace":
            raise ParseError(SourceSpan(mo.start(), mo.end()), "Malformed integer tag, expected {n}")
        tokens.append(_Token(kind, mo.group(), mo.start(), mo.end()))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    # -- token helpers -------------------------------------------------------
    def peek(self, offset: int = 0) -> Optional[_Token]:
        i = self.pos + offset
        return self.tokens[i] if i < len(self.tokens) else None

    def at_end_span(self) -> SourceSpan:
        return SourceSpan(len(self.text), len(self.text))

    def expect(self, kind: str, what: str) -> _Token:
        tok = self.peek()
        if tok is None:
            raise ParseError(self.at_end_span(), f"Expected {what}, got end of input")
        if tok.kind != kind:
            raise ParseError(tok.span, f"Expected {what}, got {tok.text!r}")
        self.pos += 1
        return tok

    def accept(self, kind: str) -> Optional[_Token]:
        tok = self.peek()
        if tok is not None and tok.kind == kind:
            self.pos += 1
            return tok
        return None

    # -- format strings ------------------------------------------------------
    def index_string(self) -> IndexString:
        out: list[IndexSymbol] = []
        while True:
            tok = self.peek()
            if tok is None:
                return tuple(out)
            if tok.kind == "name" and tok.text.isalpha():
                out.extend(IndexSymbol(ch) for ch in tok.text)
            elif tok.kind == "tag":
                out.append(IndexSymbol(int(tok.text.strip("{} \t\n"))))
            elif tok.kind in ("name", "number"):
                raise ParseError(tok.span, f"Invalid index symbols {tok.text!r}")
            else:
                return tuple(out)
            self.pos += 1

    def format_string(self) -> FormatString:
        inputs = [self.index_string()]
        while self.accept("comma"):
            inputs.append(self.index_string())
        self.expect("arrow", "'->'")
        output = self.index_string()
        return FormatString(tuple(inputs), output)

    # -- expressions ---------------------------------------------------------
    def expression(self) -> Expression:
        tok = self.peek()
        if tok is None:
            raise ParseError(self.at_end_span(), "Expected an expression, got end of input")
        if tok.kind == "hash":
            return self.einsum()
        if tok.kind == "lpar":
            return self.aggregate()
        if tok.kind == "number":
            self.pos += 1
            return ScalarLeaf(_number(tok.text), span=tok.span)
        if tok.kind == "name":
            if tok.text == "inf":
                self.pos += 1
                return ScalarLeaf(math.inf, span=tok.span)
            if tok.text in ("true", "false"):
                self.pos += 1
                return ScalarLeaf(tok.text == "true", span=tok.span)
            if tok.text == "delta":
                return self.delta()
            if tok.text == "ones":
                return self.ones()
            self.pos += 1
            return NamedLeaf(tok.text, span=tok.span)
        raise ParseError(tok.span, f"Expected an expression, got {tok.text!r}")

    def einsum(self) -> EinsumNode:
        start = self.expect("hash", "'#'").start
        self.expect("lpar", "'('")
        fmt = self.format_string()
        self.expect("semi", "';' after the format string")
        args = [self.expression()]
        while self.accept("comma"):
            args.append(self.expression())
        end = self.expect("rpar", "')' closing the einsum").end
        span = SourceSpan(start, end)
        if len(args) != fmt.arity:
            raise ArityMismatch(
                f"Format string has {fmt.arity} input strings but {len(args)} arguments at {span}"
            )
        return EinsumNode(fmt, tuple(args), span=span)

    def aggregate(self) -> AggregateNode:
        start = self.expect("lpar", "'('").start
        terms = [self.expression()]
        while self.accept("plus"):
            terms.append(self.expression())
        end = self.expect("rpar", "')' or '+'").end
        return AggregateNode(tuple(terms), span=SourceSpan(start, end))

    def integers(self) -> list[int]:
        values = []
        if self.peek() is not None and self.peek().kind == "number":
            values.append(self.integer())
            while self.accept("comma"):
                values.append(self.integer())
        return values

    def integer(self) -> int:
        tok = self.expect("number", "an integer")
        if not tok.text.isdigit():
            raise ParseError(tok.span, f"Expected a non-negative integer, got {tok.text!r}")
        return int(tok.text)

    def delta(self) -> DeltaLeaf:
        start = self.expect("name", "'delta'").start
        self.expect("lpar", "'(' after delta")
        order = self.integer()
        self.expect("semi", "';' after the delta order")
        dims = self.integers()
        end = self.expect("rpar", "')' closing delta").end
        span = SourceSpan(start, end)
        try:
            return DeltaLeaf(order, tuple(dims), span=span)
        except ValueError as exc:
            raise ParseError(span, str(exc)) from None

    def ones(self) -> OnesLeaf:
        start = self.expect("name", "'ones'").start
        self.expect("lpar", "'(' after ones")
        dims = self.integers()
        end = self.expect("rpar", "')' closing ones").end
        span = SourceSpan(start, end)
        try:
            return OnesLeaf(tuple(dims), span=span)
        except ValueError as exc:
            raise ParseError(span, str(exc)) from None

    def finish(self) -> None:
        tok = self.peek()
        if tok is not None:
            raise ParseError(tok.span, f"Unexpected trailing input {tok.text!r}")


def _number(text: str):
    if any(c in text for c in ".eE"):
        return float(text)
    return int(text)


# --------------------------------------------------------------------------- #
# Public API
# --------------------------------------------------------------------------- #

def parse_format(text: str, check: bool = True) -> FormatString:
    """Parse ``"ij,jk->ik"``; with ``check`` also enforce that outputs are bound."""
    parser = _Parser(text)
    fmt = parser.format_string()
    parser.finish()
    return fmt.check() if check else fmt


def parse_index_string(text: str) -> IndexString:
    parser = _Parser(text)
    index = parser.index_string()
    parser.finish()
    return index


def parse_expression(text: str) -> Expression:
    parser = _Parser(text)
    expr = parser.expression()
    parser.finish()
    return expr


def render_index(index: IndexString) -> str:
    return "".join(map(str, index))


def render_format(fmt: FormatString) -> str:
    return ",".join(render_index(s) for s in fmt.inputs) + "->" + render_index(fmt.output)


def render_scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isinf(value) and value > 0:
            return "inf"
        return repr(value)
    return str(value)


def render(expr: Expression) -> str:
    """Canonical single-line rendering; ``parse_expression`` inverts it."""
    if isinstance(expr, NamedLeaf):
        return expr.name
    if isinstance(expr, ScalarLeaf):
        return render_scalar(expr.value)
    if isinstance(expr, OnesLeaf):
        return "ones(" + ",".join(map(str, expr.shape)) + ")"
    if isinstance(expr, DeltaLeaf):
        return f"delta({expr.order};" + (" " if expr.dims else "") + ",".join(map(str, expr.dims)) + ")"
    if isinstance(expr, AggregateNode):
        return "(" + " + ".join(render(t) for t in expr.terms) + ")"
    return "#(" + render_format(expr.format) + "; " + ", ".join(render(a) for a in expr.args) + ")"
