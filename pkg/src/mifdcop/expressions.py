"""Arithmetic expression trees used as functional constraint payloads.

An expression is built from constants, variable references, the binary
operators ``+ - * ^`` (``^`` is exponentiation, right associative), unary
minus, and discrete indicator terms ``I(x3 == v)`` that evaluate to 1 when
variable 3 carries the value ``v`` and 0 otherwise.  Evaluation works on
scalars and on numpy arrays alike, so a single tree serves both the scalar
model API and the vectorized replica engine.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import ValidationError

Number = Union[float, np.ndarray]


@dataclass(frozen=True)
class Expr:
    """Base node; concrete nodes below."""

    def __add__(self, other):
        return Add(self, _as_expr(other))

    def __sub__(self, other):
        return Sub(self, _as_expr(other))

    def __mul__(self, other):
        return Mul(self, _as_expr(other))

    def __pow__(self, other):
        return Pow(self, _as_expr(other))

    def __neg__(self):
        return Neg(self)


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    index: int


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True)
class Add(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Sub(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Mul(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: Expr


@dataclass(frozen=True)
class Indicator(Expr):
    """1.0 when the referenced discrete variable equals ``value``, else 0.0."""

    index: int
    value: float


def _as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    return Const(float(x))


def evaluate(expr: Expr, values: Mapping[int, Number]) -> Number:
    """Evaluate ``expr`` with ``values`` mapping variable index to scalar or array."""
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Var):
        return values[expr.index]
    if isinstance(expr, Neg):
        return -evaluate(expr.operand, values)
    if isinstance(expr, Add):
        return evaluate(expr.left, values) + evaluate(expr.right, values)
    if isinstance(expr, Sub):
        return evaluate(expr.left, values) - evaluate(expr.right, values)
    if isinstance(expr, Mul):
        return evaluate(expr.left, values) * evaluate(expr.right, values)
    if isinstance(expr, Pow):
        return evaluate(expr.base, values) ** evaluate(expr.exponent, values)
    if isinstance(expr, Indicator):
        v = values[expr.index]
        if isinstance(v, np.ndarray):
            return (v == expr.value).astype(float)
        return 1.0 if v == expr.value else 0.0
    raise TypeError(f"unknown expression node {type(expr).__name__}")


def variables(expr: Expr) -> set[int]:
    """All variable indices referenced by the expression."""
    if isinstance(expr, (Const,)):
        return set()
    if isinstance(expr, Var):
        return {expr.index}
    if isinstance(expr, Indicator):
        return {expr.index}
    if isinstance(expr, Neg):
        return variables(expr.operand)
    if isinstance(expr, Pow):
        return variables(expr.base) | variables(expr.exponent)
    return variables(expr.left) | variables(expr.right)


def check_total(expr: Expr) -> None:
    """Reject trees that can produce undefined values on some inputs.

    Exponents must be nonnegative integer constants: a negative or fractional
    exponent applied to a negative or zero base is undefined, and domains here
    routinely include negative values.
    """
    if isinstance(expr, Pow):
        e = expr.exponent
        if not isinstance(e, Const) or e.value < 0 or e.value != int(e.value):
            raise ValidationError(
                "exponent must be a nonnegative integer constant, got "
                f"{to_string(expr.exponent)}"
            )
        check_total(expr.base)
    elif isinstance(expr, Neg):
        check_total(expr.operand)
    elif isinstance(expr, (Add, Sub, Mul)):
        check_total(expr.left)
        check_total(expr.right)


# Printing: parenthesize only where precedence requires it, so generated
# problem files stay readable.  Levels: + - (1), * (2), unary - (3), ^ (4).

def _fmt_number(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def to_string(expr: Expr) -> str:
    return _render(expr, 0)


def _render(expr: Expr, parent_level: int) -> str:
    if isinstance(expr, Const):
        s = _fmt_number(expr.value)
        return f"({s})" if expr.value < 0 and parent_level > 1 else s
    if isinstance(expr, Var):
        return f"x{expr.index}"
    if isinstance(expr, Indicator):
        return f"I(x{expr.index} == {_fmt_number(expr.value)})"
    if isinstance(expr, Add):
        s = f"{_render(expr.left, 1)} + {_render(expr.right, 2)}"
        return f"({s})" if parent_level > 1 else s
    if isinstance(expr, Sub):
        # right side rendered one level up so a - (b - c) keeps its parens
        s = f"{_render(expr.left, 1)} - {_render(expr.right, 2)}"
        return f"({s})" if parent_level > 1 else s
    if isinstance(expr, Mul):
        s = f"{_render(expr.left, 2)} * {_render(expr.right, 3)}"
        return f"({s})" if parent_level > 2 else s
    if isinstance(expr, Neg):
        s = f"-{_render(expr.operand, 4)}"
        return f"({s})" if parent_level > 3 else s
    if isinstance(expr, Pow):
        # right associative: a ^ b ^ c == a ^ (b ^ c)
        s = f"{_render(expr.base, 5)} ^ {_render(expr.exponent, 4)}"
        return f"({s})" if parent_level > 4 else s
    raise TypeError(f"unknown expression node {type(expr).__name__}")


_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<number>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_]\w*)"
    r"|(?P<op>\*\*|==|[-+*^()])"
    r")"
)


def _tokenize(text: str) -> list[str]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            rest = text[pos:].lstrip()
            if not rest:
                break
            raise ValidationError(f"cannot tokenize expression near {rest[:20]!r}")
        pos = m.end()
        tok = m.group("number") or m.group("ident") or m.group("op")
        tokens.append("^" if tok == "**" else tok)
    return tokens


class _Parser:
    def __init__(self, tokens: list[str], text: str):
        self.tokens = tokens
        self.pos = 0
        self.text = text

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> str:
        tok = self.peek()
        if tok is None:
            raise ValidationError(f"unexpected end of expression: {self.text!r}")
        self.pos += 1
        return tok

    def expect(self, tok: str) -> None:
        got = self.next()
        if got != tok:
            raise ValidationError(f"expected {tok!r} but found {got!r} in {self.text!r}")

    def parse(self) -> Expr:
        e = self.sum()
        if self.peek() is not None:
            raise ValidationError(f"trailing tokens after expression: {self.text!r}")
        return e

    def sum(self) -> Expr:
        e = self.product()
        while self.peek() in ("+", "-"):
            op = self.next()
            rhs = self.product()
            e = Add(e, rhs) if op == "+" else Sub(e, rhs)
        return e

    def product(self) -> Expr:
        e = self.unary()
        while self.peek() == "*":
            self.next()
            e = Mul(e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.peek() == "-":
            self.next()
            operand = self.unary()
            # fold "-2" into a negative constant so reparsing a printed tree
            # reproduces the tree exactly
            if isinstance(operand, Const):
                return Const(-operand.value)
            return Neg(operand)
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek() == "^":
            self.next()
            return Pow(base, self.unary())
        return base

    def atom(self) -> Expr:
        tok = self.next()
        if tok == "(":
            e = self.sum()
            self.expect(")")
            return e
        if tok == "I":
            self.expect("(")
            var = self.next()
            index = _var_index(var, self.text)
            self.expect("==")
            sign = 1.0
            if self.peek() == "-":
                self.next()
                sign = -1.0
            num = self.next()
            try:
                value = sign * float(num)
            except ValueError:
                raise ValidationError(f"indicator value must be numeric, got {num!r}")
            self.expect(")")
            return Indicator(index, value)
        if re.fullmatch(r"[A-Za-z_]\w*", tok):
            return Var(_var_index(tok, self.text))
        try:
            return Const(float(tok))
        except ValueError:
            raise ValidationError(f"unexpected token {tok!r} in {self.text!r}")


def _var_index(name: str, text: str) -> int:
    m = re.fullmatch(r"x(\d+)", name)
    if m is None:
        raise ValidationError(f"variable references must look like x<index>, got {name!r} in {text!r}")
    return int(m.group(1))


def parse(text: str) -> Expr:
    """Parse an expression string into a tree; inverse of :func:`to_string`."""
    return _Parser(_tokenize(text), text).parse()
