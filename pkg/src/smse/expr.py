"""A tiny recursive-descent parser for boundary-data and level-set formulas.

Grammar (``^`` is right associative and binds tighter than unary minus)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | 'x' | 'y' | FUNC '(' expr ')' | '(' expr ')'
    FUNC   := sin | cos | exp | log | sqrt

Parsed expressions are compiled to closures that evaluate elementwise on
numpy arrays.
"""

from __future__ import annotations

import re

import numpy as np

from .errors import ExpressionError

_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExpressionError(f"unexpected character {text[pos:].strip()[:1]!r} at offset {pos}")
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self, value=None):
        tok = self.tokens[self.i]
        if value is not None and tok[1] != value:
            raise ExpressionError(f"expected {value!r} at offset {tok[2]}, found {tok[1] or 'end of input'!r}")
        self.i += 1
        return tok

    def parse(self):
        node = self.expr()
        kind, value, pos = self.peek()
        if kind != "end":
            raise ExpressionError(f"trailing input {value!r} at offset {pos}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            node = (op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            node = (op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            operand = self.unary()
            return ("neg", operand) if op == "-" else operand
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            return ("^", base, self.unary())
        return base

    def atom(self):
        kind, value, pos = self.take()
        if kind == "num":
            return ("num", float(value))
        if kind == "name":
            if value in ("x", "y"):
                return ("var", value)
            if value in _FUNCS:
                self.take("(")
                arg = self.expr()
                self.take(")")
                return ("call", value, arg)
            raise ExpressionError(f"unknown name {value!r} at offset {pos}")
        if value == "(":
            node = self.expr()
            self.take(")")
            return node
        raise ExpressionError(f"unexpected {value or 'end of input'!r} at offset {pos}")


def _compile(node):
    tag = node[0]
    if tag == "num":
        c = node[1]
        return lambda x, y: c
    if tag == "var":
        return (lambda x, y: x) if node[1] == "x" else (lambda x, y: y)
    if tag == "neg":
        f = _compile(node[1])
        return lambda x, y: -f(x, y)
    if tag == "call":
        fn = _FUNCS[node[1]]
        f = _compile(node[2])
        return lambda x, y: fn(f(x, y))
    lhs, rhs = _compile(node[1]), _compile(node[2])
    if tag == "+":
        return lambda x, y: lhs(x, y) + rhs(x, y)
    if tag == "-":
        return lambda x, y: lhs(x, y) - rhs(x, y)
    if tag == "*":
        return lambda x, y: lhs(x, y) * rhs(x, y)
    if tag == "/":
        return lambda x, y: lhs(x, y) / rhs(x, y)
    return lambda x, y: np.power(lhs(x, y), rhs(x, y))


def parse_expression(text):
    """Compile ``text`` into ``f(x, y)`` that broadcasts over arrays.

    >>> f = parse_expression("1 + 0.1*x")
    >>> float(f(2.0, 0.0))
    1.2
    """
    if not isinstance(text, str) or not text.strip():
        raise ExpressionError("empty expression")
    fn = _compile(_Parser(text).parse())

    def evaluate(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        with np.errstate(all="ignore"):
            return np.asarray(fn(x, y), dtype=float) * np.ones(np.broadcast(x, y).shape)

    evaluate.source = text
    return evaluate
