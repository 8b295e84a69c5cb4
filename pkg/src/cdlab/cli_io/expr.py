"""Recursive-descent parser for coefficient expressions.

Grammar (``^`` binds tighter than unary minus and is right associative)::

    expr  := term (("+" | "-") term)*
    term  := unary (("*" | "/") unary)*
    unary := ("+" | "-") unary | power
    power := atom ("^" unary)?
    atom  := NUMBER | NAME | FUNC "(" expr ")" | "(" expr ")"

Names are ``x1``, ``x2``, ``t``, ``x`` (same as ``x1``) and the constant
``pi``; functions are ``sin``, ``cos`` and ``exp``.  Parsed expressions
evaluate vectorized over numpy arrays.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any

import numpy as np

from ..errors import ConfigError

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
VARIABLES = ("x1", "x2", "t", "x")
CONSTANTS = {"pi": np.pi}

_TOKEN = re.compile(r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
                    r"|(?P<op>[-+*/^()]))")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    pos: int  # zero-based offset in the source


def tokenize(src: str, line: int = 0, column: int = 1) -> list[Token]:
    out = []
    i = 0
    while True:
        while i < len(src) and src[i].isspace():
            i += 1
        if i >= len(src):
            break
        m = _TOKEN.match(src, i)
        if m is None or m.end() == i:
            raise ConfigError(f"unexpected character {src[i]!r} in expression", line, column + i)
        kind = m.lastgroup
        start = m.start(kind)
        out.append(Token(kind, m.group(kind), start))
        i = m.end()
    out.append(Token("end", "", len(src)))
    return out


class Node:
    def eval(self, env: dict[str, Any]) -> Any:
        raise NotImplementedError


@dataclass(frozen=True)
class Num(Node):
    value: float

    def eval(self, env):
        return self.value


@dataclass(frozen=True)
class Var(Node):
    name: str

    def eval(self, env):
        if self.name in CONSTANTS:
            return CONSTANTS[self.name]
        return env["x1" if self.name == "x" else self.name]


@dataclass(frozen=True)
class Neg(Node):
    arg: Node

    def eval(self, env):
        return -self.arg.eval(env)


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node

    def eval(self, env):
        a, b = self.left.eval(env), self.right.eval(env)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            return a / b
        return np.power(a, b)


@dataclass(frozen=True)
class Call(Node):
    func: str
    arg: Node

    def eval(self, env):
        return FUNCTIONS[self.func](self.arg.eval(env))


class _Parser:
    def __init__(self, src: str, line: int, column: int) -> None:
        self.src = src
        self.line = line
        self.column = column
        self.toks = tokenize(src, line, column)
        self.i = 0

    def error(self, msg: str, tok: Token | None = None) -> ConfigError:
        tok = tok or self.peek()
        return ConfigError(msg, self.line, self.column + tok.pos)

    def peek(self) -> Token:
        return self.toks[self.i]

    def take(self) -> Token:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> None:
        tok = self.take()
        if tok.text != text:
            raise self.error(f"expected {text!r}, found {tok.text or 'end of expression'!r}", tok)

    def parse(self) -> Node:
        if self.peek().kind == "end":
            raise self.error("empty expression")
        node = self.expr()
        if self.peek().kind != "end":
            raise self.error(f"unexpected {self.peek().text!r}")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek().text in ("+", "-"):
            op = self.take().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek().text in ("*", "/"):
            op = self.take().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.peek().text in ("+", "-"):
            op = self.take().text
            arg = self.unary()
            return Neg(arg) if op == "-" else arg
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek().text == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Node:
        tok = self.take()
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.kind == "name":
            if tok.text in FUNCTIONS:
                if self.peek().text != "(":
                    raise self.error(f"function {tok.text!r} needs an argument in parentheses")
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(tok.text, arg)
            if tok.text in VARIABLES or tok.text in CONSTANTS:
                return Var(tok.text)
            raise self.error(f"unknown name {tok.text!r}", tok)
        if tok.text == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise self.error(f"unexpected {tok.text or 'end of expression'!r}", tok)


def _names(node: Node) -> set[str]:
    if isinstance(node, Var):
        return set() if node.name in CONSTANTS else {"x1" if node.name == "x" else node.name}
    if isinstance(node, (Neg, Call)):
        return _names(node.arg)
    if isinstance(node, BinOp):
        return _names(node.left) | _names(node.right)
    return set()


@dataclass(frozen=True)
class Expression:
    """A parsed expression; equality is by source text."""

    text: str
    tree: Node

    @classmethod
    def parse(cls, src: str, line: int = 0, column: int = 1) -> "Expression":
        return cls(src.strip(), _Parser(src.strip(), line, column + (len(src) - len(src.lstrip()))).parse())

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Expression) and other.text == self.text

    def __hash__(self) -> int:
        return hash(self.text)

    @property
    def variables(self) -> set[str]:
        return _names(self.tree)

    @property
    def is_constant(self) -> bool:
        return not self.variables

    def __call__(self, x1: Any = 0.0, x2: Any = 0.0, t: float = 0.0) -> np.ndarray:
        shape = np.broadcast(np.asarray(x1), np.asarray(x2)).shape
        val = self.tree.eval({"x1": np.asarray(x1, dtype=float), "x2": np.asarray(x2, dtype=float), "t": t})
        return np.broadcast_to(np.asarray(val, dtype=float), shape).copy()
