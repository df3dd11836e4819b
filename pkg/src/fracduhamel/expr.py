"""A small arithmetic expression language for symbols and spatial data.

Grammar (``^`` is right-associative and binds tighter than unary minus, so
``-abs(xi)^1.5`` means ``-(abs(xi)^1.5)``)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'

Evaluation is vectorised over numpy arrays. Identifiers are bound at
evaluation time, so an unknown name is an evaluation error, not a parse error.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ExpressionError",
    "ExprSyntaxError",
    "ExprEvalError",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "parse_expression",
    "to_text",
    "evaluate",
    "CONSTANTS",
    "FUNCTIONS",
]


class ExpressionError(ValueError):
    pass


class ExprSyntaxError(ExpressionError):
    def __init__(self, message: str, offset: int, expected: frozenset[str]):
        self.offset = offset
        self.expected = expected
        exp = ", ".join(sorted(expected))
        super().__init__(f"{message} at offset {offset} (expected one of: {exp})")


class ExprEvalError(ExpressionError):
    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} at offset {offset}")


# Nodes carry the byte offset of their first token for error reporting; it
# does not take part in equality.


@dataclass(frozen=True)
class Num:
    value: float
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Var:
    name: str
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Neg:
    operand: object
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple
    pos: int = field(default=0, compare=False)


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)

_ATOM_START = frozenset({"number", "identifier", "'('", "'-'"})


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos, _ATOM_START)
        start = m.start(m.lastgroup)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def is_op(self, *ops):
        kind, val, _ = self.peek()
        return kind == "op" and val in ops

    def fail(self, expected):
        kind, val, pos = self.peek()
        what = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"unexpected {what}", pos, frozenset(expected))

    def expect(self, op):
        if not self.is_op(op):
            self.fail({f"'{op}'"})
        return self.take()

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            self.fail({"operator", "end of input"})
        return node

    def expr(self):
        node = self.term()
        while self.is_op("+", "-"):
            _, op, pos = self.take()
            node = BinOp(op, node, self.term(), pos)
        return node

    def term(self):
        node = self.unary()
        while self.is_op("*", "/"):
            _, op, pos = self.take()
            node = BinOp(op, node, self.unary(), pos)
        return node

    def unary(self):
        if self.is_op("-"):
            _, _, pos = self.take()
            return Neg(self.unary(), pos)
        return self.power()

    def power(self):
        base = self.atom()
        if self.is_op("^"):
            _, _, pos = self.take()
            return BinOp("^", base, self.unary(), pos)
        return base

    def atom(self):
        kind, val, pos = self.peek()
        if kind == "num":
            self.take()
            return Num(float(val), pos)
        if kind == "ident":
            self.take()
            if self.is_op("("):
                self.take()
                args = [self.expr()]
                while self.is_op(","):
                    self.take()
                    args.append(self.expr())
                if not self.is_op(")"):
                    self.fail({"','", "')'"})
                self.take()
                return Call(val, tuple(args), pos)
            return Var(val, pos)
        if self.is_op("("):
            self.take()
            node = self.expr()
            self.expect(")")
            return node
        self.fail(_ATOM_START)


def parse_expression(text: str):
    """Parse ``text`` into an expression tree (raises :class:`ExprSyntaxError`)."""
    return _Parser(text).parse()


def to_text(node) -> str:
    """Print a tree so that ``parse_expression(to_text(t)) == t``."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_text(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_text(node.left)} {node.op} {to_text(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_text(a) for a in node.args)})"
    raise TypeError(f"not an expression node: {node!r}")


CONSTANTS = {"pi": np.pi, "e": np.e, "i": 1j}


def _sqrt(x):
    x = np.asarray(x)
    if np.iscomplexobj(x) or np.any(x < 0):
        return np.sqrt(x.astype(complex))
    return np.sqrt(x)


def _power(base, expo, pos):
    base = np.asarray(base)
    expo = np.asarray(expo)
    zero_base = base == 0
    neg_expo = np.real(expo) < 0
    if np.any(zero_base & neg_expo):
        raise ExprEvalError("zero raised to a negative power", pos)
    real_ok = not (np.iscomplexobj(base) or np.iscomplexobj(expo))
    if real_ok:
        integral = np.all(expo == np.round(expo))
        if integral or np.all(base >= 0):
            with np.errstate(over="ignore"):
                return np.power(base.astype(float), expo.astype(float))
    return np.power(base.astype(complex), expo.astype(complex))


FUNCTIONS = {
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "exp": (1, np.exp),
    "abs": (1, np.abs),
    "sqrt": (1, _sqrt),
    "pow": (2, None),
}


def evaluate(node, env: dict | None = None):
    """Evaluate a tree with variables from ``env`` (arrays broadcast)."""
    env = env or {}

    def ev(n):
        if isinstance(n, Num):
            return np.asarray(n.value)
        if isinstance(n, Var):
            if n.name in env:
                return np.asarray(env[n.name])
            if n.name in CONSTANTS:
                return np.asarray(CONSTANTS[n.name])
            raise ExprEvalError(f"unknown identifier {n.name!r}", n.pos)
        if isinstance(n, Neg):
            return -ev(n.operand)
        if isinstance(n, BinOp):
            a = ev(n.left)
            b = ev(n.right)
            if n.op == "+":
                return a + b
            if n.op == "-":
                return a - b
            if n.op == "*":
                return a * b
            if n.op == "/":
                if np.any(b == 0):
                    raise ExprEvalError("division by zero", n.pos)
                return a / b
            return _power(a, b, n.pos)
        if isinstance(n, Call):
            if n.name not in FUNCTIONS:
                raise ExprEvalError(f"unknown function {n.name!r}", n.pos)
            arity, fn = FUNCTIONS[n.name]
            if len(n.args) != arity:
                raise ExprEvalError(
                    f"{n.name} takes {arity} argument(s), got {len(n.args)}", n.pos
                )
            args = [ev(a) for a in n.args]
            if n.name == "pow":
                return _power(args[0], args[1], n.pos)
            return fn(args[0])
        raise TypeError(f"not an expression node: {n!r}")

    return ev(node)
