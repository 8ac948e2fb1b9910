"""A small expression language for defining functions ``f(x, y, z)``.

Grammar::

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := "-"? atom ("^" integer)?
    atom   := number | "x" | "y" | "z" | func "(" expr ")" | "(" expr ")"
    func   := "sin" | "cos" | "exp"

Expressions are immutable trees.  ``diff`` returns simplified trees, and every
tree is compiled once to a numpy-aware Python callable, so evaluation works on
scalars and arrays alike.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

VARIABLES = ("x", "y", "z")
FUNCTIONS = ("sin", "cos", "exp")


class ParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class DomainError(ArithmeticError):
    """Evaluation left the domain of the expression (division by zero, overflow)."""


# --- tree -------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class Add:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Sub:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Mul:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Div:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exp: int


@dataclass(frozen=True)
class Func:
    name: str
    arg: "Node"


Node = Union[Const, Var, Neg, Add, Sub, Mul, Div, Pow, Func]

ZERO = Const(0.0)
ONE = Const(1.0)


# --- parsing ----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


def _tokenize(src: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if m is None:
            bad = pos + (len(src[pos:]) - len(src[pos:].lstrip()))
            raise ParseError(f"unexpected character {src[bad]!r}", bad)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src: str):
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, off = self.take()
        if text != value or kind != "op":
            got = "end of input" if kind == "end" else repr(text)
            raise ParseError(f"expected {value!r}, got {got}", off)

    def parse(self) -> Node:
        node = self.expr()
        kind, text, off = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {text!r}", off)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.factor()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def factor(self) -> Node:
        negate = False
        if self.peek()[:2] == ("op", "-"):
            self.take()
            negate = True
        node = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            kind, text, off = self.take()
            if kind != "num" or not text.isdigit():
                raise ParseError("exponent must be a nonnegative integer literal", off)
            node = Pow(node, int(text))
        return Neg(node) if negate else node

    def atom(self) -> Node:
        kind, text, off = self.take()
        if kind == "num":
            return Const(float(text))
        if kind == "name":
            if text in VARIABLES:
                return Var(text)
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(text, arg)
            raise ParseError(f"unknown identifier {text!r}", off)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        got = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"unexpected {got}", off)


def parse_node(src: str) -> Node:
    if not src or not src.strip():
        raise ParseError("empty expression", 0)
    return _Parser(src).parse()


# --- printing ---------------------------------------------------------------

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}


def _prec(node: Node) -> int:
    return _PREC.get(type(node), 5)


def _fmt_number(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_str(node: Node) -> str:
    def wrap(n: Node, min_prec: int) -> str:
        s = to_str(n)
        return f"({s})" if _prec(n) < min_prec else s

    if isinstance(node, Const):
        return _fmt_number(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Func):
        return f"{node.name}({to_str(node.arg)})"
    if isinstance(node, Neg):
        return "-" + wrap(node.arg, 4)
    if isinstance(node, Pow):
        return f"{wrap(node.base, 5)}^{node.exp}"
    op = {Add: "+", Sub: "-", Mul: "*", Div: "/"}[type(node)]
    lp = _PREC[type(node)]
    return f"{wrap(node.left, lp)} {op} {wrap(node.right, lp + 1)}"


# --- simplifying constructors ----------------------------------------------


def _cval(node: Node):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Neg) and isinstance(node.arg, Const):
        return -node.arg.value
    return None


def const(v: float) -> Node:
    v = float(v) + 0.0
    return Neg(Const(-v)) if v < 0 else Const(v)


def _fold(fn, *args) -> Node | None:
    """Constant-fold ``fn(*args)``; ``None`` when the result is not a finite float."""
    with np.errstate(all="ignore"):
        try:
            v = float(fn(*args))
        except (OverflowError, ZeroDivisionError):
            return None
    return const(v) if math.isfinite(v) else None


def neg(a: Node) -> Node:
    c = _cval(a)
    if c is not None:
        return const(-c)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def add(a: Node, b: Node) -> Node:
    ca, cb = _cval(a), _cval(b)
    if ca is not None and cb is not None and (c := _fold(lambda u, v: u + v, ca, cb)):
        return c
    if ca == 0:
        return b
    if cb == 0:
        return a
    if isinstance(b, Neg):
        return sub(a, b.arg)
    return Add(a, b)


def sub(a: Node, b: Node) -> Node:
    ca, cb = _cval(a), _cval(b)
    if ca is not None and cb is not None and (c := _fold(lambda u, v: u - v, ca, cb)):
        return c
    if cb == 0:
        return a
    if ca == 0:
        return neg(b)
    if a == b:
        return ZERO
    if isinstance(b, Neg):
        return add(a, b.arg)
    return Sub(a, b)


def mul(a: Node, b: Node) -> Node:
    ca, cb = _cval(a), _cval(b)
    if ca is not None and cb is not None and (c := _fold(lambda u, v: u * v, ca, cb)):
        return c
    if ca == 0 or cb == 0:
        return ZERO
    if ca == 1:
        return b
    if cb == 1:
        return a
    if ca == -1:
        return neg(b)
    if cb == -1:
        return neg(a)
    if isinstance(a, Neg):
        return neg(mul(a.arg, b))
    if isinstance(b, Neg):
        return neg(mul(a, b.arg))
    if cb is not None:
        return Mul(b, a)
    return Mul(a, b)


def div(a: Node, b: Node) -> Node:
    ca, cb = _cval(a), _cval(b)
    if ca == 0 and cb != 0:
        return ZERO
    if cb == 1:
        return a
    if ca is not None and cb is not None and cb != 0 and (c := _fold(lambda u, v: u / v, ca, cb)):
        return c
    if isinstance(a, Neg):
        return neg(div(a.arg, b))
    if isinstance(b, Neg):
        return neg(div(a, b.arg))
    return Div(a, b)


def power(b: Node, n: int) -> Node:
    if n == 0:
        return ONE
    if n == 1:
        return b
    cb = _cval(b)
    if cb is not None and (c := _fold(lambda u: u**n, cb)):
        return c
    return Pow(b, n)


def func(name: str, a: Node) -> Node:
    c = _cval(a)
    if c is not None and (folded := _fold(getattr(np, name), c)):
        return folded
    return Func(name, a)


# --- differentiation and substitution ---------------------------------------


def diff_node(node: Node, var: str) -> Node:
    if var not in VARIABLES:
        raise ValueError(f"unknown variable {var!r}")
    d = lambda n: diff_node(n, var)  # noqa: E731
    if isinstance(node, Const):
        return ZERO
    if isinstance(node, Var):
        return ONE if node.name == var else ZERO
    if isinstance(node, Neg):
        return neg(d(node.arg))
    if isinstance(node, Add):
        return add(d(node.left), d(node.right))
    if isinstance(node, Sub):
        return sub(d(node.left), d(node.right))
    if isinstance(node, Mul):
        return add(mul(d(node.left), node.right), mul(node.left, d(node.right)))
    if isinstance(node, Div):
        u, v = node.left, node.right
        return div(sub(mul(d(u), v), mul(u, d(v))), power(v, 2))
    if isinstance(node, Pow):
        if node.exp == 0:
            return ZERO
        return mul(mul(Const(float(node.exp)), power(node.base, node.exp - 1)), d(node.base))
    if isinstance(node, Func):
        inner = d(node.arg)
        if node.name == "sin":
            outer = func("cos", node.arg)
        elif node.name == "cos":
            outer = neg(func("sin", node.arg))
        else:
            outer = func("exp", node.arg)
        return mul(outer, inner)
    raise TypeError(f"not an expression node: {node!r}")


def substitute(node: Node, mapping: dict[str, Node]) -> Node:
    """Replace variables by subtrees, simplifying on the way back up."""
    s = lambda n: substitute(n, mapping)  # noqa: E731
    if isinstance(node, Const):
        return node
    if isinstance(node, Var):
        return mapping.get(node.name, node)
    if isinstance(node, Neg):
        return neg(s(node.arg))
    if isinstance(node, Pow):
        return power(s(node.base), node.exp)
    if isinstance(node, Func):
        return func(node.name, s(node.arg))
    build = {Add: add, Sub: sub, Mul: mul, Div: div}[type(node)]
    return build(s(node.left), s(node.right))


# --- compilation ------------------------------------------------------------


def _div(a, b):
    if np.any(np.asarray(b) == 0):
        raise DomainError("division by zero")
    return a / b


def _codegen(node: Node) -> str:
    if isinstance(node, Const):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{_codegen(node.arg)})"
    if isinstance(node, Pow):
        return f"({_codegen(node.base)} ** {node.exp})"
    if isinstance(node, Func):
        return f"_np.{node.name}({_codegen(node.arg)})"
    if isinstance(node, Div):
        return f"_div({_codegen(node.left)}, {_codegen(node.right)})"
    op = {Add: "+", Sub: "-", Mul: "*"}[type(node)]
    return f"({_codegen(node.left)} {op} {_codegen(node.right)})"


def _compile(node: Node):
    src = f"lambda x, y, z: {_codegen(node)}"
    return eval(src, {"_np": np, "_div": _div})  # noqa: S307 - generated from a parsed tree


class SurfaceExpr:
    """A parsed defining function with cached symbolic partial derivatives."""

    def __init__(self, root: Node, source: str | None = None):
        self.root = root
        self.source = source if source is not None else to_str(root)
        self._fn = _compile(root)
        self._partials: dict[str, SurfaceExpr] = {}

    def __repr__(self):
        return f"SurfaceExpr({to_str(self.root)!r})"

    def __str__(self):
        return to_str(self.root)

    def __eq__(self, other):
        return isinstance(other, SurfaceExpr) and self.root == other.root

    def __hash__(self):
        return hash(self.root)

    def __call__(self, x, y, z):
        with np.errstate(over="ignore", invalid="ignore"):
            out = self._fn(x, y, z)
        shape = np.broadcast(x, y, z).shape
        if shape and np.ndim(out) == 0:
            out = np.full(shape, float(out))
        if not np.all(np.isfinite(out)):
            raise DomainError(f"non-finite value of {self}")
        return out

    def partial(self, var: str) -> "SurfaceExpr":
        if var not in self._partials:
            self._partials[var] = SurfaceExpr(diff_node(self.root, var))
        return self._partials[var]

    def grad(self, x, y, z):
        return tuple(self.partial(v)(x, y, z) for v in VARIABLES)

    def horizontal(self, x, y, z):
        """``(Xf, Yf, Zf)`` in the left-invariant frame."""
        fx, fy, fz = self.grad(x, y, z)
        return fx - 0.5 * y * fz, fy + 0.5 * x * fz, fz

    def compose(self, mapping: dict[str, Node]) -> "SurfaceExpr":
        return SurfaceExpr(substitute(self.root, mapping))


@dataclass(frozen=True)
class HorizontalDerivs:
    Xf: float
    Yf: float
    Zf: float
    grad: tuple[float, float, float]


def parse(src: str) -> SurfaceExpr:
    return SurfaceExpr(parse_node(src), src)


def evaluate(e: SurfaceExpr, p) -> float:
    return float(e(*p))


def diff(e: SurfaceExpr, var: str) -> SurfaceExpr:
    return e.partial(var)


def horizontal_derivs(e: SurfaceExpr, p) -> HorizontalDerivs:
    x, y, z = (float(c) for c in p)
    fx, fy, fz = (float(v) for v in e.grad(x, y, z))
    return HorizontalDerivs(fx - 0.5 * y * fz, fy + 0.5 * x * fz, fz, (fx, fy, fz))
