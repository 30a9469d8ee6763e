"""Small arithmetic expression language for boundary data and source terms.

Grammar: numbers, variables ``x1..xd``, the constant ``pi``, binary
``+ - * / ^`` (``^`` right-associative and binding tighter than unary minus),
unary minus, and the functions ``exp sin cos abs sqrt``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numba as nb
import numpy as np

from .errors import EvalDomainError, ParseError

FUNCTIONS = ("exp", "sin", "cos", "abs", "sqrt")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based, as written


@dataclass(frozen=True)
class Pi:
    pass


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Pi, Neg, BinOp, Call]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)

# binding powers
_INFIX = {"+": (10, 11), "-": (10, 11), "*": (20, 21), "/": (20, 21), "^": (41, 40)}
_PREFIX_MINUS = 30


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(source):
            if source[pos:].strip() == "":
                break
            m = _TOKEN.match(source, pos)
            if m is None or m.end() == pos:
                bad = pos + len(source[pos:]) - len(source[pos:].lstrip())
                raise ParseError(bad, f"unexpected character {source[bad]!r}")
            kind = m.lastgroup
            start = m.start(kind)
            self.tokens.append((kind, m.group(kind), start))
            pos = m.end()
        self.tokens.append(("end", "", len(source)))
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        kind, val, pos = self.advance()
        if val != text or kind == "end":
            raise ParseError(pos, f"expected {text!r}")

    def parse(self) -> Node:
        node = self.expression(0)
        kind, val, pos = self.peek()
        if kind != "end":
            raise ParseError(pos, f"unexpected {val!r}")
        return node

    def expression(self, min_bp: int) -> Node:
        left = self.prefix()
        while True:
            kind, op, pos = self.peek()
            if kind != "op" or op not in _INFIX:
                break
            lbp, rbp = _INFIX[op]
            if lbp < min_bp:
                break
            self.advance()
            left = BinOp(op, left, self.expression(rbp))
        return left

    def prefix(self) -> Node:
        kind, val, pos = self.advance()
        if kind == "num":
            return Num(float(val))
        if kind == "op" and val == "-":
            return Neg(self.expression(_PREFIX_MINUS))
        if kind == "op" and val == "+":
            return self.expression(_PREFIX_MINUS)
        if kind == "op" and val == "(":
            node = self.expression(0)
            self.expect(")")
            return node
        if kind == "name":
            if val == "pi":
                return Pi()
            m = re.fullmatch(r"x([1-9]\d*)", val)
            if m:
                return Var(int(m.group(1)))
            if val in FUNCTIONS:
                if self.peek()[1] != "(":
                    raise ParseError(self.peek()[2], f"expected '(' after {val}")
                self.advance()
                arg = self.expression(0)
                self.expect(")")
                return Call(val, arg)
            raise ParseError(pos, f"unknown identifier {val!r}")
        if kind == "end":
            raise ParseError(pos, "unexpected end of input")
        raise ParseError(pos, f"unexpected {val!r}")


def to_text(node: Node) -> str:
    """Fully parenthesised text that parses back to the same tree."""
    if isinstance(node, Num):
        text = repr(float(node.value))
        return f"({text})" if node.value < 0 or text in ("inf", "nan") else text
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Pi):
        return "pi"
    if isinstance(node, Neg):
        return f"(-{to_text(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_text(node.left)} {node.op} {to_text(node.right)})"
    return f"{node.func}({to_text(node.arg)})"


def max_var(node: Node) -> int:
    if isinstance(node, Var):
        return node.index
    if isinstance(node, Neg):
        return max_var(node.operand)
    if isinstance(node, BinOp):
        return max(max_var(node.left), max_var(node.right))
    if isinstance(node, Call):
        return max_var(node.arg)
    return 0


def _power(base, expo):
    base = np.asarray(base, dtype=float)
    expo = np.asarray(expo, dtype=float)
    integral = np.equal(np.floor(expo), expo)
    if np.any((base < 0) & ~integral):
        raise EvalDomainError("negative base with non-integer exponent")
    if np.any((base == 0) & (expo < 0)):
        raise EvalDomainError("zero raised to a negative power")
    return np.power(base, expo)


def _divide(a, b):
    if np.any(np.asarray(b) == 0):
        raise EvalDomainError("division by zero")
    return np.divide(a, b)


def _sqrt(a):
    if np.any(np.asarray(a) < 0):
        raise EvalDomainError("square root of a negative number")
    return np.sqrt(a)


_BINARY = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": _divide, "^": _power}
_UNARY = {"exp": np.exp, "sin": np.sin, "cos": np.cos, "abs": np.abs, "sqrt": _sqrt}


def _eval(node: Node, point):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return point[node.index - 1]
    if isinstance(node, Pi):
        return math.pi
    if isinstance(node, Neg):
        return np.negative(_eval(node.operand, point))
    if isinstance(node, BinOp):
        return _BINARY[node.op](_eval(node.left, point), _eval(node.right, point))
    return _UNARY[node.func](_eval(node.arg, point))


def _source(node: Node) -> str:
    if isinstance(node, Num):
        return f"({float(node.value)!r})"
    if isinstance(node, Var):
        return f"x[{node.index - 1}]"
    if isinstance(node, Pi):
        return "math.pi"
    if isinstance(node, Neg):
        return f"(-{_source(node.operand)})"
    if isinstance(node, BinOp):
        a, b = _source(node.left), _source(node.right)
        if node.op == "/":
            return f"_nb_div({a}, {b})"
        if node.op == "^":
            return f"_nb_pow({a}, {b})"
        return f"({a} {node.op} {b})"
    inner = _source(node.arg)
    return {
        "exp": f"math.exp({inner})",
        "sin": f"math.sin({inner})",
        "cos": f"math.cos({inner})",
        "abs": f"abs({inner})",
        "sqrt": f"_nb_sqrt({inner})",
    }[node.func]


# kernel-side domain errors surface as NaN; the path engine checks finiteness
@nb.njit(inline="always")
def _nb_div(a, b):
    return a / b if b != 0.0 else math.nan


@nb.njit(inline="always")
def _nb_pow(a, b):
    if a < 0.0 and math.floor(b) != b:
        return math.nan
    if a == 0.0 and b < 0.0:
        return math.nan
    return a**b


@nb.njit(inline="always")
def _nb_sqrt(a):
    return math.sqrt(a) if a >= 0.0 else math.nan


@lru_cache(maxsize=128)
def _compile(source: str):
    namespace = {"math": math, "_nb_div": _nb_div, "_nb_pow": _nb_pow, "_nb_sqrt": _nb_sqrt}
    exec(f"def _expr_fn(x):\n    return {source}\n", namespace)
    return nb.njit(nogil=True)(namespace["_expr_fn"])


@dataclass(frozen=True)
class Expr:
    root: Node
    source: str = ""

    def __str__(self) -> str:
        return to_text(self.root)

    @property
    def dim_required(self) -> int:
        return max_var(self.root)

    def evaluate(self, point):
        """Evaluate at ``point``; ``point[i]`` is the value (or array) of ``x{i+1}``."""
        need = self.dim_required
        if need and len(point) < need:
            raise ValueError(f"expression uses x{need} but the point has {len(point)} coordinates")
        with np.errstate(all="ignore"):
            out = _eval(self.root, point)
        if np.ndim(out) == 0:
            return float(out)
        return np.asarray(out, dtype=float)

    def __call__(self, point):
        return self.evaluate(point)

    def compile_numba(self):
        """njit function ``f(x) -> float`` of a coordinate vector."""
        return _compile(_source(self.root))

    def is_constant(self) -> bool:
        return self.dim_required == 0


def parse(source: str) -> Expr:
    if not isinstance(source, str):
        raise TypeError("expression source must be text")
    return Expr(_Parser(source).parse(), source)


def evaluate(expr: Expr, point):
    return expr.evaluate(point)


# ---------------------------------------------------------------------------
# builtin catalog
# ---------------------------------------------------------------------------


def from_descriptor(desc) -> Expr:
    """Build an expression from text or a builtin descriptor.

    Descriptors: ``{"builtin": "constant", "value": c}``,
    ``{"builtin": "linear", "coeffs": [a1, ...], "offset": c}``,
    ``{"builtin": "polynomial", "terms": [[coef, [p1, p2, ...]], ...]}``.
    """
    if isinstance(desc, (int, float)) and not isinstance(desc, bool):
        return Expr(Num(float(desc)) if desc >= 0 else Neg(Num(-float(desc))), repr(desc))
    if isinstance(desc, str):
        return parse(desc)
    if not isinstance(desc, dict) or "builtin" not in desc:
        raise ValueError(f"cannot interpret {desc!r} as an expression")
    kind = desc["builtin"]
    if kind == "constant":
        text = _num(desc["value"])
    elif kind == "linear":
        parts = [f"{_num(a)} * x{i + 1}" for i, a in enumerate(desc["coeffs"])]
        parts.append(_num(desc.get("offset", 0.0)))
        text = " + ".join(parts)
    elif kind == "polynomial":
        monos = []
        for coef, powers in desc["terms"]:
            factors = [_num(coef)] + [f"x{i + 1}^{int(p)}" for i, p in enumerate(powers) if p]
            monos.append(" * ".join(factors))
        text = " + ".join(monos) if monos else "0"
    else:
        raise ValueError(f"unknown builtin {kind!r}")
    return parse(text)


def _num(v) -> str:
    v = float(v)
    return f"({v!r})" if v < 0 else repr(v)
