"""Closed-form scalar expressions over chart coordinates.

Grammar (EBNF)::

    expr     = term , { ("+" | "-") , term } ;
    term     = unary , { ("*" | "/") , unary } ;
    unary    = "-" , unary | power ;
    power    = atom , [ "^" , exponent ] ;
    exponent = [ "-" ] , INT | "(" , [ "-" ] , INT , ")" ;
    atom     = NUMBER | NAME | FUNC , "(" , expr , ")" | "(" , expr , ")" ;
    FUNC     = "sin" | "cos" | "exp" | "ln" | "sqrt" ;

``NAME`` must be one of the chart's four coordinates or a declared parameter.
Expressions evaluate to :class:`~folia.jet.Jet` values of order 2, i.e. exact
value, gradient and Hessian with respect to the coordinates.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .jet import DIM, Jet, jmap, mul, reciprocal

FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt")


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int, expected: Sequence[str] = ()):
        self.offset = offset
        self.expected = tuple(expected)
        detail = f" (expected one of: {', '.join(self.expected)})" if expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, offset: int):
        self.name = name
        self.offset = offset
        super().__init__(f"unknown identifier {name!r} at offset {offset}")


class ArityError(ExprError):
    def __init__(self, func: str, nargs: int, offset: int):
        self.offset = offset
        super().__init__(f"{func}() takes 1 argument, got {nargs} at offset {offset}")


class UnboundParameterError(ExprError):
    pass


class DomainError(ArithmeticError):
    """An expression was evaluated outside the domain of one of its functions."""

    def __init__(self, subexpr: str, point, reason: str):
        self.subexpr = subexpr
        self.point = None if point is None else tuple(float(x) for x in point)
        self.reason = reason
        super().__init__(f"{reason} in {subexpr!r} at point {self.point}")


# -- AST --------------------------------------------------------------------


class Expr:
    __slots__ = ()

    def __str__(self) -> str:
        return render(self)


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str
    index: int


@dataclass(frozen=True)
class Param(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int


@dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr


# -- parsing ----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)
_ATOM_START = ("number", "identifier", "'('", "'-'")


class _Parser:
    def __init__(self, text: str, coords: Sequence[str], params):
        self.text = text
        self.coords = {name: i for i, name in enumerate(coords)}
        self.params = set(params)
        self.toks = self._tokenize(text)
        self.pos = 0

    @staticmethod
    def _tokenize(text: str):
        toks, i = [], 0
        while True:
            while i < len(text) and text[i].isspace():
                i += 1
            if i >= len(text):
                break
            m = _TOKEN.match(text, i)
            if m is None or m.end() == i:
                raise ExprSyntaxError(f"unexpected character {text[i]!r}", i)
            kind = m.lastgroup
            start = m.start(kind)
            toks.append((kind, m.group(kind), start))
            i = m.end()
        toks.append(("end", "", len(text)))
        return toks

    def peek(self):
        return self.toks[self.pos]

    def take(self):
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str):
        kind, value, off = self.peek()
        if kind != "op" or value != op:
            raise ExprSyntaxError(f"unexpected {value or 'end of input'!r}", off, (f"'{op}'",))
        self.pos += 1

    def parse(self) -> Expr:
        e = self.expr()
        kind, value, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(
                f"unexpected {value!r}", off, ("'+'", "'-'", "'*'", "'/'", "'^'", "end")
            )
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            e = BinOp(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.take()
            return Pow(base, self.exponent())
        return base

    def exponent(self) -> int:
        paren = False
        if self.peek()[:2] == ("op", "("):
            self.take()
            paren = True
        sign = 1
        if self.peek()[:2] == ("op", "-"):
            self.take()
            sign = -1
        kind, value, off = self.take()
        if kind != "num" or not value.isdigit():
            raise ExprSyntaxError("exponent must be an integer literal", off, ("integer",))
        if paren:
            self.expect_op(")")
        return sign * int(value)

    def atom(self) -> Expr:
        kind, value, off = self.take()
        if kind == "num":
            return Num(float(value))
        if kind == "name":
            if value in FUNCTIONS:
                self.expect_op("(")
                args = [self.expr()]
                while self.peek()[:2] == ("op", ","):
                    self.take()
                    args.append(self.expr())
                self.expect_op(")")
                if len(args) != 1:
                    raise ArityError(value, len(args), off)
                return Call(value, args[0])
            if value in self.coords:
                return Var(value, self.coords[value])
            if value in self.params:
                return Param(value)
            raise UnknownIdentifierError(value, off)
        if kind == "op" and value == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        raise ExprSyntaxError(f"unexpected {value or 'end of input'!r}", off, _ATOM_START)


def parse(text: str, coords: Sequence[str], params=()) -> Expr:
    """Parse ``text`` into an :class:`Expr` over ``coords`` and ``params``."""
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0, _ATOM_START)
    names = list(coords) + list(params)
    if len(set(names)) != len(names):
        raise ExprError("coordinate and parameter names must be distinct")
    return _Parser(text, coords, params).parse()


# -- rendering ----------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    if isinstance(e, Pow):
        return 4
    return 5


def render(e: Expr) -> str:
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, (Var, Param)):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({render(e.arg)})"
    if isinstance(e, Neg):
        inner = render(e.operand)
        return f"-({inner})" if isinstance(e.operand, BinOp) else f"-{inner}"
    if isinstance(e, Pow):
        base = render(e.base)
        if _prec(e.base) <= 4:
            base = f"({base})"
        exp = str(e.exponent) if e.exponent >= 0 else f"({e.exponent})"
        return f"{base}^{exp}"
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        left, right = render(e.left), render(e.right)
        if _prec(e.left) < p:
            left = f"({left})"
        if _prec(e.right) <= p:
            right = f"({right})"
        return f"{left} {e.op} {right}"
    raise TypeError(f"not an expression: {e!r}")


def free_params(e: Expr) -> set[str]:
    if isinstance(e, Param):
        return {e.name}
    if isinstance(e, (Num, Var)):
        return set()
    if isinstance(e, (Neg, Call)):
        return free_params(e.operand if isinstance(e, Neg) else e.arg)
    if isinstance(e, Pow):
        return free_params(e.base)
    return free_params(e.left) | free_params(e.right)


# -- symbolic partials (raw, unsimplified) ----------------------------------

ZERO, ONE = Num(0.0), Num(1.0)


def diff(e: Expr, index: int) -> Expr:
    """Partial derivative with respect to coordinate ``index``, as a new AST."""
    if isinstance(e, (Num, Param)):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.index == index else ZERO
    if isinstance(e, Neg):
        return Neg(diff(e.operand, index))
    if isinstance(e, BinOp):
        dl, dr = diff(e.left, index), diff(e.right, index)
        if e.op in "+-":
            return BinOp(e.op, dl, dr)
        if e.op == "*":
            return BinOp("+", BinOp("*", dl, e.right), BinOp("*", e.left, dr))
        num = BinOp("-", BinOp("*", dl, e.right), BinOp("*", e.left, dr))
        return BinOp("/", num, Pow(e.right, 2))
    if isinstance(e, Pow):
        n = e.exponent
        if n == 0:
            return ZERO
        return BinOp("*", BinOp("*", Num(float(n)), Pow(e.base, n - 1)), diff(e.base, index))
    if isinstance(e, Call):
        u, du = e.arg, diff(e.arg, index)
        outer = {
            "sin": Call("cos", u),
            "cos": Neg(Call("sin", u)),
            "exp": Call("exp", u),
            "ln": BinOp("/", ONE, u),
            "sqrt": BinOp("/", ONE, BinOp("*", Num(2.0), Call("sqrt", u))),
        }[e.func]
        return BinOp("*", outer, du)
    raise TypeError(f"not an expression: {e!r}")


# -- evaluation ---------------------------------------------------------------


class _Eval:
    """Vectorized jet evaluator.  Domain violations are masked per point."""

    def __init__(self, points: np.ndarray, bindings: Mapping[str, float]):
        self.points = points
        self.bindings = bindings
        self.n = points.shape[0]
        self.bad = np.zeros(self.n, dtype=bool)
        self.first_bad: tuple[str, str] | None = None

    def flag(self, mask, node: Expr, reason: str):
        mask = np.asarray(mask, dtype=bool)
        if mask.any():
            if self.first_bad is None:
                i = int(np.argmax(mask))
                self.first_bad = (render(node), reason, i)
            self.bad |= mask

    def const(self, value: float) -> Jet:
        return Jet.const(np.full(self.n, value))

    def run(self, e: Expr) -> Jet:
        if isinstance(e, Num):
            return self.const(e.value)
        if isinstance(e, Param):
            if e.name not in self.bindings:
                raise UnboundParameterError(f"parameter {e.name!r} is not bound")
            return self.const(float(self.bindings[e.name]))
        if isinstance(e, Var):
            d1 = np.zeros((self.n, DIM))
            d1[:, e.index] = 1.0
            return Jet(self.points[:, e.index].copy(), d1, np.zeros((self.n, DIM, DIM)))
        if isinstance(e, Neg):
            return -self.run(e.operand)
        if isinstance(e, BinOp):
            a, b = self.run(e.left), self.run(e.right)
            if e.op == "+":
                return a + b
            if e.op == "-":
                return a - b
            if e.op == "*":
                return mul(a, b)
            zero = b.val == 0.0
            self.flag(zero, e, "division by zero")
            return mul(a, reciprocal(self._safe(b, zero)))
        if isinstance(e, Pow):
            u = self.run(e.base)
            n = e.exponent
            if n < 0:
                zero = u.val == 0.0
                self.flag(zero, e, "negative power of zero")
                u = self._safe(u, zero)
            v = u.val
            f0 = v**n
            f1 = n * v ** (n - 1) if n != 0 else np.zeros_like(v)
            f2 = n * (n - 1) * v ** (n - 2) if n not in (0, 1) else np.zeros_like(v)
            return jmap(u, f0, f1, f2)
        if isinstance(e, Call):
            u = self.run(e.arg)
            v = u.val
            if e.func == "sin":
                s, c = np.sin(v), np.cos(v)
                return jmap(u, s, c, -s)
            if e.func == "cos":
                s, c = np.sin(v), np.cos(v)
                return jmap(u, c, -s, -c)
            if e.func == "exp":
                x = np.exp(v)
                return jmap(u, x, x, x)
            if e.func == "ln":
                bad = v <= 0.0
                self.flag(bad, e, "logarithm of non-positive value")
                v = np.where(bad, 1.0, v)
                return jmap(Jet(v, u.d1, u.d2), np.log(v), 1.0 / v, -1.0 / (v * v))
            if e.func == "sqrt":
                bad = v <= 0.0
                self.flag(bad, e, "square root of non-positive value")
                v = np.where(bad, 1.0, v)
                s = np.sqrt(v)
                return jmap(Jet(v, u.d1, u.d2), s, 0.5 / s, -0.25 / (s * v))
        raise TypeError(f"not an expression: {e!r}")

    @staticmethod
    def _safe(u: Jet, mask) -> Jet:
        if not np.any(mask):
            return u
        return Jet(np.where(mask, 1.0, u.val), u.d1, u.d2)


def _as_points(p) -> tuple[np.ndarray, bool]:
    arr = np.asarray(p, dtype=float)
    single = arr.ndim == 1
    arr = arr.reshape(-1, DIM)
    return arr, single


def evaluate(e: Expr, points, bindings: Mapping[str, float] | None = None):
    """Evaluate over a batch of points; returns ``(jet, bad_mask)``.

    Points where a partial function is undefined are flagged in ``bad_mask``
    and carry placeholder values; callers drop them.
    """
    pts, _ = _as_points(points)
    ev = _Eval(pts, bindings or {})
    jet = ev.run(e)
    bad = ev.bad | ~np.isfinite(jet.val)
    return jet, bad


def eval_jet2(e: Expr, p, bindings: Mapping[str, float] | None = None) -> Jet:
    """Exact value/gradient/Hessian of ``e`` at ``p`` (one point or a batch).

    Raises :class:`DomainError` naming the offending subexpression and point.
    """
    pts, single = _as_points(p)
    ev = _Eval(pts, bindings or {})
    jet = ev.run(e)
    if ev.first_bad is not None:
        sub, reason, i = ev.first_bad
        raise DomainError(sub, pts[i], reason)
    bad = ~np.isfinite(jet.val)
    if bad.any():
        i = int(np.argmax(bad))
        raise DomainError(render(e), pts[i], "non-finite value")
    return jet


def scalar(jet: Jet, i: int = 0) -> tuple[float, np.ndarray, np.ndarray]:
    """Unpack one point of a scalar jet as ``(value, grad, hess)``."""
    return float(jet.val[i]), jet.d1[i], jet.d2[i]
