"""Parse and evaluate scalar expressions of named phase variables.

Expressions carry exact first and second derivatives, obtained by propagating
(value, gradient, Hessian) triples through the instruction tape compiled from
the syntax tree.  Supported grammar (tightest first)::

    power      base^exponent, exponent a constant expression, right-assoc
    unary      -x
    factor     *, /
    sum        +, -

plus parentheses and the functions exp, ln, sin, cos, sqrt.  An ``Expr`` is
immutable and safe to evaluate concurrently.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .backend import eval_tape
from .errors import DomainError, ExprSyntaxError, UnknownVariableError

__all__ = ["Expr", "Jet2", "parse", "eval_jet2", "constant", "variable"]

FUNCTIONS = ("exp", "ln", "sin", "cos", "sqrt")

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER_RE = re.compile(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")


# --- syntax tree ----------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # 'neg' or a function name
    arg: object


@dataclass(frozen=True)
class Binary:
    op: str  # '+', '-', '*', '/'
    lhs: object
    rhs: object


@dataclass(frozen=True)
class Pow:
    base: object
    exponent: float  # constant real exponent only


@dataclass(frozen=True)
class Jet2:
    """Second-order jet of a scalar function at a point."""

    value: float
    grad: np.ndarray
    hess: np.ndarray


# --- parsing --------------------------------------------------------------

class _Parser:
    """Recursive-descent parser over a flat character cursor."""

    def __init__(self, source, variables):
        self.src = source
        self.pos = 0
        self.vars = variables

    def fail(self, message, position=None):
        raise ExprSyntaxError(message, self.pos if position is None else position)

    def skip_ws(self):
        while self.pos < len(self.src) and self.src[self.pos].isspace():
            self.pos += 1

    def peek(self):
        self.skip_ws()
        return self.src[self.pos] if self.pos < len(self.src) else ""

    def accept(self, chars):
        ch = self.peek()
        if ch and ch in chars:
            self.pos += 1
            return ch
        return ""

    def expect(self, ch):
        if not self.accept(ch):
            self.fail(f"expected '{ch}'")

    def parse(self):
        node = self.sum()
        if self.peek():
            self.fail("unexpected trailing input")
        return node

    def sum(self):
        node = self.factor()
        while True:
            op = self.accept("+-")
            if not op:
                return node
            node = Binary(op, node, self.factor())

    def factor(self):
        node = self.unary()
        while True:
            op = self.accept("*/")
            if not op:
                return node
            node = Binary(op, node, self.unary())

    def unary(self):
        if self.accept("-"):
            return Unary("neg", self.unary())
        return self.power()

    def power(self):
        node = self.atom()
        if self.accept("^"):
            at = self.pos
            exponent = self.unary()  # right-associative, may carry a sign
            node = Pow(node, self.fold_exponent(exponent, at))
        return node

    def fold_exponent(self, node, position):
        if isinstance(node, Const):
            return node.value
        if isinstance(node, Var):
            self.fail("exponent must be a constant expression", position)
        if isinstance(node, Unary):
            arg = self.fold_exponent(node.arg, position)
            if node.op == "neg":
                return -arg
            try:
                value = {
                    "exp": math.exp, "ln": math.log, "sin": math.sin,
                    "cos": math.cos, "sqrt": math.sqrt,
                }[node.op](arg)
            except ValueError:
                self.fail("constant exponent outside function domain", position)
            return value
        if isinstance(node, Pow):
            return self.fold_exponent(node.base, position) ** node.exponent
        lhs = self.fold_exponent(node.lhs, position)
        rhs = self.fold_exponent(node.rhs, position)
        if node.op == "+":
            return lhs + rhs
        if node.op == "-":
            return lhs - rhs
        if node.op == "*":
            return lhs * rhs
        if rhs == 0.0:
            self.fail("division by zero in constant exponent", position)
        return lhs / rhs

    def atom(self):
        ch = self.peek()
        start = self.pos
        if ch == "(":
            self.pos += 1
            node = self.sum()
            self.expect(")")
            return node
        m = _NUMBER_RE.match(self.src, self.pos)
        if m and (ch.isdigit() or ch == "."):
            self.pos = m.end()
            return Const(float(m.group()))
        m = _IDENT_RE.match(self.src, self.pos)
        if m:
            name = m.group()
            self.pos = m.end()
            if name in FUNCTIONS:
                self.expect("(")
                node = self.sum()
                self.expect(")")
                return Unary(name, node)
            if name not in self.vars:
                raise UnknownVariableError(name, start)
            return Var(name)
        self.fail("expected a number, variable, function or '('")


def _check_variables(variables):
    names = tuple(variables)
    seen = set()
    for name in names:
        if not _IDENT_RE.fullmatch(name):
            raise ValueError(f"invalid variable name {name!r}")
        if name in FUNCTIONS:
            raise ValueError(f"variable name {name!r} collides with a function")
        if name in seen:
            raise ValueError(f"duplicate variable name {name!r}")
        seen.add(name)
    return names


# --- printing -------------------------------------------------------------

_PREC_SUM, _PREC_FACTOR, _PREC_UNARY, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 9


def _level(node):
    if isinstance(node, Const):
        return _PREC_ATOM if node.value >= 0 else _PREC_UNARY
    if isinstance(node, (Var,)):
        return _PREC_ATOM
    if isinstance(node, Unary):
        return _PREC_UNARY if node.op == "neg" else _PREC_ATOM
    if isinstance(node, Pow):
        return _PREC_POW
    return _PREC_SUM if node.op in "+-" else _PREC_FACTOR


def _fmt(node, min_level):
    level = _level(node)
    if isinstance(node, Const):
        text = repr(node.value)
    elif isinstance(node, Var):
        text = node.name
    elif isinstance(node, Unary):
        text = f"-{_fmt(node.arg, _PREC_UNARY)}" if node.op == "neg" \
            else f"{node.op}({_fmt(node.arg, 0)})"
    elif isinstance(node, Pow):
        text = f"{_fmt(node.base, _PREC_ATOM)}^{repr(node.exponent)}"
    else:
        text = f"{_fmt(node.lhs, level)} {node.op} {_fmt(node.rhs, level + 1)}"
    return f"({text})" if level < min_level else text


# --- tape compilation -----------------------------------------------------

_OPCODES = {"+": 2, "-": 3, "*": 4, "/": 5}
_UNARY_OPCODES = {"neg": 6, "exp": 8, "ln": 9, "sin": 10, "cos": 11, "sqrt": 12}

_STATUS_MESSAGES = {
    1: "division by zero",
    2: "logarithm of a non-positive value",
    3: "square root of a non-positive value",
    4: "fractional power of a non-positive base",
    5: "zero base raised to a negative exponent",
}

_EMPTY_GRAD = np.zeros((0, 0))
_EMPTY_HESS = np.zeros((0, 0, 0))


class _Tape:
    __slots__ = ("ops", "arg_a", "arg_b", "consts", "labels", "size")

    def __init__(self, root, var_index):
        ops, arg_a, arg_b, consts, labels = [], [], [], [], []

        def emit(op, a, b, c, label):
            ops.append(op)
            arg_a.append(a)
            arg_b.append(b)
            consts.append(c)
            labels.append(label)
            return len(ops) - 1

        def walk(node):
            if isinstance(node, Const):
                return emit(0, -1, -1, node.value, repr(node.value))
            if isinstance(node, Var):
                return emit(1, var_index[node.name], -1, 0.0, node.name)
            if isinstance(node, Unary):
                return emit(_UNARY_OPCODES[node.op], walk(node.arg), -1, 0.0, node.op)
            if isinstance(node, Pow):
                return emit(7, walk(node.base), -1, node.exponent, f"^{node.exponent!r}")
            ra = walk(node.lhs)
            rb = walk(node.rhs)
            return emit(_OPCODES[node.op], ra, rb, 0.0, node.op)

        walk(root)
        self.ops = np.asarray(ops, dtype=np.intc)
        self.arg_a = np.asarray(arg_a, dtype=np.intc)
        self.arg_b = np.asarray(arg_b, dtype=np.intc)
        self.consts = np.asarray(consts, dtype=np.float64)
        self.labels = tuple(labels)
        self.size = len(ops)


# --- the Expr type --------------------------------------------------------

class Expr:
    """Immutable scalar expression over an ordered tuple of variables."""

    __slots__ = ("root", "vars", "_index", "_tape", "_referenced")

    def __init__(self, root, variables):
        object.__setattr__(self, "root", root)
        object.__setattr__(self, "vars", _check_variables(variables))
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(self.vars)})
        object.__setattr__(self, "_tape", _Tape(root, self._index))
        object.__setattr__(self, "_referenced", frozenset(_collect_vars(root)))

    def __setattr__(self, name, value):
        raise AttributeError("Expr is immutable")

    @classmethod
    def parse(cls, source, variables):
        """Parse infix ``source`` over the ordered variable names."""
        names = _check_variables(variables)
        if not source or not source.strip():
            raise ExprSyntaxError("empty expression", 0)
        return cls(_Parser(source, names).parse(), names)

    @classmethod
    def constant(cls, value, variables):
        return cls(Const(float(value)), variables)

    @classmethod
    def variable(cls, name, variables):
        if name not in variables:
            raise UnknownVariableError(name)
        return cls(Var(name), variables)

    @property
    def referenced(self):
        """Names of variables that actually occur in the tree."""
        return self._referenced

    def with_vars(self, variables):
        """Re-index the same expression over a different variable tuple."""
        names = _check_variables(variables)
        missing = self._referenced - set(names)
        if missing:
            raise UnknownVariableError(sorted(missing)[0])
        return Expr(self.root, names)

    # evaluation ---------------------------------------------------------

    def _run(self, point, order):
        pt = np.ascontiguousarray(point, dtype=np.float64)
        if pt.shape != (len(self.vars),):
            raise ValueError(
                f"point of length {pt.size} for {len(self.vars)} variables {self.vars}"
            )
        tape = self._tape
        nv = len(self.vars)
        val = np.zeros(tape.size)
        grad = np.zeros((tape.size, nv)) if order >= 1 else _EMPTY_GRAD
        hess = np.zeros((tape.size, nv, nv)) if order >= 2 else _EMPTY_HESS
        status, where, bad = eval_tape(
            tape.ops, tape.arg_a, tape.arg_b, tape.consts, pt, order, val, grad, hess
        )
        if status:
            raise DomainError(
                _STATUS_MESSAGES[status],
                node=f"{tape.labels[where]} (instruction {where} of '{self}')",
                value=bad,
            )
        return val, grad, hess

    def evaluate(self, point):
        """Value at ``point`` (ordered like ``vars``)."""
        val, _, _ = self._run(point, 0)
        return float(val[-1])

    def value_and_grad(self, point):
        val, grad, _ = self._run(point, 1)
        return float(val[-1]), grad[-1].copy()

    def eval_jet2(self, point):
        """Value, gradient and Hessian at ``point``."""
        val, grad, hess = self._run(point, 2)
        return Jet2(float(val[-1]), grad[-1].copy(), hess[-1].copy())

    # combinators ----------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Expr):
            if other.vars != self.vars:
                raise ValueError(f"variable mismatch: {self.vars} vs {other.vars}")
            return other.root
        if isinstance(other, (int, float)):
            return Const(float(other))
        return None

    def _binary(self, op, other, flip=False):
        rhs = self._coerce(other)
        if rhs is None:
            return NotImplemented
        lhs, rhs = (rhs, self.root) if flip else (self.root, rhs)
        return Expr(Binary(op, lhs, rhs), self.vars)

    def __add__(self, other):
        return self._binary("+", other)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary("-", other)

    def __rsub__(self, other):
        return self._binary("-", other, flip=True)

    def __mul__(self, other):
        return self._binary("*", other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary("/", other)

    def __rtruediv__(self, other):
        return self._binary("/", other, flip=True)

    def __neg__(self):
        return Expr(Unary("neg", self.root), self.vars)

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            return NotImplemented
        return Expr(Pow(self.root, float(exponent)), self.vars)

    def __str__(self):
        return _fmt(self.root, 0)

    def __repr__(self):
        return f"Expr({str(self)!r}, vars={self.vars!r})"


def _collect_vars(node, acc=None):
    if acc is None:
        acc = set()
    if isinstance(node, Var):
        acc.add(node.name)
    elif isinstance(node, Unary):
        _collect_vars(node.arg, acc)
    elif isinstance(node, Binary):
        _collect_vars(node.lhs, acc)
        _collect_vars(node.rhs, acc)
    elif isinstance(node, Pow):
        _collect_vars(node.base, acc)
    return acc


# module-level conveniences matching the operation names used elsewhere

def parse(source, variables):
    """Parse expression text over ordered variable names; see Expr.parse."""
    return Expr.parse(source, variables)


def eval_jet2(expression, point):
    """Second-order jet of ``expression`` at ``point``."""
    return expression.eval_jet2(point)


def constant(value, variables):
    return Expr.constant(value, variables)


def variable(name, variables):
    return Expr.variable(name, variables)
