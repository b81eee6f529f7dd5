"""Shared test helpers: random expression trees and an independent
high-precision finite-difference oracle (mpmath tree walk, step 1e-5)."""

import mpmath
import numpy as np
import pytest

from jlm_lab.expr import Binary, Const, Expr, Pow, Unary, Var

mpmath.mp.dps = 40

_UNARY_FUNCS = ("neg", "exp", "ln", "sin", "cos", "sqrt")
_EXPONENTS = (-3.0, -2.0, -1.0, 2.0, 3.0, 0.5, 1.5, -0.5)


def random_tree(rng, names, depth):
    """Random expression tree of depth <= ``depth`` over variable names."""
    if depth == 0 or rng.uniform() < 0.3:
        if rng.uniform() < 0.65:
            return Var(names[rng.integers(len(names))])
        return Const(round(float(rng.uniform(0.5, 2.0)), 3))
    roll = rng.uniform()
    if roll < 0.55:
        op = "+-*/"[rng.integers(4)]
        return Binary(op, random_tree(rng, names, depth - 1),
                      random_tree(rng, names, depth - 1))
    if roll < 0.8:
        op = _UNARY_FUNCS[rng.integers(len(_UNARY_FUNCS))]
        return Unary(op, random_tree(rng, names, depth - 1))
    return Pow(random_tree(rng, names, depth - 1),
               _EXPONENTS[rng.integers(len(_EXPONENTS))])


def tame_random_exprs(seed, count, names=("q", "p"), depth=6, point_low=0.6,
                      point_high=1.4, value_cap=50.0, deriv_cap=100.0):
    """Yield ``count`` (expr, point) pairs whose jets are finite and modest.

    Rejection keeps the finite-difference comparison well-conditioned; the
    accepted expressions still cover the full operator set.
    """
    rng = np.random.default_rng(seed)
    produced = 0
    while produced < count:
        tree = random_tree(rng, names, depth)
        expr = Expr(tree, names)
        point = rng.uniform(point_low, point_high, size=len(names))
        try:
            jet = expr.eval_jet2(point)
        except Exception:
            continue
        if not np.isfinite(jet.value) or abs(jet.value) > value_cap:
            continue
        if not np.isfinite(jet.grad).all() or np.abs(jet.grad).max() > deriv_cap:
            continue
        if not np.isfinite(jet.hess).all() or np.abs(jet.hess).max() > deriv_cap:
            continue
        produced += 1
        yield expr, point


class OracleDomainError(Exception):
    pass


def mp_value(node, values):
    """Evaluate a syntax tree in mpmath arithmetic (values: name -> mpf)."""
    if isinstance(node, Const):
        return mpmath.mpf(node.value)
    if isinstance(node, Var):
        return values[node.name]
    if isinstance(node, Pow):
        base = mp_value(node.base, values)
        c = mpmath.mpf(node.exponent)
        if base <= 0 and c != mpmath.floor(c):
            raise OracleDomainError
        if base == 0 and c < 0:
            raise OracleDomainError
        return mpmath.power(base, c)
    if isinstance(node, Unary):
        arg = mp_value(node.arg, values)
        if node.op == "neg":
            return -arg
        if node.op == "exp":
            return mpmath.exp(arg)
        if node.op == "ln":
            if arg <= 0:
                raise OracleDomainError
            return mpmath.log(arg)
        if node.op == "sin":
            return mpmath.sin(arg)
        if node.op == "cos":
            return mpmath.cos(arg)
        if arg <= 0:  # sqrt
            raise OracleDomainError
        return mpmath.sqrt(arg)
    lhs = mp_value(node.lhs, values)
    rhs = mp_value(node.rhs, values)
    if node.op == "+":
        return lhs + rhs
    if node.op == "-":
        return lhs - rhs
    if node.op == "*":
        return lhs * rhs
    if rhs == 0:
        raise OracleDomainError
    return lhs / rhs


def fd_jet(expr, point, step=1e-5):
    """Central finite differences of the tree at ``point``, computed in
    mpmath so the stencil arithmetic adds no rounding noise of its own.
    Returns (value, grad, hess) as floats or None on domain trouble."""
    names = expr.vars
    h = mpmath.mpf(step)

    def f(shift):
        values = {
            name: mpmath.mpf(float(point[i])) + shift.get(i, 0) * h
            for i, name in enumerate(names)
        }
        return mp_value(expr.root, values)

    try:
        nv = len(names)
        f0 = f({})
        grad = np.empty(nv)
        hess = np.empty((nv, nv))
        for i in range(nv):
            fp = f({i: 1})
            fm = f({i: -1})
            grad[i] = float((fp - fm) / (2 * h))
            hess[i, i] = float((fp - 2 * f0 + fm) / (h * h))
        for i in range(nv):
            for j in range(i + 1, nv):
                fpp = f({i: 1, j: 1})
                fpm = f({i: 1, j: -1})
                fmp = f({i: -1, j: 1})
                fmm = f({i: -1, j: -1})
                hess[i, j] = hess[j, i] = float((fpp - fpm - fmp + fmm) / (4 * h * h))
        return float(f0), grad, hess
    except OracleDomainError:
        return None


@pytest.fixture
def rng():
    return np.random.default_rng(42)
