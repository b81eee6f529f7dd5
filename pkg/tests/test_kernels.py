"""Compiled and pure-Python jet kernels must agree bit-for-bit."""

import numpy as np
import pytest

from jlm_lab import backend
from jlm_lab import _jetkernel_py as kpy
from jlm_lab.expr import parse

from conftest import tame_random_exprs

kcy = pytest.importorskip(
    "jlm_lab._jetkernel_cy", reason="compiled kernel not built"
)


def _run(kernel, expr, point, order):
    tape = expr._tape
    nv = len(expr.vars)
    val = np.zeros(tape.size)
    grad = np.zeros((tape.size, nv)) if order >= 1 else np.zeros((0, 0))
    hess = np.zeros((tape.size, nv, nv)) if order >= 2 else np.zeros((0, 0, 0))
    status = kernel.eval_tape(
        tape.ops, tape.arg_a, tape.arg_b, tape.consts,
        np.asarray(point, dtype=float), order, val, grad, hess,
    )
    return tuple(status), val, grad, hess


def test_backend_reports_selection():
    assert backend.BACKEND in ("cython", "python")


@pytest.mark.parametrize("order", [0, 1, 2])
def test_kernels_bit_identical_on_random_tapes(order):
    rng = np.random.default_rng(11)
    for expr, point in tame_random_exprs(seed=500 + order, count=300):
        other = rng.uniform(0.6, 1.4, size=len(expr.vars))
        for x in (point, other):
            status_a, val_a, grad_a, hess_a = _run(kcy, expr, x, order)
            status_b, val_b, grad_b, hess_b = _run(kpy, expr, x, order)
            assert status_a == status_b
            if status_a[0] == 0:
                assert np.array_equal(val_a, val_b)
                if order >= 1:
                    assert np.array_equal(grad_a, grad_b)
                if order >= 2:
                    assert np.array_equal(hess_a, hess_b)


@pytest.mark.parametrize(
    "source,point",
    [
        ("ln(q)", [0.0]),
        ("ln(q)", [-1.0]),
        ("sqrt(q)", [-2.0]),
        ("1/(q-1)", [1.0]),
        ("q^0.5", [-1.0]),
        ("q^-3", [0.0]),
    ],
)
def test_kernels_agree_on_domain_errors(source, point):
    expr = parse(source, ("q",))
    for order in (0, 1, 2):
        ra = _run(kcy, expr, point, order)
        rb = _run(kpy, expr, point, order)
        assert ra[0] == rb[0]  # same (status, index, bad value)
        assert ra[0][0] != 0


def test_kernels_agree_on_spec_systems():
    cases = [
        ("p^2/2 + q^2/2 + 0.3*s", ("q", "p", "s"), [1.2, -0.7, 2.5]),
        ("(p + 4*q)^(-5)", ("q", "p"), [1.0, 1.0]),
        ("exp(q)*p^2", ("q", "p"), [0.3, 1.7]),
        ("(p1^2 + p2^2)/2 + (q1^2 + q2^2)/2 + 0.3*s",
         ("q1", "q2", "p1", "p2", "s"), [0.1, 0.2, 0.3, 0.4, 0.5]),
    ]
    for source, names, point in cases:
        expr = parse(source, names)
        ra = _run(kcy, expr, point, 2)
        rb = _run(kpy, expr, point, 2)
        assert ra[0] == rb[0]
        assert np.array_equal(ra[1], rb[1])
        assert np.array_equal(ra[2], rb[2])
        assert np.array_equal(ra[3], rb[3])
