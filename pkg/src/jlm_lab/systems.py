"""Dissipative vector fields in Darboux coordinates.

Five families are supported, all realized on R^dim with the global coordinate
ordering (q1..qn, p1..pn[, s]):

* ``conservative``            qdot = dH/dp,  pdot = -dH/dq
* ``conformal``               adds constant linear damping:  pdot -= gamma * p
* ``contact``                 odd-dimensional, extra action-like variable s
* ``generalized_conformal``   position-dependent damping:    pdot -= K(q) * p
* ``lienard``                 qddot + f(q) qdot + g(q) = 0 in first-order form

Phase points are plain float arrays in the ordering above.  Velocities come
from first-order jets of the defining scalar; Jacobians and divergences from
second-order jets, so the conservative divergence vanishes to rounding rather
than to a finite-difference tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConstraintError, DomainError, NonpositiveMassError
from .expr import Expr

__all__ = [
    "FieldSpec",
    "phase_variables",
    "build_hamiltonian_field",
    "build_conformal_field",
    "build_contact_field",
    "build_generalized_conformal_field",
    "build_lienard_field",
    "field_eval",
    "field_divergence",
    "field_jacobian",
    "velocity_and_divergence",
    "divergence_closed_form",
]

FAMILIES = ("conservative", "conformal", "contact", "generalized_conformal", "lienard")


def phase_variables(n, contact=False):
    """Ordered Darboux variable names: (q.., p..[, s]); q/p aliases for n=1."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    if n == 1:
        names = ("q", "p")
    else:
        names = tuple(f"q{i}" for i in range(1, n + 1)) + tuple(
            f"p{i}" for i in range(1, n + 1)
        )
    return names + ("s",) if contact else names


def _as_phase_expr(e, n, contact=False):
    names = phase_variables(n, contact)
    if isinstance(e, str):
        return Expr.parse(e, names)
    if isinstance(e, Expr):
        return e if e.vars == names else e.with_vars(names)
    raise TypeError(f"expected Expr or str, got {type(e).__name__}")


@dataclass(frozen=True, eq=False)
class FieldSpec:
    """A vector field on phase space, defined by family plus expressions.

    Immutable and shareable; all evaluation goes through the pure functions
    ``field_eval`` / ``field_divergence`` / ``field_jacobian``.
    """

    family: str
    n: int
    dim: int
    hamiltonian: Expr | None = None  # H (symplectic) or h (contact)
    gamma: float = 0.0
    K: Expr | None = None
    f: Expr | None = None
    g: Expr | None = None
    mass: float = 1.0
    note: str = ""

    @property
    def variables(self):
        return phase_variables(self.n, contact=self.family == "contact")

    def describe(self):
        parts = [f"family={self.family}", f"n={self.n}", f"dim={self.dim}"]
        if self.hamiltonian is not None:
            parts.append(f"H={self.hamiltonian}")
        if self.family == "conformal":
            parts.append(f"gamma={self.gamma!r}")
        if self.K is not None:
            parts.append(f"K={self.K}")
        if self.f is not None:
            parts.append(f"f={self.f}, g={self.g}, mass={self.mass!r}")
        return ", ".join(parts)


def build_hamiltonian_field(H, n=1):
    """Conservative field (dH/dp, -dH/dq)."""
    return FieldSpec("conservative", n, 2 * n, hamiltonian=_as_phase_expr(H, n))


def build_conformal_field(H, gamma, n=1):
    """Conformal field: conservative part minus gamma times fiber dilation."""
    return FieldSpec(
        "conformal", n, 2 * n, hamiltonian=_as_phase_expr(H, n), gamma=float(gamma)
    )


def build_contact_field(h, n=1):
    """Contact field of h on (q.., p.., s):
    qdot = dh/dp, pdot = -dh/dq - p dh/ds, sdot = p.dh/dp - h."""
    return FieldSpec(
        "contact", n, 2 * n + 1, hamiltonian=_as_phase_expr(h, n, contact=True)
    )


def build_generalized_conformal_field(H, K, n=1):
    """Position-dependent damping: pdot = -dH/dq - K(q) p."""
    H = _as_phase_expr(H, n)
    K = _as_phase_expr(K, n)
    q_names = set(phase_variables(n)[:n])
    bad = K.referenced - q_names
    if bad:
        raise ConstraintError(
            f"K must depend on configuration variables only; found {sorted(bad)}"
        )
    note = ""
    if n > 1:
        note = (
            "n>1 generalized conformal field: the compatibility of the defining "
            "one-form condition is verified pointwise through the divergence "
            "formula only, not re-derived"
        )
    return FieldSpec("generalized_conformal", n, 2 * n, hamiltonian=H, K=K, note=note)


def build_lienard_field(f, g, mass=1.0):
    """First-order form of qddot + f(q) qdot + g(q) = 0:
    qdot = p/m, pdot = -m g(q) - f(q) p.  One degree of freedom."""
    if not mass > 0:
        raise NonpositiveMassError(f"mass must be positive, got {mass!r}")
    f = _as_phase_expr(f, 1)
    g = _as_phase_expr(g, 1)
    for name, e in (("f", f), ("g", g)):
        if e.referenced - {"q"}:
            raise ConstraintError(f"{name} must depend on q only, got '{e}'")
    return FieldSpec("lienard", 1, 2, f=f, g=g, mass=float(mass))


def _check_point(field, x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (field.dim,):
        raise ValueError(f"phase point of length {x.size} for dim={field.dim} field")
    return x


def field_eval(field, x):
    """Velocity vector at phase point ``x`` (pure function)."""
    x = _check_point(field, x)
    try:
        return _velocity(field, x)
    except DomainError as err:
        raise err.with_context(point=x) from None


def _velocity(field, x):
    n = field.n
    out = np.empty(field.dim)
    if field.family == "lienard":
        q, p = x
        out[0] = p / field.mass
        out[1] = -field.mass * field.g.evaluate(x) - field.f.evaluate(x) * p
        return out
    value, grad = field.hamiltonian.value_and_grad(x)
    gq = grad[:n]
    gp = grad[n : 2 * n]
    out[:n] = gp
    if field.family == "conservative":
        out[n : 2 * n] = -gq
    elif field.family == "conformal":
        out[n : 2 * n] = -gq - field.gamma * x[n : 2 * n]
    elif field.family == "generalized_conformal":
        out[n : 2 * n] = -gq - field.K.evaluate(x) * x[n : 2 * n]
    else:  # contact
        hs = grad[2 * n]
        p = x[n : 2 * n]
        out[n : 2 * n] = -gq - p * hs
        out[2 * n] = p @ gp - value
    return out


def field_jacobian(field, x):
    """Derivative matrix dX/dx at ``x``, from second-order jets."""
    x = _check_point(field, x)
    try:
        return _jacobian(field, x)
    except DomainError as err:
        raise err.with_context(point=x) from None


def _jacobian(field, x):
    n = field.n
    if field.family == "lienard":
        _, fg = field.f.value_and_grad(x)
        _, gg = field.g.value_and_grad(x)
        fv = field.f.evaluate(x)
        p = x[1]
        return np.array(
            [
                [0.0, 1.0 / field.mass],
                [-field.mass * gg[0] - fg[0] * p, -fv],
            ]
        )

    jet = field.hamiltonian.eval_jet2(x)
    hqq = jet.hess[:n, :n]
    hqp = jet.hess[:n, n : 2 * n]
    hpq = jet.hess[n : 2 * n, :n]
    hpp = jet.hess[n : 2 * n, n : 2 * n]
    J = np.empty((field.dim, field.dim))

    if field.family != "contact":
        J[:n, :n] = hpq
        J[:n, n:] = hpp
        if field.family == "conservative":
            J[n:, :n] = -hqq
            J[n:, n:] = -hqp
        elif field.family == "conformal":
            J[n:, :n] = -hqq
            J[n:, n:] = -hqp - field.gamma * np.eye(n)
        else:
            kval, kgrad = field.K.value_and_grad(x)
            p = x[n : 2 * n]
            J[n:, :n] = -hqq - np.outer(p, kgrad[:n])
            J[n:, n:] = -hqp - kval * np.eye(n)
        return J

    p = x[n : 2 * n]
    hs = jet.grad[2 * n]
    hq = jet.grad[:n]
    hp = jet.grad[n : 2 * n]
    hqs = jet.hess[:n, 2 * n]
    hps = jet.hess[n : 2 * n, 2 * n]
    hss = jet.hess[2 * n, 2 * n]
    # qdot rows
    J[:n, :n] = hpq
    J[:n, n : 2 * n] = hpp
    J[:n, 2 * n] = hps
    # pdot rows
    J[n : 2 * n, :n] = -hqq - np.outer(p, hqs)
    J[n : 2 * n, n : 2 * n] = -hqp - hs * np.eye(n) - np.outer(p, hps)
    J[n : 2 * n, 2 * n] = -hqs - p * hss
    # sdot row
    J[2 * n, :n] = p @ hpq - hq
    J[2 * n, n : 2 * n] = p @ hpp
    J[2 * n, 2 * n] = p @ hps - hs
    return J


def velocity_and_divergence(field, x):
    """Velocity and divergence from a single second-order jet evaluation.

    The divergence is the sum of coordinate partials of the velocity
    components; for the conservative family the mixed-partial terms cancel
    bitwise, so the result is exactly zero for n=1 and rounding-level for
    n>1.
    """
    x = _check_point(field, x)
    try:
        return _velocity_and_divergence(field, x)
    except DomainError as err:
        raise err.with_context(point=x) from None


def _velocity_and_divergence(field, x):
    n = field.n
    out = np.empty(field.dim)

    if field.family == "lienard":
        q, p = x
        fv = field.f.evaluate(x)
        out[0] = p / field.mass
        out[1] = -field.mass * field.g.evaluate(x) - fv * p
        # d/dq (p/m) + d/dp (-m g(q) - f(q) p) = -f(q)
        return out, -fv

    jet = field.hamiltonian.eval_jet2(x)
    grad, hess = jet.grad, jet.hess
    gq = grad[:n]
    gp = grad[n : 2 * n]
    out[:n] = gp

    if field.family == "contact":
        hs = grad[2 * n]
        p = x[n : 2 * n]
        out[n : 2 * n] = -gq - p * hs
        out[2 * n] = p @ gp - jet.value
        div = 0.0
        for i in range(n):
            div += hess[n + i, i]  # dq_i of dh/dp_i
        for i in range(n):
            div += -hess[i, n + i] - hs - x[n + i] * hess[2 * n, n + i]
        div += p @ hess[n : 2 * n, 2 * n] - hs  # ds of sdot
        return out, float(div)

    if field.family == "conservative":
        kterm = 0.0
    elif field.family == "conformal":
        kterm = field.gamma
    else:
        kterm = field.K.evaluate(x)
    out[n : 2 * n] = -gq - kterm * x[n : 2 * n]
    div = 0.0
    for i in range(n):
        div += hess[n + i, i]
    for i in range(n):
        div += -hess[i, n + i] - kterm
    return out, float(div)


def field_divergence(field, x):
    """Divergence of the field at ``x``, from second-order jets."""
    return velocity_and_divergence(field, x)[1]


def divergence_closed_form(field, x):
    """The family's analytic divergence, for cross-checking the jet route:
    0, -gamma*n, -(n+1)*dh/ds, -n*K(q), or -f(q)."""
    x = _check_point(field, x)
    if field.family == "conservative":
        return 0.0
    if field.family == "conformal":
        return -field.gamma * field.n
    if field.family == "contact":
        _, grad = field.hamiltonian.value_and_grad(x)
        return -(field.n + 1) * float(grad[2 * field.n])
    if field.family == "generalized_conformal":
        return -field.n * field.K.evaluate(x)
    return -field.f.evaluate(x)  # lienard: f plays the role of K
