"""Jacobi last multipliers: closed forms and numerical transport.

A multiplier M is a nonvanishing factor making M*X divergence-free, so that
M times the coordinate volume-form is invariant under the flow of X.  Closed
forms are available for momentum-homogeneous Hamiltonians under conformal
damping (M = H^(-n/k)), for contact fields away from the zero level set
(M = h^(-(n+1))), and for Lienard fields satisfying the Cheillini condition
(M = u^(1/l) with m*u = p - V'/(l*K)).  For everything else the defining ODE
d/dt ln M = -div X is integrated along trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import (
    ComplexRootsError,
    ConstraintError,
    CheilliniNotSatisfiedError,
    DomainError,
    InvalidExponentError,
    KVanishesError,
    NotHomogeneousError,
    UnknownVariableError,
)
from .expr import Expr
from .flow import IntegratorSettings, integrate_with_logvolume
from .systems import phase_variables

__all__ = [
    "MultiplierSpec",
    "CheilliniRoots",
    "multiplier_conformal_homogeneous",
    "multiplier_contact",
    "cheillini_roots",
    "multiplier_lienard",
    "multiplier_transport",
    "perturbed_multiplier",
]


@dataclass(frozen=True, eq=False)
class MultiplierSpec:
    """A multiplier, either in closed form or as a transport reference.

    Closed forms carry the expression for M together with an explicit
    positivity constraint delimiting the region of validity; every
    evaluation checks the constraint so invalid points fail loudly instead
    of returning NaNs.
    """

    kind: str  # "closed_form" | "transported"
    family: str
    expr: Expr | None = None
    constraint: Expr | None = None
    params: dict = dc_field(default_factory=dict)
    reference_point: np.ndarray | None = None
    reference_log_value: float = 0.0
    G: Expr | None = None  # Lienard: V'/(l K)
    u: Expr | None = None  # Lienard: (p - G)/m

    def in_region(self, point):
        return self.constraint is None or self.constraint.evaluate(point) > 0.0

    def _require_region(self, point):
        if self.expr is None:
            raise ValueError("transported multiplier has no closed-form expression")
        if not self.in_region(point):
            raise DomainError(
                f"point outside multiplier validity region ({self.constraint} > 0)",
                point=point,
            )

    def evaluate(self, point):
        self._require_region(point)
        return self.expr.evaluate(point)

    def value_and_grad(self, point):
        self._require_region(point)
        return self.expr.value_and_grad(point)

    def log_abs(self, point):
        """ln |M|; M is nonvanishing on its validity region."""
        return math.log(abs(self.evaluate(point)))

    def describe(self):
        if self.expr is None:
            return f"transported (reference {self.reference_point!r})"
        return f"M = {self.expr} on {self.constraint} > 0"


@dataclass(frozen=True)
class CheilliniRoots:
    """Both real roots of l^2 + l + c = 0 with the constancy evidence for c."""

    l_minus: float
    l_plus: float
    c: float
    residual_max: float
    n_samples: int

    @property
    def roots(self):
        return (self.l_minus, self.l_plus)


def _phase_expr(e, n, contact=False):
    names = phase_variables(n, contact)
    if isinstance(e, str):
        return Expr.parse(e, names)
    return e if e.vars == names else e.with_vars(names)


def multiplier_conformal_homogeneous(H, k, n=1, seed=7, samples=100):
    """M = H^(-n/k) for H momentum-homogeneous of degree k, on H > 0.

    Homogeneity is certified numerically through the Euler identity
    sum_i p_i dH/dp_i = k H at ``samples`` quasi-random points (q in [-1,1],
    p in [0.5,1.5]); the worst relative residual must stay below 1e-8.
    """
    if not k > 0:
        raise ValueError("homogeneity degree k must be positive")
    H = _phase_expr(H, n)
    gen = np.random.Generator(np.random.Philox(key=seed))
    pts = np.empty((samples, 2 * n))
    pts[:, :n] = gen.uniform(-1.0, 1.0, size=(samples, n))
    pts[:, n:] = gen.uniform(0.5, 1.5, size=(samples, n))
    worst = 0.0
    worst_pt = pts[0]
    for x in pts:
        value, grad = H.value_and_grad(x)
        euler = float(x[n:] @ grad[n:])
        resid = abs(euler - k * value)
        rel = resid / abs(value) if value != 0.0 else (0.0 if resid == 0.0 else math.inf)
        if rel > worst:
            worst = rel
            worst_pt = x
    if worst >= 1e-8:
        raise NotHomogeneousError(k, worst, worst_pt)
    return MultiplierSpec(
        kind="closed_form",
        family="conformal",
        expr=H ** (-(n / k)),
        constraint=H,
        params={"k": float(k), "n": n},
    )


def multiplier_contact(h, n=1, region="h>0"):
    """M = h^(-(n+1)) on the chosen side of the excluded level set h = 0."""
    h = _phase_expr(h, n, contact=True)
    if region not in ("h>0", "h<0"):
        raise ValueError("region must be 'h>0' or 'h<0'")
    return MultiplierSpec(
        kind="closed_form",
        family="contact",
        expr=h ** (-(n + 1.0)),
        constraint=h if region == "h>0" else -h,
        params={"n": n, "region": region},
    )


def _q_expr(e, what):
    """Expression in the configuration variable only, over ('q',)."""
    try:
        if isinstance(e, str):
            return Expr.parse(e, ("q",))
        return e if e.vars == ("q",) else e.with_vars(("q",))
    except UnknownVariableError as err:
        raise ConstraintError(f"{what} must depend on q only: {err}") from None


def cheillini_roots(v_prime, K, mass=1.0, q_samples=None):
    """Solve the integrability condition d/dq(V'/(mK)) + l(l+1) K = 0.

    Evaluates c(q) = (d/dq [V'/(mK)]) / K on the sample points (derivatives
    via jets).  If c is constant to 1e-8 relative, returns both real roots of
    l^2 + l + c = 0; roots 0 and -1 are excluded because the multiplier
    exponent 1/l must exist and l = -1 is outside the construction.
    """
    v_prime = _q_expr(v_prime, "v_prime")
    K = _q_expr(K, "K")
    if not mass > 0:
        raise ValueError("mass must be positive")
    if q_samples is None:
        q_samples = np.linspace(-2.0, 2.0, 17)
    q_samples = np.asarray(q_samples, dtype=float)
    if q_samples.size < 8:
        raise ValueError("need at least 8 sample points")

    W = v_prime / (K * mass)
    c_values = np.empty(q_samples.size)
    for i, q in enumerate(q_samples):
        kv = K.evaluate([q])
        if kv == 0.0:
            raise KVanishesError(q)
        _, wgrad = W.value_and_grad([q])
        c_values[i] = wgrad[0] / kv
        if not math.isfinite(c_values[i]):
            raise KVanishesError(q)

    mean = float(np.mean(c_values))
    residual_max = float(np.max(np.abs(c_values - mean)))
    if residual_max > 1e-8 * (1.0 + abs(mean)):
        raise CheilliniNotSatisfiedError(residual_max, mean, q_samples, c_values)

    disc = 1.0 - 4.0 * mean
    if disc < 0.0:
        raise ComplexRootsError(disc)
    root = math.sqrt(disc)
    l_minus = (-1.0 - root) / 2.0
    l_plus = (-1.0 + root) / 2.0
    if l_plus == 0.0 or l_minus == -1.0:
        raise InvalidExponentError(
            "condition holds only with l in {0, -1}, both excluded"
        )
    return CheilliniRoots(l_minus, l_plus, mean, residual_max, q_samples.size)


def multiplier_lienard(v_prime, K, mass=1.0, l=None):
    """M = u^(1/l) with u = (p - V'/(lK))/m, valid where u > 0.

    ``l`` must come from the Cheillini condition (see cheillini_roots);
    l = 0 and l = -1 are rejected.
    """
    if l is None or l == 0.0 or l == -1.0:
        raise InvalidExponentError(f"exponent parameter l={l!r} is excluded")
    if not mass > 0:
        raise ValueError("mass must be positive")
    vp = _phase_expr(_q_expr(v_prime, "v_prime"), 1)
    Kq = _phase_expr(_q_expr(K, "K"), 1)
    p = Expr.variable("p", ("q", "p"))
    G = vp / (Kq * l)
    u = (p - G) / mass
    return MultiplierSpec(
        kind="closed_form",
        family="lienard",
        expr=u ** (1.0 / l),
        constraint=u,
        params={"l": float(l), "mass": float(mass)},
        G=G,
        u=u,
    )


def multiplier_transport(field, x0, t_grid, settings=None):
    """Transported ln M along the flow from x0: d/dt ln M = -div X.

    Integrates the scalar ODE jointly with the trajectory (same stepper) and
    returns the Trajectory with ``log_multiplier`` holding
    ln M(t) - ln M(0); ``log_volume`` carries the opposite sign.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 2:
        raise ValueError("t_grid must contain at least start and end times")
    settings = settings or IntegratorSettings()
    return integrate_with_logvolume(
        field, x0, float(t_grid[0]), float(t_grid[-1]), settings, t_eval=t_grid
    )


def transported_reference(family, x0, log_value=0.0):
    """MultiplierSpec for transport-only scenarios (no closed form claimed)."""
    return MultiplierSpec(
        kind="transported",
        family=family,
        reference_point=np.asarray(x0, dtype=float),
        reference_log_value=float(log_value),
    )


def perturbed_multiplier(M, coeff=0.01):
    """M times (1 + coeff*q1): breaks invariance, for negative controls."""
    if M.expr is None:
        raise ValueError("cannot perturb a transport-only multiplier")
    q1 = Expr.variable(M.expr.vars[0], M.expr.vars)
    return MultiplierSpec(
        kind="closed_form",
        family=M.family,
        expr=(1.0 + coeff * q1) * M.expr,
        constraint=M.constraint,
        params=dict(M.params, perturbation=coeff),
        G=M.G,
        u=M.u,
    )
