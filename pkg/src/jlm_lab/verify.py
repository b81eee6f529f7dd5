"""Independent invariance checks for claimed multipliers and volume laws.

Each check is a pure function of its inputs plus an explicit seed and
returns a VerificationReport with residual statistics and the worst
witnesses.  The divergence check (pointwise algebra on sampled regions) and
the transport check (flow integration) share no numerics, so a multiplier is
only trusted when both agree.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import (
    DomainError,
    DomainExitError,
    NoRootError,
    NotConstantDivergenceError,
)
from .flow import IntegratorSettings, integrate_with_logvolume
from .systems import velocity_and_divergence

__all__ = [
    "RegionSampler",
    "VerificationReport",
    "check_div_mx",
    "check_transport",
    "check_level_set",
    "check_volume_law",
    "check_u_substitution",
    "check_negative_control",
    "worker_count",
]


def worker_count():
    """Worker cap for sample-parallel checks, from JLM_LAB_MAX_WORKERS."""
    raw = os.environ.get("JLM_LAB_MAX_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class RegionSampler:
    """Reproducible uniform sampler on a box, filtered by a positivity
    constraint.  Same seed, same sequence: draws come from a counter-based
    Philox stream."""

    bounds: tuple
    constraint: object = None  # Expr, kept > 0 on all accepted samples
    seed: int = 0
    count: int = 1000

    def draw(self):
        lows = np.array([b[0] for b in self.bounds], dtype=float)
        highs = np.array([b[1] for b in self.bounds], dtype=float)
        if not (highs > lows).all():
            raise ValueError("each bound must be an increasing (low, high) pair")
        if self.count < 1:
            raise ValueError("count must be positive")
        gen = np.random.Generator(np.random.Philox(key=self.seed))
        accepted = []
        attempts = 0
        budget = max(10_000, 200 * self.count)
        while len(accepted) < self.count:
            if attempts >= budget:
                raise DomainError(
                    f"sampler accepted {len(accepted)}/{self.count} points in "
                    f"{attempts} draws; constraint '{self.constraint}' is "
                    "(nearly) incompatible with the bounds"
                )
            batch = gen.uniform(size=(256, len(self.bounds)))
            batch = lows + batch * (highs - lows)
            attempts += len(batch)
            for x in batch:
                if self.constraint is None or self.constraint.evaluate(x) > 0.0:
                    accepted.append(x)
                    if len(accepted) == self.count:
                        break
        return np.array(accepted)


@dataclass
class VerificationReport:
    """Outcome of one check: pass iff max residual <= tolerance."""

    name: str
    passed: bool
    tolerance: float
    residual_max: float
    residual_mean: float
    quantiles: dict = dc_field(default_factory=dict)
    count: int = 0
    witnesses: list = dc_field(default_factory=list)
    details: dict = dc_field(default_factory=dict)

    @classmethod
    def from_residuals(cls, name, residuals, tolerance, witnesses_of=None, **details):
        residuals = np.asarray(residuals, dtype=float)
        order = np.argsort(residuals)[::-1][:3]
        witnesses = [
            (float(residuals[i]), witnesses_of[i]) for i in order
        ] if witnesses_of is not None else []
        rmax = float(residuals.max()) if residuals.size else 0.0
        return cls(
            name=name,
            passed=bool(rmax <= tolerance),
            tolerance=tolerance,
            residual_max=rmax,
            residual_mean=float(residuals.mean()) if residuals.size else 0.0,
            quantiles={
                "q50": float(np.quantile(residuals, 0.5)),
                "q90": float(np.quantile(residuals, 0.9)),
                "q99": float(np.quantile(residuals, 0.99)),
            } if residuals.size else {},
            count=int(residuals.size),
            witnesses=witnesses,
            details=details,
        )

    def summary(self):
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{self.name}: {status} (max residual {self.residual_max:.3e}, "
            f"tol {self.tolerance:.1e}, n={self.count})"
        )


def _chunked(items, n_chunks):
    chunk = max(1, math.ceil(len(items) / n_chunks))
    return [items[i : i + chunk] for i in range(0, len(items), chunk)]


def check_div_mx(field, M, sampler, tol=1e-8):
    """Pointwise divergence check: div(MX) = X(M) + M div X over the region.

    Residuals are normalized by |M| (1 + |X|) so the tolerance is scale-free
    even when M spans many orders of magnitude.
    """
    points = sampler.draw()
    if points.shape[1] != field.dim:
        raise ValueError(
            f"sampler dimension {points.shape[1]} does not match field dim {field.dim}"
        )

    def residual(x):
        if not M.in_region(x):
            raise DomainError(
                f"sampler constraint admits points outside the multiplier "
                f"region ({M.constraint} > 0)",
                point=x,
            )
        m, mgrad = M.value_and_grad(x)
        vel, div = velocity_and_divergence(field, x)
        num = abs(float(mgrad @ vel) + m * div)
        return num / (abs(m) * (1.0 + float(np.linalg.norm(vel))))

    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            residuals = np.concatenate(
                list(pool.map(lambda ch: np.array([residual(x) for x in ch]),
                              _chunked(points, workers)))
            )
    else:
        residuals = np.array([residual(x) for x in points])

    return VerificationReport.from_residuals(
        "div_mx",
        residuals,
        tol,
        witnesses_of=[x.tolist() for x in points],
        seed=sampler.seed,
        bounds=list(map(list, sampler.bounds)),
        multiplier=M.describe(),
    )


def check_transport(field, M, x0, t_end, settings=None, tol=1e-6, samples=201):
    """Flow-transport identity: ln M(x(t)) + ln det Dphi_t - ln M(x0) = 0.

    If the trajectory leaves M's validity region the report covers the
    confined prefix and records the exit time (domain exit is a verdict,
    not a failure); leaving the region immediately is an error.
    """
    settings = settings or IntegratorSettings()
    x0 = np.asarray(x0, dtype=float)
    if not M.in_region(x0):
        raise DomainExitError(0.0, "initial condition outside the validity region")
    traj = integrate_with_logvolume(field, x0, 0.0, float(t_end), settings,
                                    samples=samples)
    ln_m0 = M.log_abs(x0)
    residuals = []
    times = []
    exit_time = None
    for t, x, lv in zip(traj.times, traj.states, traj.log_volume):
        if not M.in_region(x):
            exit_time = float(t)
            break
        residuals.append(abs(M.log_abs(x) + lv - ln_m0))
        times.append(float(t))
    report = VerificationReport.from_residuals(
        "transport",
        residuals,
        tol,
        witnesses_of=times,
        t_end=float(t_end),
        x0=x0.tolist(),
        rtol=settings.rtol,
        multiplier=M.describe(),
        domain_exit_time=exit_time,
        confined_until=times[-1] if times else 0.0,
    )
    return report


def _solve_level(h, q0p0, level):
    """Find s with h(q.., p.., s) = level: affine shortcut, then Newton."""
    def at(s):
        return h.evaluate(np.append(q0p0, s))

    def slope(s):
        _, grad = h.value_and_grad(np.append(q0p0, s))
        return grad[-1]

    h0 = at(0.0)
    scale = 1.0 + abs(level) + abs(h0)
    c = slope(0.0)
    if c != 0.0:
        s_affine = (level - h0) / c
        if abs(at(s_affine) - level) <= 1e-12 * scale:
            return float(s_affine)
    elif abs(h0 - level) <= 1e-12 * scale:
        return 0.0  # h independent of s and already on the level
    else:
        raise NoRootError(
            f"h does not depend on s here and h(q0,p0) = {h0!r} != {level!r}"
        )
    s = 0.0
    for _ in range(100):
        r = at(s) - level
        if abs(r) <= 1e-13 * scale:
            return float(s)
        c = slope(s)
        if c == 0.0:
            break
        s -= r / c
    raise NoRootError(f"no root of h = {level!r} found from (q0,p0) = {q0p0.tolist()}")


def check_level_set(field, q0, p0, t_end, settings=None, tol=1e-8, level=0.0,
                    samples=201):
    """Confinement to {h = 0} (or tracking of the decay law for level != 0).

    Seeds the trajectory at s0 solving h(q0, p0, s0) = level.  For level = 0
    the residual is |h(x(t))|; otherwise the contact Hamiltonian is compared
    against level * exp(-xi(h) t), which requires xi(h) constant along the
    trajectory.
    """
    if field.family != "contact":
        raise ValueError("level-set check applies to contact fields only")
    settings = settings or IntegratorSettings()
    n = field.n
    q0p0 = np.concatenate([np.atleast_1d(np.asarray(q0, dtype=float)),
                           np.atleast_1d(np.asarray(p0, dtype=float))])
    if q0p0.size != 2 * n:
        raise ValueError(f"(q0, p0) must supply {2 * n} coordinates")
    h = field.hamiltonian
    s0 = _solve_level(h, q0p0, float(level))
    x0 = np.append(q0p0, s0)
    traj = integrate_with_logvolume(field, x0, 0.0, float(t_end), settings,
                                    samples=samples)

    h_vals = np.empty(len(traj.times))
    xi_vals = np.empty(len(traj.times))
    for i, x in enumerate(traj.states):
        value, grad = h.value_and_grad(x)
        h_vals[i] = value
        xi_vals[i] = grad[2 * n]

    scale = 1.0 + abs(level)
    if level == 0.0:
        residuals = np.abs(h_vals) / scale
        mode = "confinement"
    else:
        xi0 = xi_vals[0]
        if np.max(np.abs(xi_vals - xi0)) > 1e-10 * (1.0 + abs(xi0)):
            raise NotConstantDivergenceError(
                "xi(h) is not constant along the trajectory; no closed decay law"
            )
        residuals = np.abs(h_vals - level * np.exp(-xi0 * traj.times)) / scale
        mode = "decay_law"
    return VerificationReport.from_residuals(
        "level_set",
        residuals,
        tol,
        witnesses_of=[float(t) for t in traj.times],
        s0=s0,
        level=float(level),
        mode=mode,
        t_end=float(t_end),
    )


def _constant_divergence(field, traj):
    """Slope of the linear volume law, or raise NotConstantDivergenceError."""
    if field.family == "conservative":
        return 0.0
    if field.family == "conformal":
        return -field.gamma * field.n
    if field.family == "contact":
        xi = np.empty(len(traj.states))
        for i, x in enumerate(traj.states):
            _, grad = field.hamiltonian.value_and_grad(x)
            xi[i] = grad[2 * field.n]
        if np.max(np.abs(xi - xi[0])) > 1e-10 * (1.0 + abs(xi[0])):
            raise NotConstantDivergenceError(
                "xi(h) varies along the trajectory; volume law is not linear"
            )
        return -(field.n + 1.0) * float(xi[0])
    K = field.K if field.family == "generalized_conformal" else field.f
    kv = np.array([K.evaluate(x) for x in traj.states])
    if np.max(np.abs(kv - kv[0])) > 1e-10 * (1.0 + abs(kv[0])):
        raise NotConstantDivergenceError(
            "K(q) varies along the trajectory; volume law is not linear"
        )
    return -field.n * float(kv[0])


def check_volume_law(field, x0, t_end, settings=None, tol=1e-8, samples=201):
    """ln det Dphi_t against the linear law c*t for constant-divergence
    fields; raises NotConstantDivergenceError when no such law applies."""
    settings = settings or IntegratorSettings()
    traj = integrate_with_logvolume(field, x0, 0.0, float(t_end), settings,
                                    samples=samples)
    c = _constant_divergence(field, traj)
    residuals = np.abs(traj.log_volume - c * traj.times)
    return VerificationReport.from_residuals(
        "volume_law",
        residuals,
        tol,
        witnesses_of=[float(t) for t in traj.times],
        slope=c,
        t_end=float(t_end),
    )


def check_u_substitution(field, M, x0, t_end, settings=None, tol=1e-6, samples=201):
    """Lienard consistency: du/dt = l u K(q) along the flow, residual
    normalized by 1 + |u|."""
    if M.u is None:
        raise ValueError("multiplier carries no u-substitution data")
    settings = settings or IntegratorSettings()
    l = M.params["l"]
    traj = integrate_with_logvolume(field, x0, 0.0, float(t_end), settings,
                                    samples=samples)
    residuals = np.empty(len(traj.times))
    K = field.f if field.family == "lienard" else field.K
    for i, x in enumerate(traj.states):
        uv, ugrad = M.u.value_and_grad(x)
        vel, _ = velocity_and_divergence(field, x)
        udot = float(ugrad @ vel)
        residuals[i] = abs(udot - l * uv * K.evaluate(x)) / (1.0 + abs(uv))
    return VerificationReport.from_residuals(
        "u_substitution",
        residuals,
        tol,
        witnesses_of=[float(t) for t in traj.times],
        l=l,
        x0=list(np.asarray(x0, dtype=float)),
    )


def check_negative_control(field, M_perturbed, sampler, tol=1e-8, factor=1e3):
    """The perturbed multiplier must fail div(MX) = 0 loudly: the check
    passes when the max residual is at least ``factor`` times ``tol``."""
    inner = check_div_mx(field, M_perturbed, sampler, tol)
    return VerificationReport(
        name="negative_control",
        passed=bool(inner.residual_max >= factor * tol),
        tolerance=factor * tol,
        residual_max=inner.residual_max,
        residual_mean=inner.residual_mean,
        quantiles=inner.quantiles,
        count=inner.count,
        witnesses=inner.witnesses,
        details=dict(inner.details, expected="residual_max >= tolerance",
                     perturbation=M_perturbed.params.get("perturbation")),
    )
