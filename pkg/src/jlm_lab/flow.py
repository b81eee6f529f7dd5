"""Trajectory integration, with optional volume distortion and monodromy.

Two steppers: an embedded Dormand-Prince 5(4) pair with PI-free elementary
step control, and classical fixed-step RK4.  Dense output at requested sample
times uses cubic Hermite interpolation on accepted steps.  Everything here is
deterministic: same inputs and settings give bit-identical trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import DomainError, IntegrationFailureError
from .systems import field_eval as _field_eval  # noqa: F401  (re-exported context)
from .systems import _jacobian, _velocity, velocity_and_divergence

__all__ = [
    "IntegratorSettings",
    "IntegrationStats",
    "Trajectory",
    "integrate",
    "integrate_with_logvolume",
    "monodromy",
]

_EPS = np.finfo(float).eps

# Dormand-Prince 5(4) tableau; row 7 equals the 5th-order weights (FSAL).
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
# difference between 5th- and embedded 4th-order weights
_DP_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


@dataclass(frozen=True)
class IntegratorSettings:
    """Stepper selection and accuracy knobs.

    ``dt`` applies to rk4_fixed; (rtol, atol) to rk45_adaptive.  ``max_step``
    bounds adaptive steps so Hermite dense output stays accurate; when None
    it defaults to span/400.
    """

    method: str = "rk45_adaptive"
    dt: float = 1e-3
    rtol: float = 1e-10
    atol: float = 1e-12
    max_steps: int = 10_000_000
    max_step: float | None = None

    def __post_init__(self):
        if self.method not in ("rk45_adaptive", "rk4_fixed"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.rtol < 1e-14:
            raise ValueError("rtol must be >= 1e-14")
        if not self.atol > 0:
            raise ValueError("atol must be positive")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")
        if self.max_step is not None and not self.max_step > 0:
            raise ValueError("max_step must be positive")


@dataclass
class IntegrationStats:
    n_steps: int = 0
    n_rejected: int = 0
    max_error_estimate: float = 0.0  # scaled; 1.0 sits exactly at tolerance


@dataclass
class Trajectory:
    """Sampled integral curve; optionally with ln det Dphi_t and ln M."""

    times: np.ndarray
    states: np.ndarray
    log_volume: np.ndarray | None = None
    log_multiplier: np.ndarray | None = None
    stats: IntegrationStats = dc_field(default_factory=IntegrationStats)


def _hermite(t, t0, y0, f0, t1, y1, f1):
    h = t1 - t0
    s = (t - t0) / h
    s2 = s * s
    s3 = s2 * s
    return (
        (2 * s3 - 3 * s2 + 1) * y0
        + (s3 - 2 * s2 + s) * h * f0
        + (-2 * s3 + 3 * s2) * y1
        + (s3 - s2) * h * f1
    )


class _SampleWriter:
    """Emits dense-output samples in order as steps are accepted."""

    def __init__(self, t_eval, width, direction):
        self.t_eval = t_eval
        self.direction = direction
        self.out = np.empty((len(t_eval), width))
        self.idx = 0

    def start(self, t0, y0):
        while self.idx < len(self.t_eval) and self.t_eval[self.idx] == t0:
            self.out[self.idx] = y0
            self.idx += 1

    def advance(self, t0, y0, f0, t1, y1, f1):
        te = self.t_eval
        while self.idx < len(te) and self.direction * (te[self.idx] - t1) <= 0:
            t = te[self.idx]
            if t == t1:
                self.out[self.idx] = y1
            else:
                self.out[self.idx] = _hermite(t, t0, y0, f0, t1, y1, f1)
            self.idx += 1

    def done(self):
        return self.idx >= len(self.t_eval)


def _rk45(rhs, y0, t_start, t_end, settings, t_eval):
    span = t_end - t_start
    direction = 1.0 if span > 0 else -1.0
    max_step = settings.max_step if settings.max_step is not None else abs(span) / 400
    stats = IntegrationStats()
    writer = _SampleWriter(t_eval, len(y0), direction)

    t = t_start
    y = np.array(y0, dtype=float)
    writer.start(t, y)
    try:
        f_first = rhs(y)
    except DomainError as err:
        raise err.with_context(time=t) from None

    k = [f_first] + [None] * 6
    h_abs = min(abs(span) / 100, max_step)
    rtol, atol = settings.rtol, settings.atol

    while direction * (t - t_end) < 0:
        if stats.n_steps + stats.n_rejected >= settings.max_steps:
            raise IntegrationFailureError(
                f"step budget {settings.max_steps} exhausted at t={t!r}"
            )
        h_abs = min(h_abs, max_step)
        last = h_abs >= abs(t_end - t)
        h = direction * (abs(t_end - t) if last else h_abs)
        if not last and h_abs <= 8 * _EPS * max(abs(t), abs(t_end)):
            raise IntegrationFailureError(f"step size underflow at t={t!r}")

        try:
            for stage in range(1, 6):
                a_row = _DP_A[stage]
                dy = a_row[0] * k[0]
                for j in range(1, stage):
                    dy = dy + a_row[j] * k[j]
                k[stage] = rhs(y + h * dy)
            a_row = _DP_A[6]
            dy = a_row[0] * k[0]
            for j in range(1, 6):
                dy = dy + a_row[j] * k[j]
            y_new = y + h * dy
            f_new = rhs(y_new)  # FSAL: seventh stage sits at the new point
        except DomainError as err:
            # transient excursion out of the expression domain: shrink and retry
            if h_abs <= 8 * _EPS * max(abs(t), abs(t_end)):
                raise err.with_context(time=t) from None
            stats.n_rejected += 1
            h_abs = h_abs * 0.5
            continue
        k[6] = f_new

        err_vec = _DP_E[0] * k[0]
        for j in range(1, 7):
            err_vec = err_vec + _DP_E[j] * k[j]
        err_vec = h * err_vec
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = math.sqrt(float(np.mean((err_vec / scale) ** 2)))

        if err_norm <= 1.0:
            t_new = t_end if last else t + h
            writer.advance(t, y, k[0], t_new, y_new, f_new)
            t, y = t_new, y_new
            k[0] = f_new
            stats.n_steps += 1
            stats.max_error_estimate = max(stats.max_error_estimate, err_norm)
            factor = 5.0 if err_norm == 0.0 else min(5.0, max(0.2, 0.9 * err_norm**-0.2))
        else:
            stats.n_rejected += 1
            factor = max(0.2, 0.9 * err_norm**-0.2)
        h_abs = abs(h) * factor

    return writer.out, stats


def _rk4(rhs, y0, t_start, t_end, settings, t_eval):
    span = t_end - t_start
    direction = 1.0 if span > 0 else -1.0
    n_steps = max(1, math.ceil(abs(span) / settings.dt - 1e-12))
    if n_steps > settings.max_steps:
        raise IntegrationFailureError(
            f"{n_steps} fixed steps exceed max_steps={settings.max_steps}"
        )
    stats = IntegrationStats()
    writer = _SampleWriter(t_eval, len(y0), direction)

    y = np.array(y0, dtype=float)
    t = t_start
    writer.start(t, y)
    try:
        f0 = rhs(y)
        for step in range(1, n_steps + 1):
            t_new = t_end if step == n_steps else t_start + span * (step / n_steps)
            h = t_new - t
            k2 = rhs(y + (0.5 * h) * f0)
            k3 = rhs(y + (0.5 * h) * k2)
            k4 = rhs(y + h * k3)
            y_new = y + (h / 6.0) * (f0 + 2.0 * k2 + 2.0 * k3 + k4)
            f_new = rhs(y_new)
            writer.advance(t, y, f0, t_new, y_new, f_new)
            t, y, f0 = t_new, y_new, f_new
            stats.n_steps += 1
    except DomainError as err:
        raise err.with_context(time=t) from None
    return writer.out, stats


def _solve(rhs, y0, t_start, t_end, settings, t_eval):
    if settings.method == "rk4_fixed":
        return _rk4(rhs, y0, t_start, t_end, settings, t_eval)
    return _rk45(rhs, y0, t_start, t_end, settings, t_eval)


def _check_grid(x0, field, t_start, t_end, t_eval, samples):
    x0 = np.ascontiguousarray(x0, dtype=float)
    if x0.shape != (field.dim,):
        raise ValueError(f"initial condition of length {x0.size} for dim={field.dim}")
    if t_eval is None:
        t_eval = np.linspace(t_start, t_end, samples)
    else:
        t_eval = np.asarray(t_eval, dtype=float)
        if t_eval.ndim != 1 or len(t_eval) == 0:
            raise ValueError("t_eval must be a non-empty 1-d array")
        if t_eval[0] != t_start:
            raise ValueError("t_eval must start at t_start")
        direction = 1.0 if t_end >= t_start else -1.0
        d = np.diff(t_eval) * direction
        if len(t_eval) > 1 and not (d > 0).all():
            raise ValueError("t_eval must be strictly monotonic toward t_end")
        if direction * (t_eval[-1] - t_end) > 0:
            raise ValueError("t_eval must not pass t_end")
    return x0, t_eval


def integrate(field, x0, t_start, t_end, settings=None, t_eval=None, samples=201):
    """Integrate the field from ``x0`` over [t_start, t_end].

    Returns a Trajectory sampled at ``t_eval`` (default: ``samples`` uniform
    times).  The first sample is exactly ``x0``.
    """
    settings = settings or IntegratorSettings()
    x0, t_eval = _check_grid(x0, field, t_start, t_end, t_eval, samples)
    if t_start == t_end:
        return Trajectory(times=t_eval.copy(), states=np.array([x0]))

    def rhs(y):
        return _velocity(field, y)

    ys, stats = _solve(rhs, x0, t_start, t_end, settings, t_eval)
    return Trajectory(times=t_eval.copy(), states=ys, stats=stats)


def integrate_with_logvolume(
    field, x0, t_start, t_end, settings=None, t_eval=None, samples=201
):
    """Like ``integrate`` but co-integrates d/dt ln det Dphi_t = div X.

    The returned trajectory carries ``log_volume`` (starting at 0) and its
    negative as ``log_multiplier``, i.e. the transported ln M of the
    multiplier ODE d/dt ln M = -div X.
    """
    settings = settings or IntegratorSettings()
    x0, t_eval = _check_grid(x0, field, t_start, t_end, t_eval, samples)
    dim = field.dim
    if t_start == t_end:
        return Trajectory(
            times=t_eval.copy(),
            states=np.array([x0]),
            log_volume=np.zeros(1),
            log_multiplier=np.zeros(1),
        )

    def rhs(y):
        vel, div = velocity_and_divergence(field, y[:dim])
        out = np.empty(dim + 1)
        out[:dim] = vel
        out[dim] = div
        return out

    y0 = np.zeros(dim + 1)
    y0[:dim] = x0
    ys, stats = _solve(rhs, y0, t_start, t_end, settings, t_eval)
    logvol = ys[:, dim].copy()
    return Trajectory(
        times=t_eval.copy(),
        states=ys[:, :dim].copy(),
        log_volume=logvol,
        log_multiplier=-logvol,
        stats=stats,
    )


def monodromy(field, x0, t_start, t_end, settings=None):
    """Jacobian of the flow map, Dphi_{t_end}(x0), via variational equations."""
    settings = settings or IntegratorSettings()
    x0 = np.ascontiguousarray(x0, dtype=float)
    dim = field.dim
    if x0.shape != (dim,):
        raise ValueError(f"initial condition of length {x0.size} for dim={dim}")
    if t_start == t_end:
        return np.eye(dim)

    def rhs(y):
        x = y[:dim]
        vel = _velocity(field, x)
        J = _jacobian(field, x)
        M = y[dim:].reshape(dim, dim)
        out = np.empty(dim * (dim + 1))
        out[:dim] = vel
        out[dim:] = (J @ M).ravel()
        return out

    y0 = np.concatenate([x0, np.eye(dim).ravel()])
    t_eval = np.array([t_start, t_end])
    ys, _ = _solve(rhs, y0, t_start, t_end, settings, t_eval)
    return ys[-1, dim:].reshape(dim, dim).copy()
