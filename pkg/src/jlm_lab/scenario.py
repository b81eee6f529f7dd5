"""Config-driven scenario runner.

A scenario is an INI file with [system], [integrate], [multiplier], [verify]
and [output] sections (see README for the full schema).  Running one
integrates the system, writes the trajectory CSV and a structured report of
every verification check, and yields exit code 0 only if all enabled checks
pass.  Runs are deterministic: repeating a scenario produces byte-identical
files.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import __version__ as _version
from .backend import BACKEND
from .errors import (
    ConfigError,
    JlmLabError,
    NotConstantDivergenceError,
)
from .expr import Expr
from .flow import IntegratorSettings, integrate_with_logvolume
from .multiplier import (
    cheillini_roots,
    multiplier_conformal_homogeneous,
    multiplier_contact,
    multiplier_lienard,
    perturbed_multiplier,
    transported_reference,
)
from .systems import (
    build_conformal_field,
    build_contact_field,
    build_generalized_conformal_field,
    build_hamiltonian_field,
    build_lienard_field,
    phase_variables,
)
from .verify import (
    RegionSampler,
    VerificationReport,
    check_div_mx,
    check_level_set,
    check_negative_control,
    check_transport,
    check_u_substitution,
    check_volume_law,
)

__all__ = ["ScenarioConfig", "load_scenario", "run_scenario", "bundled_scenario_path"]

_KNOWN_CHECKS = (
    "div_mx",
    "transport",
    "transport_consistency",
    "volume_law",
    "level_set",
    "u_substitution",
    "negative_control",
)


def bundled_scenario_path(name):
    """Path of a bundled scenario by bare name (without .ini)."""
    path = Path(__file__).parent / "scenarios" / f"{name}.ini"
    return path if path.exists() else None


def bundled_scenario_names():
    folder = Path(__file__).parent / "scenarios"
    return sorted(p.stem for p in folder.glob("*.ini"))


class _Section:
    """One config section with typed, error-reporting accessors."""

    def __init__(self, name, mapping):
        self.name = name
        self.mapping = dict(mapping)

    def fail(self, field, message):
        raise ConfigError(self.name, field, message)

    def raw(self, field, default=None, required=False):
        if field in self.mapping:
            return self.mapping[field].strip()
        if required:
            self.fail(field, "required field is missing")
        return default

    def floatval(self, field, default=None, required=False):
        raw = self.raw(field, required=required)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            self.fail(field, f"not a number: {raw!r}")

    def intval(self, field, default=None, required=False):
        raw = self.raw(field, required=required)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            self.fail(field, f"not an integer: {raw!r}")

    def floatlist(self, field, required=False):
        raw = self.raw(field, required=required)
        if raw is None:
            return None
        try:
            return [float(part) for part in raw.split(",")]
        except ValueError:
            self.fail(field, f"not a comma-separated list of numbers: {raw!r}")

    def boundslist(self, field, required=False):
        raw = self.raw(field, required=required)
        if raw is None:
            return None
        bounds = []
        for part in raw.split(","):
            pieces = part.split(":")
            if len(pieces) != 2:
                self.fail(field, f"expected low:high pairs, got {part.strip()!r}")
            try:
                bounds.append((float(pieces[0]), float(pieces[1])))
            except ValueError:
                self.fail(field, f"not numeric bounds: {part.strip()!r}")
        return tuple(bounds)


@dataclass
class ScenarioConfig:
    """Validated scenario: field, integration plan, multiplier plan, checks."""

    name: str
    field_spec: object
    t_end: float
    x0: np.ndarray
    samples: int
    settings: IntegratorSettings
    multiplier_source: str
    multiplier_params: dict
    checks: tuple
    sampler_bounds: tuple | None
    sampler_constraint_text: str | None
    seed: int
    count: int
    tolerances: dict
    levels: tuple
    level_q0: np.ndarray | None
    level_p0: np.ndarray | None
    level_t_end: float
    region_margin: float
    neg_factor: float
    neg_coeff: float
    trajectory_path: str
    report_path: str
    lienard_data: dict = dc_field(default_factory=dict)


def _build_field(sec):
    family = sec.raw("family", required=True)
    n = sec.intval("n", default=1)

    def build(field_name, builder, *args):
        try:
            return builder(*args)
        except ConfigError:
            raise
        except JlmLabError as err:
            sec.fail(field_name, f"cannot build {family} field: {err}")

    if family == "conservative":
        return build("H", build_hamiltonian_field, sec.raw("H", required=True), n)
    if family == "conformal":
        return build(
            "H",
            build_conformal_field,
            sec.raw("H", required=True),
            sec.floatval("gamma", required=True),
            n,
        )
    if family == "contact":
        return build("h", build_contact_field, sec.raw("h", required=True), n)
    if family == "generalized_conformal":
        return build(
            "K",
            build_generalized_conformal_field,
            sec.raw("H", required=True),
            sec.raw("K", required=True),
            n,
        )
    if family == "lienard":
        return build(
            "f",
            build_lienard_field,
            sec.raw("f", required=True),
            sec.raw("g", required=True),
            sec.floatval("mass", default=1.0),
        )
    sec.fail("family", f"unknown family {family!r}")


def load_scenario(path):
    """Parse and validate a scenario INI file into a ScenarioConfig."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case-sensitive (H vs h)
    read = parser.read(path)
    if not read:
        raise ConfigError("scenario", "path", f"cannot read {path!r}")

    def section(name, required=True):
        if not parser.has_section(name):
            if required:
                raise ConfigError(name, "(section)", "required section is missing")
            return _Section(name, {})
        return _Section(name, parser[name])

    sys_sec = section("system")
    field_spec = _build_field(sys_sec)

    integ = section("integrate")
    method = integ.raw("method", default="rk45_adaptive")
    try:
        settings = IntegratorSettings(
            method=method,
            dt=integ.floatval("dt", default=1e-3),
            rtol=integ.floatval("rtol", default=1e-10),
            atol=integ.floatval("atol", default=1e-12),
            max_steps=integ.intval("max_steps", default=10_000_000),
            max_step=integ.floatval("max_step", default=None),
        )
    except ValueError as err:
        integ.fail("method", str(err))
    t_end = integ.floatval("t_end", required=True)
    x0 = integ.floatlist("x0", required=True)
    if len(x0) != field_spec.dim:
        hint = ""
        if field_spec.family == "contact" and len(x0) == field_spec.dim - 1:
            hint = "; the contact coordinate s is missing"
        integ.fail(
            "x0",
            f"has {len(x0)} coordinates but the field needs {field_spec.dim} "
            f"({', '.join(phase_variables(field_spec.n, field_spec.family == 'contact'))})"
            + hint,
        )
    samples = integ.intval("samples", default=201)
    if samples < 2:
        integ.fail("samples", "need at least 2 sample times")

    mult = section("multiplier", required=False)
    source = mult.raw("source", default="transport")
    if source not in ("closed_form", "transport"):
        mult.fail("source", f"unknown source {source!r}")
    mparams = {}
    if source == "closed_form":
        if field_spec.family == "conformal":
            mparams["k"] = mult.floatval("k", required=True)
        elif field_spec.family == "contact":
            mparams["region"] = mult.raw("region", default="h>0")
        elif field_spec.family == "lienard":
            mparams["root"] = mult.raw("root", default="both")
            if mparams["root"] not in ("both", "l_minus", "l_plus"):
                mult.fail("root", f"expected both|l_minus|l_plus, got {mparams['root']!r}")
            mparams["qmin"] = mult.floatval("qmin", default=-2.0)
            mparams["qmax"] = mult.floatval("qmax", default=2.0)
        else:
            mult.fail(
                "source",
                f"no closed form is available for family {field_spec.family!r}; "
                "use source = transport",
            )

    ver = section("verify", required=False)
    raw_checks = ver.raw("checks", default="")
    checks = tuple(c.strip() for c in raw_checks.split(",") if c.strip())
    for c in checks:
        if c not in _KNOWN_CHECKS:
            ver.fail("checks", f"unknown check {c!r} (known: {', '.join(_KNOWN_CHECKS)})")
    needs_closed = {"div_mx", "transport", "transport_consistency",
                    "u_substitution", "negative_control"}
    if source == "transport" and needs_closed & set(checks):
        ver.fail(
            "checks",
            f"{sorted(needs_closed & set(checks))} need a closed-form multiplier "
            "but [multiplier] source = transport",
        )
    if "u_substitution" in checks and field_spec.family != "lienard":
        ver.fail("checks", "u_substitution applies to lienard fields only")
    if "level_set" in checks and field_spec.family != "contact":
        ver.fail("checks", "level_set applies to contact fields only")

    bounds = ver.boundslist("bounds")
    if {"div_mx", "negative_control"} & set(checks):
        if bounds is None:
            ver.fail("bounds", "required when div_mx/negative_control are enabled")
        if len(bounds) != field_spec.dim:
            ver.fail("bounds", f"{len(bounds)} pairs for a dim-{field_spec.dim} field")

    tolerances = {
        "div": ver.floatval("tol_div", default=1e-8),
        "transport": ver.floatval("tol_transport", default=1e-6),
        "law": ver.floatval("tol_law", default=1e-8),
        "level": ver.floatval("tol_level", default=1e-8),
        "decay": ver.floatval("tol_decay", default=1e-6),
        "u": ver.floatval("tol_u", default=1e-6),
    }
    levels = tuple(ver.floatlist("levels") or [0.0])
    level_q0 = ver.floatlist("level_q0")
    level_p0 = ver.floatlist("level_p0")
    if "level_set" in checks:
        if level_q0 is None or level_p0 is None:
            ver.fail("level_q0", "level_q0/level_p0 required for the level_set check")
        if len(level_q0) != field_spec.n or len(level_p0) != field_spec.n:
            ver.fail("level_q0", f"need {field_spec.n} coordinates each")

    out = section("output", required=False)
    name = Path(path).stem
    return ScenarioConfig(
        name=name,
        field_spec=field_spec,
        t_end=t_end,
        x0=np.array(x0, dtype=float),
        samples=samples,
        settings=settings,
        multiplier_source=source,
        multiplier_params=mparams,
        checks=checks,
        sampler_bounds=bounds,
        sampler_constraint_text=ver.raw("constraint"),
        seed=ver.intval("seed", default=0),
        count=ver.intval("count", default=1000),
        tolerances=tolerances,
        levels=levels,
        level_q0=None if level_q0 is None else np.array(level_q0),
        level_p0=None if level_p0 is None else np.array(level_p0),
        level_t_end=ver.floatval("level_t_end", default=t_end),
        region_margin=ver.floatval("margin", default=0.1),
        neg_factor=ver.floatval("neg_factor", default=1e3),
        neg_coeff=ver.floatval("neg_coeff", default=0.01),
        trajectory_path=out.raw("trajectory", default=f"{name}.csv"),
        report_path=out.raw("report", default=f"{name}.report"),
    )


def _build_multipliers(cfg):
    """Label -> MultiplierSpec for the scenario; records Cheillini data."""
    field = cfg.field_spec
    source = cfg.multiplier_source
    if source == "transport":
        return {"m": transported_reference(field.family, cfg.x0)}
    if field.family == "conformal":
        M = multiplier_conformal_homogeneous(
            field.hamiltonian, cfg.multiplier_params["k"], field.n
        )
        return {"m": M}
    if field.family == "contact":
        M = multiplier_contact(
            field.hamiltonian, field.n, region=cfg.multiplier_params["region"]
        )
        return {"m": M}
    # lienard: V' = m*g, K = f
    v_prime = field.g * field.mass
    q_samples = np.linspace(
        cfg.multiplier_params["qmin"], cfg.multiplier_params["qmax"], 17
    )
    roots = cheillini_roots(v_prime, field.f, field.mass, q_samples)
    cfg.lienard_data = {
        "c": roots.c,
        "residual_max": roots.residual_max,
        "l_minus": roots.l_minus,
        "l_plus": roots.l_plus,
    }
    out = {}
    if cfg.multiplier_params["root"] in ("both", "l_minus"):
        out["m_minus"] = multiplier_lienard(v_prime, field.f, field.mass, roots.l_minus)
    if cfg.multiplier_params["root"] in ("both", "l_plus"):
        out["m_plus"] = multiplier_lienard(v_prime, field.f, field.mass, roots.l_plus)
    return out


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    if isinstance(value, np.ndarray):
        return _fmt(value.tolist())
    return str(value)


def _write_csv(path, cfg, traj):
    field = cfg.field_spec
    names = list(phase_variables(field.n, field.family == "contact"))
    header = ["t"] + names + ["ln_det_J", "ln_M"]
    energy = field.hamiltonian is not None
    if energy:
        header.append("H_or_h")
    lines = [",".join(header)]
    for i, t in enumerate(traj.times):
        row = [repr(float(t))]
        row += [repr(float(v)) for v in traj.states[i]]
        row.append(repr(float(traj.log_volume[i])))
        row.append(repr(float(traj.log_multiplier[i])))
        if energy:
            row.append(repr(field.hamiltonian.evaluate(traj.states[i])))
        lines.append(",".join(row))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n")


def _report_entry(label, report):
    lines = [f"[check.{label}]"]
    lines.append(f"pass = {report.passed}")
    lines.append(f"tolerance = {_fmt(report.tolerance)}")
    lines.append(f"residual_max = {_fmt(report.residual_max)}")
    lines.append(f"residual_mean = {_fmt(report.residual_mean)}")
    for key in sorted(report.quantiles):
        lines.append(f"{key} = {_fmt(report.quantiles[key])}")
    lines.append(f"count = {report.count}")
    for rank, (res, where) in enumerate(report.witnesses, start=1):
        lines.append(f"witness_{rank} = residual={_fmt(res)} at={_fmt(where)}")
    for key in sorted(report.details):
        lines.append(f"{key} = {_fmt(report.details[key])}")
    return lines


def _skip_entry(label, reason):
    return [f"[check.{label}]", "status = skipped", f"reason = {reason}"]


def _transport_consistency(cfg, M, traj):
    """|transported ln M - closed-form ln M| along the scenario trajectory."""
    ln_m0 = M.log_abs(traj.states[0])
    residuals = []
    times = []
    exit_time = None
    for t, x, lm in zip(traj.times, traj.states, traj.log_multiplier):
        if not M.in_region(x):
            exit_time = float(t)
            break
        residuals.append(abs(lm - (M.log_abs(x) - ln_m0)))
        times.append(float(t))
    return VerificationReport.from_residuals(
        "transport_consistency",
        residuals,
        cfg.tolerances["transport"],
        witnesses_of=times,
        domain_exit_time=exit_time,
        multiplier=M.describe(),
    )


def run_scenario(cfg, out_dir=None):
    """Run a loaded scenario; returns (exit_code, report_text).

    Writes the trajectory CSV and the report file.  Exit code 0 when every
    enabled check passes, 1 when any fails.  Config errors (2) and numerical
    failures (3) surface as exceptions for the CLI to map.
    """
    field = cfg.field_spec
    multipliers = _build_multipliers(cfg)

    traj = integrate_with_logvolume(
        field, cfg.x0, 0.0, cfg.t_end, cfg.settings, samples=cfg.samples
    )

    blocks = []
    blocks.append("[scenario]")
    blocks.append(f"name = {cfg.name}")
    blocks.append(f"version = {_version}")
    blocks.append(f"backend = {BACKEND}")
    blocks.append(f"field = {field.describe()}")
    blocks.append(f"x0 = {_fmt(cfg.x0)}")
    blocks.append(f"t_end = {_fmt(cfg.t_end)}")
    blocks.append(f"method = {cfg.settings.method}")
    blocks.append(f"rtol = {_fmt(cfg.settings.rtol)}")
    blocks.append(f"atol = {_fmt(cfg.settings.atol)}")
    blocks.append(f"steps = {traj.stats.n_steps}")
    blocks.append(f"rejected_steps = {traj.stats.n_rejected}")
    if field.note:
        blocks.append(f"note = {field.note}")

    if cfg.lienard_data:
        blocks.append("")
        blocks.append("[cheillini]")
        for key in ("c", "residual_max", "l_minus", "l_plus"):
            blocks.append(f"{key} = {_fmt(cfg.lienard_data[key])}")

    for label in sorted(multipliers):
        M = multipliers[label]
        blocks.append("")
        blocks.append(f"[multiplier.{label}]")
        blocks.append(f"kind = {M.kind}")
        blocks.append(f"description = {M.describe()}")
        if M.kind == "transported":
            blocks.append("claim = no closed form claimed; ln M transported along the flow")

    reports = []

    def run_per_multiplier(check_name, fn):
        for label in sorted(multipliers):
            M = multipliers[label]
            if M.expr is None:
                continue
            reports.append((f"{label}.{check_name}", fn(M)))

    sampler_cache = {}

    def sampler_for(M):
        key = id(M)
        if key not in sampler_cache:
            if cfg.sampler_constraint_text is not None:
                constraint = Expr.parse(
                    cfg.sampler_constraint_text,
                    phase_variables(field.n, field.family == "contact"),
                )
            elif M.constraint is not None:
                constraint = M.constraint - cfg.region_margin
            else:
                constraint = None
            sampler_cache[key] = RegionSampler(
                bounds=cfg.sampler_bounds,
                constraint=constraint,
                seed=cfg.seed,
                count=cfg.count,
            )
        return sampler_cache[key]

    for check in cfg.checks:
        if check == "div_mx":
            run_per_multiplier(
                "div_mx",
                lambda M: check_div_mx(field, M, sampler_for(M), cfg.tolerances["div"]),
            )
        elif check == "transport":
            run_per_multiplier(
                "transport",
                lambda M: check_transport(
                    field, M, cfg.x0, cfg.t_end, cfg.settings,
                    cfg.tolerances["transport"], cfg.samples,
                ),
            )
        elif check == "transport_consistency":
            run_per_multiplier(
                "transport_consistency",
                lambda M: _transport_consistency(cfg, M, traj),
            )
        elif check == "u_substitution":
            run_per_multiplier(
                "u_substitution",
                lambda M: check_u_substitution(
                    field, M, cfg.x0, cfg.t_end, cfg.settings,
                    cfg.tolerances["u"], cfg.samples,
                ),
            )
        elif check == "negative_control":
            run_per_multiplier(
                "negative_control",
                lambda M: check_negative_control(
                    field,
                    perturbed_multiplier(M, cfg.neg_coeff),
                    sampler_for(M),
                    cfg.tolerances["div"],
                    cfg.neg_factor,
                ),
            )
        elif check == "volume_law":
            try:
                reports.append(
                    (
                        "volume_law",
                        check_volume_law(
                            field, cfg.x0, cfg.t_end, cfg.settings,
                            cfg.tolerances["law"], cfg.samples,
                        ),
                    )
                )
            except NotConstantDivergenceError as err:
                reports.append(("volume_law", str(err)))
        elif check == "level_set":
            for level in cfg.levels:
                tol = cfg.tolerances["level"] if level == 0.0 else cfg.tolerances["decay"]
                label = "level_set" if level == 0.0 else f"level_set_at_{level:g}"
                reports.append(
                    (
                        label,
                        check_level_set(
                            field, cfg.level_q0, cfg.level_p0, cfg.level_t_end,
                            cfg.settings, tol, level, cfg.samples,
                        ),
                    )
                )

    ran = [(label, rep) for label, rep in reports if not isinstance(rep, str)]
    n_passed = sum(1 for _, rep in ran if rep.passed)
    all_pass = n_passed == len(ran)

    for label, rep in reports:
        blocks.append("")
        if isinstance(rep, str):
            blocks.extend(_skip_entry(label, rep))
        else:
            blocks.extend(_report_entry(label, rep))

    blocks.append("")
    blocks.append("[summary]")
    blocks.append(f"checks_run = {len(ran)}")
    blocks.append(f"checks_passed = {n_passed}")
    blocks.append(f"checks_skipped = {len(reports) - len(ran)}")
    blocks.append(f"all_pass = {all_pass}")
    report_text = "\n".join(blocks) + "\n"

    base = Path(out_dir) if out_dir else Path(".")
    traj_path = base / cfg.trajectory_path
    report_path = base / cfg.report_path
    _write_csv(traj_path, cfg, traj)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(report_text)

    return (0 if all_pass else 1), report_text
