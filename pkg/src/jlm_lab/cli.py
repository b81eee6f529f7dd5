"""Command-line interface: scenario runs, Cheillini diagnosis, divergence scans.

Exit codes: 0 all checks pass, 1 verification failure, 2 configuration error,
3 numerical failure.  Set JLM_LAB_MAX_WORKERS to cap sample-parallel workers
(default 1; output is canonical either way).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .errors import (
    CheilliniNotSatisfiedError,
    ComplexRootsError,
    ConfigError,
    ExprSyntaxError,
    JlmLabError,
    KVanishesError,
    UnknownVariableError,
)
from .multiplier import cheillini_roots, multiplier_lienard
from .scenario import (
    bundled_scenario_names,
    bundled_scenario_path,
    load_scenario,
    run_scenario,
)
from .systems import divergence_closed_form, field_divergence, phase_variables

EXIT_OK = 0
EXIT_VERIFICATION = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _resolve_config(name_or_path):
    path = Path(name_or_path)
    if path.exists():
        return path
    bundled = bundled_scenario_path(name_or_path)
    if bundled is not None:
        return bundled
    raise ConfigError(
        "scenario",
        "path",
        f"{name_or_path!r} is neither a file nor a bundled scenario "
        f"(bundled: {', '.join(bundled_scenario_names())})",
    )


def _cmd_run(args):
    cfg = load_scenario(_resolve_config(args.config))
    code, report_text = run_scenario(cfg, out_dir=args.out_dir)
    sys.stdout.write(report_text)
    return code


def _cmd_cheillini(args):
    q_samples = np.linspace(args.qmin, args.qmax, args.samples)
    try:
        roots = cheillini_roots(args.vprime, args.k, args.mass, q_samples)
    except CheilliniNotSatisfiedError as err:
        print("Cheillini condition NOT satisfied.")
        print(f"c(q) = (d/dq [V'/(mK)])/K varies by {err.residual_max!r} "
              f"around mean {err.mean!r}:")
        for q, c in zip(err.q_samples, err.c_values):
            print(f"  q = {q!r:24}  c = {c!r}")
        return EXIT_OK
    except (ComplexRootsError, KVanishesError) as err:
        print(f"Cheillini condition degenerate: {err}")
        return EXIT_OK

    print(
        f"Cheillini condition satisfied on [{args.qmin!r}, {args.qmax!r}] "
        f"({args.samples} samples): c = {roots.c!r}, "
        f"max deviation {roots.residual_max!r}"
    )
    print(f"roots of l^2 + l + c = 0: l_minus = {roots.l_minus!r}, "
          f"l_plus = {roots.l_plus!r}")
    for name, l in (("l_minus", roots.l_minus), ("l_plus", roots.l_plus)):
        M = multiplier_lienard(args.vprime, args.k, args.mass, l)
        print(f"M({name}) = {M.expr}   valid where {M.constraint} > 0")
    return EXIT_OK


def _parse_grid(spec, dim, names):
    parts = [p.strip() for p in spec.split(",")]
    if len(parts) != dim:
        raise ConfigError(
            "grid", "spec",
            f"{len(parts)} axes for a dim-{dim} field (coordinates {', '.join(names)})",
        )
    axes = []
    for name, part in zip(names, parts):
        pieces = part.split(":")
        if len(pieces) != 3:
            raise ConfigError("grid", name, f"expected low:high:count, got {part!r}")
        try:
            low, high, count = float(pieces[0]), float(pieces[1]), int(pieces[2])
        except ValueError:
            raise ConfigError("grid", name, f"malformed axis {part!r}") from None
        if count < 1:
            raise ConfigError("grid", name, "count must be >= 1")
        axes.append(np.array([low]) if count == 1 else np.linspace(low, high, count))
    return axes


def _cmd_divergence_scan(args):
    cfg = load_scenario(_resolve_config(args.config))
    field = cfg.field_spec
    names = phase_variables(field.n, field.family == "contact")
    axes = _parse_grid(args.grid, field.dim, names)
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=-1)

    lines = [",".join(list(names) + ["div", "closed_form", "abs_error"])]
    for x in points:
        div = field_divergence(field, x)
        closed = divergence_closed_form(field, x)
        row = [repr(float(v)) for v in x]
        row += [repr(div), repr(closed), repr(abs(div - closed))]
        lines.append(",".join(row))
    text = "\n".join(lines) + "\n"
    if args.output:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        Path(args.output).write_text(text)
        print(f"wrote {len(points)} grid points to {args.output}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="jlm-lab",
        description=(
            "Invariant phase-space measures for dissipative vector fields via "
            "Jacobi last multipliers: run verification scenarios, solve the "
            "Cheillini condition, scan divergences."
        ),
        epilog="Environment: JLM_LAB_MAX_WORKERS caps sample-parallel workers; "
               "JLM_LAB_BACKEND selects the jet kernel (cython|python).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario config (path or bundled name)")
    p_run.add_argument("config", help="scenario .ini path or bundled scenario name")
    p_run.add_argument("--out-dir", default=None,
                       help="directory prefix for relative output paths")
    p_run.set_defaults(func=_cmd_run)

    p_ch = sub.add_parser("cheillini",
                          help="solve the Cheillini condition and print multipliers")
    p_ch.add_argument("--vprime", required=True, help="V'(q) as expression text")
    p_ch.add_argument("--k", required=True, help="damping strength K(q)")
    p_ch.add_argument("--mass", type=float, default=1.0)
    p_ch.add_argument("--qmin", type=float, default=-2.0)
    p_ch.add_argument("--qmax", type=float, default=2.0)
    p_ch.add_argument("--samples", type=int, default=17)
    p_ch.set_defaults(func=_cmd_cheillini)

    p_ds = sub.add_parser("divergence-scan",
                          help="tabulate div X against the closed form on a grid")
    p_ds.add_argument("config", help="scenario .ini path or bundled scenario name")
    p_ds.add_argument("--grid", required=True,
                      help="per-coordinate low:high:count, comma separated")
    p_ds.add_argument("--output", default=None, help="CSV path (default: stdout)")
    p_ds.set_defaults(func=_cmd_divergence_scan)
    return parser


_VALUE_OPTIONS = ("--vprime", "--k", "--grid", "--output", "--out-dir")


def _join_dash_values(argv):
    """Merge '--opt -value' into '--opt=-value' so expressions and grids may
    start with a minus sign without argparse mistaking them for flags."""
    out = []
    skip = False
    for i, tok in enumerate(argv):
        if skip:
            skip = False
            continue
        if tok in _VALUE_OPTIONS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{tok}={argv[i + 1]}")
            skip = True
        else:
            out.append(tok)
    return out


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(_join_dash_values(sys.argv[1:] if argv is None else argv))
    try:
        return args.func(args)
    except (ConfigError, ExprSyntaxError, UnknownVariableError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except JlmLabError as err:
        print(f"numerical failure: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
