"""Command-line interface: ``pwmbif <command> ...``.

Exit status is 0 on success, 2 for usage or document errors, 3 for
numerical failures and 4 for I/O failures.
"""

import argparse
import contextlib
import io
import shlex
import sys

import numpy as np

from . import averaged, bifurcation, cycle, document, orbits
from .errors import DocumentError, NoBracketError, NoOrbitError, NumericalError
from .model import DEFAULTS, PRESETS, DiscreteDutyControl, preset, saturated_always_on_check

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

# A sampled-data spectral radius this close to 1 counts as "at the edge".
DISAGREE_MARGIN = 0.01


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument helpers


def _float_list(text):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _assignment(text):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected name=value, got {text!r}")
    try:
        return key.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{key}: {value!r} is not a number")


def _add_spec_args(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=PRESETS)
    src.add_argument("--config", metavar="PATH", help="converter document (JSON)")
    p.add_argument("--set", dest="overrides", action="append", type=_assignment, default=[],
                   metavar="NAME=VALUE", help="override a physical parameter (repeatable)")


def _load_spec(args):
    spec = preset(args.preset) if args.preset else document.load_document(args.config)
    if args.overrides:
        try:
            spec = spec.with_params(**dict(args.overrides))
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
    return spec


def _out_stream(path):
    return contextlib.nullcontext(sys.stdout) if path in (None, "-") else open(path, "w", newline="")


def _emit_csv(path, writer):
    """Render CSV in memory first so a failure never leaves a partial file."""
    buf = io.StringIO()
    writer(buf)
    with _out_stream(path) as fh:
        fh.write(buf.getvalue())


def _report_stream(args):
    # keep stdout clean for CSV when no --out file is given
    return sys.stderr if getattr(args, "out", "-") in (None, "-") else sys.stdout


# ---------------------------------------------------------------------------
# commands


def cmd_presets(args):
    if args.action == "list":
        for name in PRESETS:
            print(name)
        return EXIT_OK
    if args.name is None:
        raise UsageError(f"presets {args.action} needs a preset name")
    if args.action == "show":
        rep = document.Report(f"presets show {args.name}", preset(args.name))
        for key, value in DEFAULTS[args.name].items():
            rep.add(key, value)
        sys.stdout.write(rep.render())
    else:
        spec = preset(args.name)
        sys.stdout.write(document.dumps(document.spec_to_document(spec, explicit=args.explicit)))
    return EXIT_OK


def _initial_state(spec, args):
    if args.x0 is not None:
        if len(args.x0) != spec.N:
            raise UsageError(f"--x0 needs {spec.N} values")
        return np.array(args.x0), "explicit"
    if args.from_orbit is not None:
        return orbits.find_orbit(spec, m=args.from_orbit).x0, f"orbit m={args.from_orbit}"
    try:
        D = averaged.consistent_duty(spec)
    except NoBracketError:
        # no averaged operating point (e.g. discrete law past its fold): use the orbit
        return orbits.find_orbit(spec).x0, "orbit m=1 (no averaged operating point)"
    return averaged.averaged_equilibrium(spec, D), "averaged"


def _orbit_m(text):
    value = text.split("=", 1)[1] if text.startswith("m=") else text
    if value not in ("1", "2"):
        raise argparse.ArgumentTypeError("--from-orbit takes m=1 or m=2")
    return int(value)


def cmd_simulate(args):
    if args.cycles < 1:
        raise UsageError("--cycles must be at least 1")
    if args.samples_per_cycle < 2:
        raise UsageError("--samples-per-cycle must be at least 2")
    spec = _load_spec(args)
    x0, source = _initial_state(spec, args)
    samples = cycle.simulate(spec, x0, args.cycles, args.samples_per_cycle)
    _emit_csv(args.out, lambda fh: document.trajectory_csv(spec, samples, fh))
    rep = document.Report(args.command_line, spec)
    rep.add("x0_source", source)
    rep.add("x0", x0)
    rep.add("cycles", args.cycles)
    rep.add("rows", len(samples))
    _report_stream(args).write(rep.render())
    return EXIT_OK


def _parse_guess(spec, guesses):
    guess = duty = None
    for text in guesses or []:
        key, _, value = text.partition("=")
        if key == "duty":
            duty = float(value)
            if not 0.0 < duty < 1.0:
                raise UsageError("duty guess must lie in (0, 1)")
        elif key == "x":
            guess = _float_list(value)
        else:
            raise UsageError(f"--guess takes duty=F or x=A,B,..., got {text!r}")
    return guess, duty


def _report_orbit(rep, spec, orbit):
    rep.add("m", orbit.m)
    rep.add("x0", orbit.x0)
    rep.add("d_seconds", list(orbit.d))
    rep.add("duty_stage1", list(orbit.duty))
    rep.add("duty_on", list(orbit.on_duty))
    rep.add("residual", orbit.residual)
    rep.add("guess", orbit.guess)
    if orbit.near_fold:
        rep.warn(f"Newton Jacobian condition {document.fmt(orbit.condition)}: orbit is close to a fold")


def _report_stability(rep, stab):
    rep.add("jacobian_method", stab.method)
    rep.add("eigenvalues", list(stab.eigenvalues))
    rep.add("spectral_radius", stab.spectral_radius)
    rep.add("classification", stab.classification)
    rep.add("critical_eigenvalue", stab.critical_eigenvalue)


def _phi_agreement(a, b, floor=1e-8):
    mask = np.abs(b) > floor
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(a[mask] - b[mask]) / np.abs(b[mask])))


def _no_interior_orbit(spec, rep, exc):
    """Discrete-duty fallback: report the always-on equilibrium if it exists."""
    if not isinstance(spec.control, DiscreteDutyControl):
        return False
    feasible, x_eq = saturated_always_on_check(spec)
    if not feasible:
        return False
    rep.add("interior_orbit", "none")
    if exc is not None:
        rep.add("search", str(exc))
    rep.add("saturated_fixed_point", x_eq)
    rep.add("saturation", cycle.SAT_STAGE2 if spec.on_stage == 2 else cycle.SAT_STAGE1)
    A_on, _ = spec.stage(spec.on_stage)
    from .numerics import eigenvalues, mat_exp
    stab = orbits.classify(eigenvalues(mat_exp(A_on, spec.T)))
    rep.add("eigenvalues", list(stab.eigenvalues))
    rep.add("spectral_radius", stab.spectral_radius)
    rep.add("classification", stab.classification)
    return True


def cmd_orbit(args):
    spec = _load_spec(args)
    guess, duty = _parse_guess(spec, args.guess)
    rep = document.Report(args.command_line, spec)
    try:
        orbit = orbits.find_orbit(spec, m=args.m, guess=guess, duty_guess=duty)
    except NoOrbitError as exc:
        if args.m == 1 and _no_interior_orbit(spec, rep, exc):
            sys.stdout.write(rep.render())
            return EXIT_OK
        for a in exc.attempts:
            rep.warn(f"attempt {a}")
        sys.stdout.write(rep.render())
        raise
    if orbit.is_saturated and args.m == 1 and _no_interior_orbit(spec, rep, None):
        sys.stdout.write(rep.render())
        return EXIT_OK
    _report_orbit(rep, spec, orbit)
    stab = orbits.analyze_orbit(spec, orbit)
    _report_stability(rep, stab)
    if stab.method == "closed_form":
        fd = orbits.phi_finite_difference(spec, orbit)
        rep.add("closed_form_vs_fd_max_rel_diff", _phi_agreement(stab.phi, fd))
    sys.stdout.write(rep.render())
    return EXIT_OK


def cmd_eigs(args):
    spec = _load_spec(args)
    guess, duty = _parse_guess(spec, args.guess)
    orbit = orbits.find_orbit(spec, m=args.m, guess=guess, duty_guess=duty)
    rep = document.Report(args.command_line, spec)
    rep.add("x0", orbit.x0)
    rep.add("duty_stage1", list(orbit.duty))
    from .numerics import eigenvalues
    fd = orbits.phi_finite_difference(spec, orbit)
    methods = [("finite_difference", fd)]
    try:
        phi, name = orbits.orbit_jacobian(spec, orbit)
        if name != "finite_difference":
            methods.insert(0, (name, phi))
    except NumericalError as exc:
        rep.warn(str(exc))
    for name, phi in methods:
        rep.add(f"{name}.eigenvalues", list(eigenvalues(phi)))
        if args.matrix:
            for i, row in enumerate(phi):
                rep.add(f"{name}.phi[{i}]", row)
    if len(methods) == 2:
        rep.add("max_rel_diff", _phi_agreement(methods[0][1], fd))
    sys.stdout.write(rep.render())
    return EXIT_OK


def cmd_sweep(args):
    if args.steps < 2:
        raise UsageError("--steps must be at least 2")
    spec = _load_spec(args)
    rows = bifurcation.sweep(spec, args.param, args.start, args.stop, args.steps, m=args.m)
    _emit_csv(args.out, lambda fh: document.sweep_csv(spec, rows, fh, args.param))
    rep = document.Report(args.command_line, spec)
    rep.add("rows", len(rows))
    rep.add("rows_without_orbit", sum(r.orbit is None for r in rows))
    rep.add("rows_saturated", sum(r.status == "saturated" for r in rows))
    for r in rows:
        if r.orbit is None:
            rep.warn(f"{args.param}={document.fmt(r.param_value)}: {r.status}")
    _report_stream(args).write(rep.render())
    return EXIT_OK


def cmd_locate(args):
    spec = _load_spec(args)
    point = bifurcation.locate_bifurcation(spec, args.param, args.bracket, args.kind, xtol=args.xtol)
    rep = document.Report(args.command_line, spec)
    rep.add("kind", point.kind)
    rep.add(args.param, point.param_value)
    rep.add("bracket", list(point.bracket))
    rep.add("critical_eigenvalue", point.critical_eigenvalue)
    rep.add("eigenvalues", list(point.report.eigenvalues))
    rep.add("classification", point.report.classification)
    rep.add("x0", point.orbit.x0)
    rep.add("duty_stage1", list(point.orbit.duty))
    if point.modulation_frequency is not None:
        rep.add("modulation_frequency_hz", point.modulation_frequency)
    if point.orbit.near_fold:
        rep.warn("orbit Jacobian is nearly singular here (fold)")
    sys.stdout.write(rep.render())
    return EXIT_OK


def cmd_bifdiag(args):
    if args.steps < 1:
        raise UsageError("--steps must be at least 1")
    if args.burn_in < 0 or args.record < 1:
        raise UsageError("need --burn-in >= 0 and --record >= 1")
    spec = _load_spec(args)
    lo, hi = sorted((args.start, args.stop))
    start, stop = (hi, lo) if args.inherit == "down" else (lo, hi)
    samples = bifurcation.brute_force_diagram(
        spec, args.param, start, stop, args.steps, burn_in=args.burn_in, record=args.record,
        inherit_state=args.inherit != "none", n_jobs=args.jobs)
    _emit_csv(args.out, lambda fh: document.bifdiag_csv(samples, fh, args.param))
    rep = document.Report(args.command_line, spec)
    rep.add("points", len(samples))
    rep.add("direction", args.inherit)
    _report_stream(args).write(rep.render())
    return EXIT_OK


def _sampled_verdict(spec):
    orbit = orbits.find_orbit(spec)
    return orbit, orbits.analyze_orbit(spec, orbit)


def cmd_averaged(args):
    spec = _load_spec(args)
    rep = document.Report(args.command_line, spec)
    orbit = stab = None
    try:
        orbit, stab = _sampled_verdict(spec)
    except NumericalError as exc:
        rep.warn(f"no sampled-data orbit for comparison: {exc}")
    D_c = args.duty if args.duty is not None else averaged.consistent_duty(spec, orbit=orbit)
    rep.add("D_c", D_c)
    rep.add("stage1_fraction", averaged.stage1_fraction(spec, D_c))
    rep.add("X_ave", averaged.averaged_equilibrium(spec, D_c))
    if not spec.is_ramp:
        rep.add("averaged_verdict", "unavailable (linearization needs ramp control)")
        sys.stdout.write(rep.render())
        return EXIT_OK
    op = averaged.operating_point(spec, D_c=D_c)
    rep.add("eigenvalues", list(op.eigenvalues))
    rep.add("averaged_verdict", "stable" if op.stable else "unstable")
    if op.near_hopf:
        rep.warn("averaged eigenvalue pair is close to the imaginary axis (Hopf)")
    if stab is not None:
        rep.add("sampled_spectral_radius", stab.spectral_radius)
        rep.add("sampled_classification", stab.classification)
        edge = stab.spectral_radius >= 1.0 - DISAGREE_MARGIN
        agree = (op.stable and not edge) or (not op.stable and stab.spectral_radius >= 1.0) \
            or (op.near_hopf and stab.classification == orbits.NEAR_NS)
        rep.add("sampled_vs_averaged", "agree" if agree else "disagree")
        if not agree:
            z = stab.critical_eigenvalue
            if abs(z.imag) > 0:
                edge_kind = "Neimark"
            else:
                edge_kind = "period-doubling" if z.real < 0 else "saddle-node"
            rep.warn(f"sampled-data analysis disagrees: multiplier {document.fmt(z)} has "
                     f"modulus {document.fmt(abs(z))} ({edge_kind} edge) while the averaged "
                     f"model is {'stable' if op.stable else 'unstable'}")
    sys.stdout.write(rep.render())
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(prog="pwmbif", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("presets", help="list, show or export the built-in converters")
    p.add_argument("action", choices=["list", "show", "export"])
    p.add_argument("name", nargs="?", choices=PRESETS)
    p.add_argument("--explicit", action="store_true", help="export full matrices")
    p.set_defaults(func=cmd_presets)

    p = sub.add_parser("simulate", help="waveform CSV")
    _add_spec_args(p)
    x0 = p.add_mutually_exclusive_group()
    x0.add_argument("--from-orbit", type=_orbit_m, metavar="m=1|m=2")
    x0.add_argument("--x0", type=_float_list, metavar="A,B,...")
    x0.add_argument("--from-averaged", action="store_true", help="start at the averaged equilibrium (default)")
    p.add_argument("--cycles", type=int, required=True)
    p.add_argument("--samples-per-cycle", type=int, default=32)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_simulate)

    for name, func, text in (("orbit", cmd_orbit, "periodic orbit and stability"),
                             ("eigs", cmd_eigs, "monodromy eigenvalues by every method")):
        p = sub.add_parser(name, help=text)
        _add_spec_args(p)
        p.add_argument("--m", type=int, choices=[1, 2], default=1)
        p.add_argument("--guess", action="append", metavar="duty=F|x=A,B,...")
        if name == "eigs":
            p.add_argument("--matrix", action="store_true", help="also print the matrices")
        p.set_defaults(func=func)

    p = sub.add_parser("sweep", help="multiplier locus CSV")
    _add_spec_args(p)
    p.add_argument("--param", default="vs")
    p.add_argument("--from", dest="start", type=float, required=True)
    p.add_argument("--to", dest="stop", type=float, required=True)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--m", type=int, choices=[1, 2], default=1)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("locate", help="bisect for a bifurcation point")
    _add_spec_args(p)
    p.add_argument("--param", default="vs")
    p.add_argument("--kind", choices=["pd", "sn", "ns"], required=True)
    p.add_argument("--bracket", type=float, nargs=2, required=True, metavar=("A", "B"))
    p.add_argument("--xtol", type=float, default=1e-4)
    p.set_defaults(func=cmd_locate)

    p = sub.add_parser("bifdiag", help="brute-force bifurcation diagram CSV")
    _add_spec_args(p)
    p.add_argument("--param", default="vs")
    p.add_argument("--from", dest="start", type=float, required=True)
    p.add_argument("--to", dest="stop", type=float, required=True)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--burn-in", type=int, default=bifurcation.BURN_IN)
    p.add_argument("--record", type=int, default=bifurcation.RECORD)
    p.add_argument("--inherit", choices=["up", "down", "none"], default="none")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_bifdiag)

    p = sub.add_parser("averaged", help="averaged-model linearization and comparison")
    _add_spec_args(p)
    p.add_argument("--duty", type=float, help="ON-stage duty (default: consistent duty)")
    p.set_defaults(func=cmd_averaged)
    return parser


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on bad usage
    args.command_line = " ".join(shlex.quote(a) for a in argv)
    try:
        return args.func(args)
    except (UsageError, DocumentError) as exc:
        print(f"pwmbif: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"pwmbif: numerical failure: {exc}", file=sys.stderr)
        for a in getattr(exc, "attempts", None) or []:
            print(f"  tried {a}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"pwmbif: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"pwmbif: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
