"""Periodic orbits of the stroboscopic map and their stability.

An m-periodic orbit (m = 1 or 2) is located by Newton's method.  Ramp-
controlled converters use a multiple-shooting residual whose unknowns are
the clock-instant states and the switching instants; discrete-duty
converters use the plain fixed-point residual ``P^m(x0) - x0``.

Stability comes from the eigenvalues of the monodromy matrix ``Phi``,
the Jacobian of the m-cycle map.  Three evaluations are available:
the closed form for ramp control, a chain-rule form for the discrete duty
law, and central finite differences (used for m = 2 and as an oracle).
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from . import cycle
from .errors import GrazingError, NoOrbitError, NonSmoothPointError, NumericalError
from .model import DiscreteDutyControl, RampControl, duty_command
from .numerics import NEWTON_TOL, as_vector, eigenvalues, fd_jacobian, newton_solve

NEAR_BAND = 1e-3
FOLD_CONDITION = 1e10
FD_STEP = 1e-6
FD_ROOT_TOL = 1e-15

STABLE = "stable"
UNSTABLE = "unstable"
NEAR_PD = "near_pd"
NEAR_SN = "near_sn"
NEAR_NS = "near_ns"


@dataclass(frozen=True, eq=False)
class PeriodicOrbit:
    """An m-periodic solution sampled at clock instants.

    ``duty`` holds the stage-1 fractions ``d_k / T``; ``on_duty`` the
    fractions of each cycle spent in the source-connected stage.
    """

    m: int
    x0: np.ndarray
    d: tuple
    residual: float
    duty: tuple
    on_duty: tuple
    states: np.ndarray
    saturated: tuple = ()
    near_fold: bool = False
    condition: float = 1.0
    guess: str = ""

    @property
    def is_saturated(self):
        return any(s != cycle.SAT_NONE for s in self.saturated)


@dataclass(frozen=True, eq=False)
class StabilityReport:
    eigenvalues: np.ndarray
    spectral_radius: float
    classification: str
    critical_eigenvalue: complex
    stable: bool
    method: str = ""
    phi: Optional[np.ndarray] = field(default=None, repr=False)


# ---------------------------------------------------------------------------
# residuals


def _cycle_end(spec, x, d):
    xd = cycle.stage_flow(spec, 1, x, d)
    return cycle.stage_flow(spec, 2, xd, spec.T - d), xd


def _split(spec, z, m):
    n = spec.N
    z = np.asarray(z, dtype=float)
    if z.size != m * (n + 1):
        raise ValueError(f"ramp residual expects {m * (n + 1)} unknowns, got {z.size}")
    return z[: m * n].reshape(m, n), z[m * n:]


def orbit_residual(spec, z, m=1):
    """Boundary-value residual of an m-periodic orbit.

    Ramp control: ``z = (x_0, ..., x_{m-1}, d_0, ..., d_{m-1})`` with the
    durations in seconds.  For each cycle k the residual holds the
    switching condition ``C x_k(d_k) + D u - h(d_k)`` followed by the
    continuity mismatch ``x_k(T) - x_{k+1}`` (indices modulo m), giving
    ``m (N + 1)`` entries.

    Discrete duty control: ``z = x_0`` and the residual is ``P^m(x_0) - x_0``.
    """
    if m not in (1, 2):
        raise ValueError("m must be 1 or 2")
    if not spec.is_ramp:
        x0 = as_vector(z, "z", spec.N)
        x = x0
        for _ in range(m):
            x = cycle.stroboscopic_map(spec, x).x_next
        return x - x0
    xs, ds = _split(spec, z, m)
    for d in ds:
        if not 0.0 < d < spec.T:
            raise ValueError(f"switching instant {d} outside (0, T); use the saturated branch")
    return _ramp_residual(spec, xs, ds)


def _ramp_residual(spec, xs, ds):
    ctl = spec.control
    m = len(ds)
    out = []
    for k in range(m):
        x_end, xd = _cycle_end(spec, xs[k], ds[k])
        g = ctl.C @ xd + ctl.D @ spec.u - (ctl.ramp.v_low + ctl.ramp.slope * ds[k])
        out.append([g])
        out.append(x_end - xs[(k + 1) % m])
    return np.concatenate(out)


# ---------------------------------------------------------------------------
# orbit search


def _orbit_from_states(spec, xs, ds, residual, cond, guess):
    T = spec.T
    m = len(ds)
    sat = []
    for d in ds:
        if d >= T:
            sat.append(cycle.SAT_STAGE1)
        elif d <= 0:
            sat.append(cycle.SAT_STAGE2)
        else:
            sat.append(cycle.SAT_NONE)
    duty = tuple(float(d / T) for d in ds)
    on = duty if spec.on_stage == 1 else tuple(1.0 - f for f in duty)
    return PeriodicOrbit(m=m, x0=np.array(xs[0]), d=tuple(float(d) for d in ds),
                         residual=float(residual), duty=duty, on_duty=on,
                         states=np.array(xs), saturated=tuple(sat),
                         near_fold=bool(cond > FOLD_CONDITION), condition=float(cond),
                         guess=guess)


def _solve_ramp(spec, xs, ds, tol):
    """Newton in scaled unknowns ``(x_k, d_k / T)``."""
    m, n = len(ds), spec.N
    T = spec.T

    def F(z):
        xs_ = z[: m * n].reshape(m, n)
        ds_ = z[m * n:] * T
        if np.any(ds_ <= 0) or np.any(ds_ >= T):
            return np.full(m * (n + 1), np.inf)
        return _ramp_residual(spec, xs_, ds_)

    z0 = np.concatenate([np.ravel(xs), np.asarray(ds) / T])
    z, info = newton_solve(F, z0, tol=tol, full_output=True)
    xs = z[: m * n].reshape(m, n)
    ds = z[m * n:] * T
    return xs, ds, info


def _solve_map(spec, x0, m, tol):
    def F(x):
        return orbit_residual(spec, x, m)

    x, info = newton_solve(F, x0, tol=tol, full_output=True)
    xs = [x]
    ds = []
    for _ in range(m):
        r = cycle.stroboscopic_map(spec, xs[-1])
        ds.append(r.d)
        xs.append(r.x_next)
    return np.array(xs[:m]), np.array(ds), info


def _verify(spec, xs, ds, tol):
    """Re-simulate m cycles; the map must reproduce the orbit."""
    x = xs[0]
    for k in range(len(ds)):
        r = cycle.stroboscopic_map(spec, x)
        if spec.is_ramp and abs(r.d - ds[k]) > 1e-9 * spec.T:
            return False
        x = r.x_next
    scale = max(1.0, np.max(np.abs(xs[0])))
    return np.max(np.abs(x - xs[0])) <= max(10 * tol, 1e-12 * scale)


def _guess_states(spec, x0, m, duty_s1=None):
    """Expand a single-state guess into m states and durations."""
    xs, ds = [np.asarray(x0, dtype=float)], []
    for _ in range(m):
        r = cycle.stroboscopic_map(spec, xs[-1])
        d = r.d
        if spec.is_ramp and not 0 < d < spec.T:
            d = (duty_s1 if duty_s1 is not None else 0.5) * spec.T
        ds.append(d)
        xs.append(r.x_next)
    if m == 1:
        xs = [np.asarray(x0, dtype=float)]
    return np.array(xs[:m]), np.array(ds)


def _averaged_guess(spec, on_duty):
    from .averaged import averaged_equilibrium, stage1_fraction
    x = averaged_equilibrium(spec, on_duty)
    return x, stage1_fraction(spec, on_duty)


def _default_guesses(spec, m):
    from .averaged import consistent_duty
    try:
        D = consistent_duty(spec)
    except (NumericalError, ValueError, np.linalg.LinAlgError):
        D = None
    if D is not None:
        x, f1 = _averaged_guess(spec, D)
        yield "averaged", x, f1
    # settle from rest as a last resort
    try:
        states, durations = cycle.iterate_map(spec, np.zeros(spec.N), 400)
        yield "settled", states[-1], durations[-1] / spec.T
    except NumericalError:
        pass


def _period_two_guesses(spec, tol):
    """Seeds off the T-orbit: settle from a perturbed period-one orbit."""
    try:
        base = find_orbit(spec, m=1, tol=tol)
        seeds = [base.x0 * (1 + 1e-3), base.x0 * (1 - 1e-3)]
        f1 = base.duty[0]
    except NumericalError:
        seeds, f1 = [], None
    for x in seeds:
        try:
            states, durations = cycle.iterate_map(spec, x, 600)
        except NumericalError:
            continue
        yield "settled-2T", states[-2], durations[-2] / spec.T


def find_orbit(spec, m=1, guess=None, duty_guess=None, tol=NEWTON_TOL):
    """Locate an m-periodic orbit.

    Parameters
    ----------
    spec : ConverterSpec
    m : {1, 2}
    guess : array_like, optional
        Either a clock-instant state ``x0`` (N entries) or, for ramp
        control, a full unknown vector as in :func:`orbit_residual`.
    duty_guess : float, optional
        Fraction of the cycle spent in the ON stage; the averaged
        equilibrium at that duty seeds Newton.
    tol : float
        Residual tolerance (infinity norm).

    Returns
    -------
    PeriodicOrbit

    Raises
    ------
    NoOrbitError
        When every guess in the chain fails; ``attempts`` lists them.
    """
    if m not in (1, 2):
        raise ValueError("m must be 1 or 2")
    n = spec.N
    candidates = []
    if guess is not None:
        g = np.asarray(guess, dtype=float)
        if g.size == n:
            candidates.append(("user", g, None))
        elif spec.is_ramp and g.size == m * (n + 1):
            candidates.append(("user-full", g, None))
        else:
            raise ValueError(f"guess must have {n} or {m * (n + 1)} entries")
    if duty_guess is not None:
        x, f1 = _averaged_guess(spec, duty_guess)
        candidates.append((f"duty={duty_guess:g}", x, f1))
    explicit = bool(candidates)
    if not explicit:
        candidates = _period_two_guesses(spec, tol) if m == 2 else _default_guesses(spec, m)

    attempts = []
    for label, g, f1 in candidates:
        try:
            if label == "user-full":
                xs, ds = _split(spec, g, m)
            else:
                xs, ds = _guess_states(spec, g, m, f1)
            if spec.is_ramp:
                xs, ds, info = _solve_ramp(spec, xs, ds, tol)
            else:
                xs, ds, info = _solve_map(spec, xs[0], m, tol)
        except (NumericalError, ValueError, np.linalg.LinAlgError) as exc:
            attempts.append(f"{label}: {exc}")
            continue
        if not _verify(spec, xs, ds, tol):
            attempts.append(f"{label}: converged point is not reproduced by the map")
            continue
        if m == 2 and np.max(np.abs(xs[1] - xs[0])) <= 1e-6 * (1 + np.max(np.abs(xs[0]))):
            attempts.append(f"{label}: collapsed onto the period-one orbit")
            continue
        res = np.max(np.abs(orbit_residual(spec, np.concatenate([np.ravel(xs), ds])
                                           if spec.is_ramp else xs[0], m)))
        return _orbit_from_states(spec, xs, ds, res, info.condition, label)
    if not attempts:
        attempts.append("no initial guess could be built (averaged model, settling and "
                        "period-one seeds all unavailable)")
    raise NoOrbitError(f"no {m}T-periodic orbit found", attempts)


def continue_orbit(spec, previous, tol=NEWTON_TOL):
    """Find the orbit of ``spec`` starting from a nearby parameter's orbit."""
    if spec.is_ramp:
        g = np.concatenate([np.ravel(previous.states), previous.d])
    else:
        g = previous.x0
    return find_orbit(spec, m=previous.m, guess=g, tol=tol)


# ---------------------------------------------------------------------------
# monodromy matrices


def _stage_exp(spec, k, t):
    A, _ = spec.stage(k)
    return scipy.linalg.expm(A * t)


def phi_closed_form(spec, orbit):
    """Monodromy matrix of a ramp-controlled period-one orbit.

    ``Phi = e^{A2 (T-d)} (I - f C / (C f1 - h')) e^{A1 d}`` where
    ``f = f1 - f2`` is the jump of the vector field at the switching point
    and ``f1 = A1 x(d) + B1 u``.

    Raises
    ------
    GrazingError
        If the stage-1 flow meets the ramp tangentially.
    """
    if not isinstance(spec.control, RampControl):
        raise TypeError("phi_closed_form needs ramp control")
    if orbit.m != 1:
        raise ValueError("closed form applies to period-one orbits")
    d, T = orbit.d[0], spec.T
    if not 0.0 < d < T:
        raise ValueError("closed form needs an unsaturated orbit")
    (A1, b1), (A2, b2) = spec.stage(1), spec.stage(2)
    C = spec.control.C
    xd = cycle.stage_flow(spec, 1, orbit.x0, d)
    jump = (A1 @ xd + b1) - (A2 @ xd + b2)
    slope = spec.control.ramp.slope
    den = float(C @ (A1 @ xd + b1)) - slope
    if abs(den) < 1e-9 * abs(slope):
        raise GrazingError(f"switching transversality lost: denominator {den:.3g}")
    n = spec.N
    return _stage_exp(spec, 2, T - d) @ (np.eye(n) - np.outer(jump, C) / den) @ _stage_exp(spec, 1, d)


def phi_discrete_duty(spec, orbit):
    """Monodromy matrix of a discrete-duty period-one orbit (chain rule).

    Inside the limiter's linear range ``d`` responds to the state through
    ``-K``; when saturated it does not respond at all.
    """
    if not isinstance(spec.control, DiscreteDutyControl):
        raise TypeError("phi_discrete_duty needs discrete duty control")
    if orbit.m != 1:
        raise ValueError("chain-rule form applies to period-one orbits")
    T = spec.T
    cmd = duty_command(spec, orbit.x0)
    d = spec.limiter(cmd)
    if cmd == 0.0 or cmd == T:
        raise NonSmoothPointError(f"duty command {cmd} sits on a limiter kink")
    E1, E2 = _stage_exp(spec, 1, d), _stage_exp(spec, 2, T - d)
    if 0.0 < cmd < T:
        (A1, b1), (A2, b2) = spec.stage(1), spec.stage(2)
        xd = cycle.stage_flow(spec, 1, orbit.x0, d)
        jump = (A1 @ xd + b1) - (A2 @ xd + b2)
        return E2 @ (E1 - np.outer(jump, spec.control.K))
    return E2 @ E1


def _m_cycle_map(spec, x, m):
    for _ in range(m):
        x = cycle.stroboscopic_map(spec, x, root_tol=FD_ROOT_TOL).x_next
    return x


def phi_finite_difference(spec, orbit, step=FD_STEP):
    """Central-difference Jacobian of the m-cycle map around ``orbit.x0``."""
    return fd_jacobian(lambda x: _m_cycle_map(spec, x, orbit.m), orbit.x0, rel_step=step)


def cycle_jacobians_fd(spec, orbit, step=FD_STEP):
    """Per-cycle finite-difference Jacobians at each clock state of the orbit."""
    return [fd_jacobian(lambda x: _m_cycle_map(spec, x, 1), xk, rel_step=step)
            for xk in orbit.states]


def orbit_jacobian(spec, orbit):
    """Best available monodromy matrix and the name of the method used."""
    if orbit.m == 1 and not orbit.is_saturated and spec.is_ramp:
        return phi_closed_form(spec, orbit), "closed_form"
    if orbit.m == 1 and not spec.is_ramp:
        return phi_discrete_duty(spec, orbit), "discrete_duty"
    return phi_finite_difference(spec, orbit), "finite_difference"


# ---------------------------------------------------------------------------
# classification


def classify(eigs, band=NEAR_BAND, imag_tol=1e-9):
    """Stability and bifurcation proximity from a monodromy spectrum.

    A multiplier within ``band`` of the unit circle marks the orbit as
    near a bifurcation: real and close to -1 is ``near_pd``, real and
    close to +1 is ``near_sn``, and a complex pair is ``near_ns``.
    """
    eigs = np.asarray(eigs, dtype=complex)
    mods = np.abs(eigs)
    radius = float(np.max(mods))
    critical = complex(eigs[int(np.argmax(mods))])
    near = [z for z in eigs if abs(abs(z) - 1.0) <= band]
    if near:
        z = min(near, key=lambda z: abs(abs(z) - 1.0))
        if abs(z.imag) > imag_tol * max(1.0, abs(z)):
            label = NEAR_NS
        elif z.real < 0:
            label = NEAR_PD
        else:
            label = NEAR_SN
    else:
        label = STABLE if radius < 1.0 else UNSTABLE
    return StabilityReport(eigenvalues=eigs, spectral_radius=radius, classification=label,
                           critical_eigenvalue=critical, stable=radius < 1.0)


def analyze_orbit(spec, orbit, band=NEAR_BAND):
    phi, method = orbit_jacobian(spec, orbit)
    rep = classify(eigenvalues(phi), band=band)
    return StabilityReport(eigenvalues=rep.eigenvalues, spectral_radius=rep.spectral_radius,
                           classification=rep.classification,
                           critical_eigenvalue=rep.critical_eigenvalue, stable=rep.stable,
                           method=method, phi=phi)


def neimark_frequency(critical, f_s):
    """Modulation frequency ``f_s * |arg(lambda)| / (2 pi)`` of a complex multiplier."""
    critical = complex(critical)
    if critical.imag == 0.0:
        raise ValueError("neimark_frequency needs a complex multiplier")
    return f_s * abs(math.atan2(critical.imag, critical.real)) / (2.0 * math.pi)
