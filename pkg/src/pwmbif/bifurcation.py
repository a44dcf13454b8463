"""Parameter sweeps, bifurcation location and brute-force diagrams."""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import cycle
from .errors import NoBracketError, NoOrbitError, NumericalError
from .model import DiscreteDutyControl, saturated_always_on_check
from .orbits import PeriodicOrbit, StabilityReport, analyze_orbit, continue_orbit, find_orbit, neimark_frequency
from .numerics import NEWTON_TOL

log = logging.getLogger(__name__)

PERIOD_DOUBLING = "period_doubling"
SADDLE_NODE = "saddle_node"
NEIMARK = "neimark"
KINDS = {"pd": PERIOD_DOUBLING, "sn": SADDLE_NODE, "ns": NEIMARK,
         PERIOD_DOUBLING: PERIOD_DOUBLING, SADDLE_NODE: SADDLE_NODE, NEIMARK: NEIMARK}

BURN_IN = 500
RECORD = 64


@dataclass(frozen=True, eq=False)
class SweepRecord:
    param_value: float
    orbit: Optional[PeriodicOrbit]
    eigenvalues: np.ndarray
    spectral_radius: float
    classification: str
    status: str = "ok"

    @property
    def duty(self):
        return self.orbit.on_duty[0] if self.orbit is not None else math.nan


@dataclass(frozen=True, eq=False)
class BifurcationPoint:
    kind: str
    param_value: float
    critical_eigenvalue: complex
    orbit: PeriodicOrbit
    report: StabilityReport
    bracket: tuple
    modulation_frequency: Optional[float] = None


@dataclass(frozen=True, eq=False)
class AttractorSample:
    param_value: float
    stroboscopic_outputs: np.ndarray
    final_state: np.ndarray = field(repr=False, default=None)


# ---------------------------------------------------------------------------
# sweeps


def _solve_at(spec, m, previous, guess):
    if previous is not None:
        try:
            return continue_orbit(spec, previous)
        except NumericalError:
            pass
    return find_orbit(spec, m=m, guess=guess)


def sweep(spec, param, start, stop, steps, m=1, guess=None):
    """March ``param`` uniformly and record each orbit's multipliers.

    Each point is seeded with the previous point's orbit.  A point whose
    orbit cannot be found, or is saturated, is recorded with that status
    instead of aborting the sweep.

    Returns
    -------
    list of SweepRecord
    """
    if steps < 2:
        raise ValueError("steps must be >= 2")
    rows = []
    previous = None
    for v in np.linspace(start, stop, steps):
        s = spec.with_params(**{param: float(v)})
        try:
            orbit = _solve_at(s, m, previous, guess)
            rep = analyze_orbit(s, orbit)
        except NumericalError as exc:
            rows.append(SweepRecord(float(v), None, np.array([], dtype=complex), math.nan,
                                    "none", status=f"no_orbit: {exc}"))
            previous = None
            continue
        status = "saturated" if orbit.is_saturated else "ok"
        rows.append(SweepRecord(float(v), orbit, rep.eigenvalues, rep.spectral_radius,
                                rep.classification, status))
        previous = orbit
    return rows


# ---------------------------------------------------------------------------
# locating crossings


def test_function(kind, eigs):
    """Signed distance of the relevant multiplier from its crossing value.

    ``pd``: ``1 + min Re(lambda)``; ``sn``: ``1 - max Re(lambda)``;
    ``ns``: ``1 - max |lambda|`` over the complex multipliers.  Positive on
    the stable side.
    """
    kind = KINDS[kind]
    eigs = np.asarray(eigs, dtype=complex)
    if kind == PERIOD_DOUBLING:
        return 1.0 + float(np.min(eigs.real))
    if kind == SADDLE_NODE:
        return 1.0 - float(np.max(eigs.real))
    cplx = eigs[eigs.imag != 0]
    if cplx.size == 0:
        return math.nan
    return 1.0 - float(np.max(np.abs(cplx)))


def critical_for(kind, eigs):
    kind = KINDS[kind]
    eigs = np.asarray(eigs, dtype=complex)
    if kind == PERIOD_DOUBLING:
        return complex(eigs[np.argmin(eigs.real)])
    if kind == SADDLE_NODE:
        return complex(eigs[np.argmax(eigs.real)])
    cplx = [z for z in eigs if z.imag > 0]
    return complex(max(cplx, key=abs))


def _evaluate(spec, param, value, kind, seeds):
    """Orbit, report and test value at one parameter, or None.

    Saturated orbits do not belong to the smooth branch being followed and
    count as absent.
    """
    s = spec.with_params(**{param: value})
    attempts = [lambda seed=seed: continue_orbit(s, seed) for seed in seeds if seed is not None]
    if not attempts:
        attempts = [lambda: find_orbit(s)]
    for attempt in attempts:
        try:
            orbit = attempt()
        except NumericalError:
            continue
        if orbit.is_saturated:
            continue
        rep = analyze_orbit(s, orbit)
        return orbit, rep, test_function(kind, rep.eigenvalues)
    return None


def locate_bifurcation(spec, param, bracket, kind, xtol=1e-4, ftol=1e-6, max_iter=80):
    """Bisect ``param`` over ``bracket`` for a multiplier crossing.

    Bisection continues until the bracket is narrower than ``xtol``
    (relative) and the test function is within ``ftol`` of zero, or the
    bracket reaches round-off width.  For a saddle node, the side beyond
    the fold has no orbit; losing the orbit counts as crossing.

    Returns
    -------
    BifurcationPoint

    Raises
    ------
    NoBracketError
        The test function does not change sign over ``bracket``.
    NoOrbitError
        Orbit continuation was lost inside the bracket.
    """
    kind = KINDS[kind]
    a, b = map(float, bracket)
    ea = _evaluate(spec, param, a, kind, [None])
    if ea is None:
        raise NoOrbitError(f"no orbit at bracket end {param}={a}")
    eb = _evaluate(spec, param, b, kind, [ea[0]])
    if eb is None:
        eb = _evaluate(spec, param, b, kind, [None])
    if eb is None and kind != SADDLE_NODE:
        raise NoOrbitError(f"no orbit at bracket end {param}={b}")
    fa = ea[2]
    if not math.isfinite(fa) or (eb is not None and not fa * eb[2] < 0):
        fb = None if eb is None else eb[2]
        if not (fa == 0 or fb == 0):
            raise NoBracketError(f"{kind} test function does not change sign on "
                                 f"[{a}, {b}]: {fa}, {fb}")
    good_side = (a, ea)
    far_side = (b, eb)

    def best_side():
        if far_side[1] is None or abs(good_side[1][2]) <= abs(far_side[1][2]):
            return good_side
        return far_side

    for _ in range(max_iter):
        lo, hi = good_side[0], far_side[0]
        width = abs(hi - lo)
        scale = max(1.0, abs(lo))
        if (width <= xtol * scale and abs(best_side()[1][2]) <= ftol) or width <= 1e-13 * scale:
            break
        mid = 0.5 * (lo + hi)
        seeds = [good_side[1][0], far_side[1][0] if far_side[1] is not None else None]
        em = _evaluate(spec, param, mid, kind, seeds)
        if em is None:
            if kind != SADDLE_NODE:
                raise NoOrbitError(f"orbit continuation lost at {param}={mid}")
            far_side = (mid, None)
        elif math.isfinite(em[2]) and em[2] * fa > 0:
            good_side = (mid, em)
        else:
            far_side = (mid, em)
    value, best = best_side()
    orbit, rep, _ = best
    crit = critical_for(kind, rep.eigenvalues)
    freq = neimark_frequency(crit, 1.0 / spec.with_params(**{param: value}).T) if kind == NEIMARK else None
    return BifurcationPoint(kind=kind, param_value=value, critical_eigenvalue=crit, orbit=orbit,
                            report=rep, bracket=(good_side[0], far_side[0]),
                            modulation_frequency=freq)


# ---------------------------------------------------------------------------
# brute force


def initial_state(spec):
    """A reasonable starting state: a located orbit, else the always-on
    equilibrium, else rest."""
    try:
        return find_orbit(spec).x0
    except NumericalError:
        pass
    if isinstance(spec.control, DiscreteDutyControl):
        ok, x_eq = saturated_always_on_check(spec)
        if ok:
            return x_eq
    return np.zeros(spec.N)


def _attractor(spec, param, value, x0, burn_in, record):
    s = spec.with_params(**{param: value})
    x = initial_state(s) if x0 is None else np.asarray(x0, dtype=float)
    states, _ = cycle.iterate_map(s, x, burn_in + record)
    kept = states[burn_in + 1:]
    return AttractorSample(param_value=float(value), stroboscopic_outputs=kept @ s.E1,
                           final_state=states[-1])


def _attractor_job(args):
    return _attractor(*args)


def brute_force_diagram(spec, param, start, stop, steps, burn_in=BURN_IN, record=RECORD,
                        inherit_state=True, x0=None, n_jobs=1):
    """Iterate the full nonlinear map at each parameter value.

    Parameters are visited from ``start`` to ``stop`` in order (a downward
    sweep has ``start > stop``).  With ``inherit_state`` each point starts
    from the final state of the previous one, emulating a slow sweep;
    such sweeps always run sequentially.  Otherwise every point starts
    from ``x0`` (or :func:`initial_state`) and ``n_jobs > 1`` spreads the
    points over worker processes.

    Returns
    -------
    list of AttractorSample
        ``stroboscopic_outputs`` holds ``record`` values of ``v_o`` at clock
        instants after ``burn_in`` discarded cycles.
    """
    if burn_in < 0 or record < 1:
        raise ValueError("need burn_in >= 0 and record >= 1")
    values = np.linspace(start, stop, steps)
    if inherit_state:
        out = []
        x = x0
        for v in values:
            sample = _attractor(spec, param, float(v), x, burn_in, record)
            out.append(sample)
            x = sample.final_state
        return out
    jobs = [(spec, param, float(v), x0, burn_in, record) for v in values]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(_attractor_job, jobs))
    return [_attractor_job(j) for j in jobs]


def estimate_modulation_frequency(samples, f_s, min_samples=512, flat_tol=1e-9):
    """Dominant frequency of a stroboscopic series.

    The mean-removed, Hann-windowed series is transformed with a real FFT;
    the largest non-DC bin is refined by a parabola through the
    log-magnitudes of it and its two neighbours.

    Returns
    -------
    float or None
        Frequency in Hz within ``(0, f_s/2)``, or None for a flat series.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {x.size}")
    x = x - x.mean()
    if np.max(np.abs(x)) <= flat_tol * (1.0 + np.max(np.abs(samples))):
        return None
    n = x.size
    spectrum = np.abs(np.fft.rfft(x * np.hanning(n)))
    k = 1 + int(np.argmax(spectrum[1:-1]))
    a, b, c = np.log(spectrum[k - 1:k + 2] + 1e-300)
    denom = a - 2 * b + c
    delta = 0.5 * (a - c) / denom if denom != 0 else 0.0
    return float((k + delta) * f_s / n)
