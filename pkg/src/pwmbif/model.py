"""Converter descriptions and the three built-in presets.

A converter is two switched affine stages ``x' = A_i x + B_i u`` sharing a
clock of period ``T``.  Stage 1 runs from the clock edge for ``d`` seconds,
stage 2 for the rest of the cycle.  How ``d`` is chosen is the control:

* :class:`RampControl` -- analogue PWM; the stage changes at the first
  instant where ``y = C x + D u`` meets the sawtooth ``h(t)``.
* :class:`DiscreteDutyControl` -- a sampled controller computes
  ``d_n = limiter(base_duty*T - K (x_n - x_ref))`` once per cycle.

The input vector is always ``u = (v_s, v_r)``.
"""

import dataclasses
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Union

import numpy as np

from .numerics import as_matrix, as_vector

PRESETS = ("pd_buck", "sn_buck", "ns_buck")


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Ramp:
    """T-periodic sawtooth from ``v_low`` at the clock edge to ``v_high``."""

    v_low: float
    v_high: float
    period: float

    def __post_init__(self):
        if not self.v_high > self.v_low:
            raise ValueError("ramp needs v_high > v_low")
        if not self.period > 0:
            raise ValueError("ramp period must be positive")

    @property
    def slope(self):
        return (self.v_high - self.v_low) / self.period

    def __call__(self, t):
        return ramp_value(self, t)


def ramp_value(r, t):
    """``h(t) = V_l + (V_h - V_l) * ((t/T) mod 1)``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return r.v_low + (r.v_high - r.v_low) * ((t / r.period) % 1.0)


@dataclass(frozen=True)
class Limiter:
    """Clamp a first-stage duration into ``[0, T]``."""

    period: float

    def __call__(self, t):
        return limiter_apply(self, t)


def limiter_apply(l, t):
    if t <= 0:
        return 0.0
    if t <= l.period:
        return float(t)
    return float(l.period)


@dataclass(frozen=True, eq=False)
class RampControl:
    C: np.ndarray
    D: np.ndarray
    ramp: Ramp

    def __post_init__(self):
        object.__setattr__(self, "C", _frozen(as_vector(self.C, "C")))
        object.__setattr__(self, "D", _frozen(as_vector(self.D, "D", 2)))

    kind = "ramp"


@dataclass(frozen=True, eq=False)
class DiscreteDutyControl:
    base_duty: float
    K: np.ndarray
    x_ref: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "K", _frozen(as_vector(self.K, "K")))
        object.__setattr__(self, "x_ref", _frozen(as_vector(self.x_ref, "x_ref", self.K.size)))

    kind = "discrete_duty"


Control = Union[RampControl, DiscreteDutyControl]


@dataclass(frozen=True, eq=False)
class ConverterSpec:
    """Immutable two-stage switched-affine converter.

    ``preset`` and ``params`` are set for specs built from physical
    parameters; :meth:`with_params` rebuilds the matrices from them.
    """

    A1: np.ndarray
    A2: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    u: np.ndarray
    T: float
    control: Control
    preset: Optional[str] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        A1 = as_matrix(self.A1, "A1", square=True)
        n = A1.shape[0]
        checks = {
            "A2": (n, n), "B1": (n, 2), "B2": (n, 2),
        }
        for name, shape in checks.items():
            m = as_matrix(getattr(self, name), name)
            if m.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {m.shape}")
            object.__setattr__(self, name, _frozen(m))
        object.__setattr__(self, "A1", _frozen(A1))
        for name in ("E1", "E2"):
            object.__setattr__(self, name, _frozen(as_vector(getattr(self, name), name, n)))
        object.__setattr__(self, "u", _frozen(as_vector(self.u, "u", 2)))
        if not self.T > 0:
            raise ValueError("T must be positive")
        object.__setattr__(self, "T", float(self.T))
        ctl = self.control
        if isinstance(ctl, RampControl):
            if ctl.C.size != n:
                raise ValueError(f"C must have length {n}")
            if abs(ctl.ramp.period - self.T) > 1e-15 * self.T:
                raise ValueError("ramp period must equal T")
        elif isinstance(ctl, DiscreteDutyControl):
            if ctl.K.size != n:
                raise ValueError(f"K must have length {n}")
        else:
            raise TypeError(f"unsupported control {type(ctl).__name__}")
        object.__setattr__(self, "params", dict(self.params))

    @property
    def N(self):
        return self.A1.shape[0]

    @property
    def f_s(self):
        return 1.0 / self.T

    @property
    def v_s(self):
        return float(self.u[0])

    @property
    def is_ramp(self):
        return isinstance(self.control, RampControl)

    @cached_property
    def limiter(self):
        return Limiter(self.T)

    @cached_property
    def forcing(self):
        """Constant terms ``(B1 u, B2 u)``."""
        return _frozen(self.B1 @ self.u), _frozen(self.B2 @ self.u)

    @cached_property
    def on_stage(self):
        """Index (1 or 2) of the stage connected to the source.

        When both stages couple the source identically the label is
        arbitrary and stage 1 is returned.
        """
        if np.array_equal(self.B1[:, 0], self.B2[:, 0]):
            return 1
        c1, c2 = np.any(self.B1[:, 0] != 0), np.any(self.B2[:, 0] != 0)
        if c1 == c2:
            raise ValueError("cannot tell ON stage: source column nonzero in "
                             + ("both stages" if c1 else "neither stage"))
        return 1 if c1 else 2

    def stage(self, k):
        if k == 1:
            return self.A1, self.forcing[0]
        if k == 2:
            return self.A2, self.forcing[1]
        raise ValueError("stage must be 1 or 2")

    def output_row(self, k):
        return self.E1 if k == 1 else self.E2

    def with_params(self, **changes):
        """Return a spec with some physical parameters replaced.

        ``vs`` and ``vr`` are accepted for any spec; other names need a
        preset-built spec.
        """
        if self.preset is not None:
            params = dict(self.params)
            unknown = set(changes) - set(params)
            if unknown:
                raise KeyError(f"unknown parameter(s) for {self.preset}: {sorted(unknown)}")
            params.update({k: float(v) for k, v in changes.items()})
            return preset(self.preset, **params)
        unknown = set(changes) - {"vs", "vr"}
        if unknown:
            raise KeyError(f"explicit specs only accept vs/vr changes, got {sorted(unknown)}")
        u = self.u.copy()
        if "vs" in changes:
            u[0] = changes["vs"]
        if "vr" in changes:
            u[1] = changes["vr"]
        return dataclasses.replace(self, u=u)


# ---------------------------------------------------------------------------
# presets

PD_DEFAULTS = dict(T=400e-6, L=20e-3, C=47e-6, R=22.0, vr=11.3, g1=8.4,
                   Vl=3.8, Vh=8.2, vs=20.0)
SN_DEFAULTS = dict(T=400e-6, L=20e-3, C=47e-6, R=22.0, vr=0.0, base_duty=0.3,
                   ki=-8.574e-4, kv=5.53e-5, Ip=0.6785, Vp=14.0263, vs=19.9)
NS_DEFAULTS = dict(fs=15e3, L=0.9e-3, C=22e-6, R=20.0, vr=5.0, R1=7.5e3, R2=7.5e3,
                   R3=60e3, C2=0.4e-6, Vl=2.8, Vh=8.2, vs=30.0)

DEFAULTS = {"pd_buck": PD_DEFAULTS, "sn_buck": SN_DEFAULTS, "ns_buck": NS_DEFAULTS}


def _lc_plant(L, C, R):
    return np.array([[0.0, -1.0 / L], [1.0 / C, -1.0 / (R * C)]])


def _pd_buck(p):
    A = _lc_plant(p["L"], p["C"], p["R"])
    B2 = np.array([[1.0 / p["L"], 0.0], [0.0, 0.0]])
    g1 = p["g1"]
    ctl = RampControl(C=[0.0, g1], D=[0.0, -g1], ramp=Ramp(p["Vl"], p["Vh"], p["T"]))
    return ConverterSpec(A1=A, A2=A, B1=np.zeros((2, 2)), B2=B2, E1=[0.0, 1.0],
                         E2=[0.0, 1.0], u=[p["vs"], p["vr"]], T=p["T"], control=ctl,
                         preset="pd_buck", params=p)


def _sn_buck(p):
    A = _lc_plant(p["L"], p["C"], p["R"])
    B2 = np.array([[1.0 / p["L"], 0.0], [0.0, 0.0]])
    ctl = DiscreteDutyControl(base_duty=p["base_duty"], K=[p["ki"], p["kv"]],
                              x_ref=[p["Ip"], p["Vp"]])
    # stage 1 = switch OFF, stage 2 = switch ON (leading-edge modulation)
    return ConverterSpec(A1=A, A2=A, B1=np.zeros((2, 2)), B2=B2, E1=[0.0, 1.0],
                         E2=[0.0, 1.0], u=[p["vs"], p["vr"]], T=p["T"], control=ctl,
                         preset="sn_buck", params=p)


def _ns_buck(p):
    L, C, R = p["L"], p["C"], p["R"]
    R1, R2, R3, C2 = p["R1"], p["R2"], p["R3"], p["C2"]
    A = np.array([[0.0, -1.0 / L, 0.0],
                  [1.0 / C, -1.0 / (R * C), 0.0],
                  [0.0, 1.0 / (R1 * C2), -1.0 / (R3 * C2)]])
    ref = -(1.0 / R1 + 1.0 / R2) / C2
    B1 = np.array([[1.0 / L, 0.0], [0.0, 0.0], [0.0, ref]])
    B2 = np.array([[0.0, 0.0], [0.0, 0.0], [0.0, ref]])
    T = 1.0 / p["fs"]
    ctl = RampControl(C=[0.0, 0.0, -1.0], D=[0.0, 1.0], ramp=Ramp(p["Vl"], p["Vh"], T))
    return ConverterSpec(A1=A, A2=A, B1=B1, B2=B2, E1=[0.0, 1.0, 0.0],
                         E2=[0.0, 1.0, 0.0], u=[p["vs"], p["vr"]], T=T, control=ctl,
                         preset="ns_buck", params=p)


_BUILDERS = {"pd_buck": _pd_buck, "sn_buck": _sn_buck, "ns_buck": _ns_buck}


def preset(name, **overrides):
    """Build a named example converter.

    Parameters
    ----------
    name : {'pd_buck', 'sn_buck', 'ns_buck'}
        ``pd_buck`` -- voltage-mode buck with a 400 us ramp; period doubling.
        ``sn_buck`` -- buck under a discrete-time duty law; saddle-node.
        ``ns_buck`` -- buck with an integrating error amplifier; Neimark.
    **overrides
        Physical parameters to replace (see ``DEFAULTS[name]``).

    Returns
    -------
    ConverterSpec
    """
    try:
        defaults = DEFAULTS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}") from None
    unknown = set(overrides) - set(defaults)
    if unknown:
        raise KeyError(f"unknown parameter(s) for {name}: {sorted(unknown)}")
    params = dict(defaults)
    params.update({k: float(v) for k, v in overrides.items()})
    return _BUILDERS[name](params)


# ---------------------------------------------------------------------------
# discrete-duty helpers


def duty_command(spec, x):
    """Unclamped first-stage duration ``base_duty*T - K (x - x_ref)``."""
    ctl = spec.control
    return ctl.base_duty * spec.T - float(ctl.K @ (np.asarray(x) - ctl.x_ref))


def on_stage_equilibrium(spec):
    """Equilibrium ``-A2^-1 B2 u`` of the stage that runs when ``d = 0``."""
    A2, b2 = spec.stage(2)
    return np.linalg.solve(A2, -b2)


def saturated_always_on_check(spec, v_s=None):
    """Can the discrete-duty converter rest with the switch permanently on?

    Returns
    -------
    feasible : bool
        True when the duty law, evaluated at the ON-stage equilibrium,
        saturates at zero.
    x_eq : ndarray
        The ON-stage equilibrium.
    """
    if not isinstance(spec.control, DiscreteDutyControl):
        raise TypeError("saturated_always_on_check needs a discrete-duty spec")
    if v_s is not None:
        spec = spec.with_params(vs=v_s)
    try:
        x_eq = on_stage_equilibrium(spec)
    except np.linalg.LinAlgError as exc:
        raise ValueError("ON-stage matrix A2 is singular") from exc
    return duty_command(spec, x_eq) <= 0.0, x_eq


def always_on_threshold(spec):
    """Smallest ``v_s`` for which :func:`saturated_always_on_check` holds.

    The duty command at the ON equilibrium is affine in ``v_s``, so two
    evaluations fix it.  Returns ``None`` if the command does not decrease
    with ``v_s``.
    """
    c0 = duty_command(spec.with_params(vs=0.0), on_stage_equilibrium(spec.with_params(vs=0.0)))
    s1 = spec.with_params(vs=1.0)
    slope = duty_command(s1, on_stage_equilibrium(s1)) - c0
    if slope >= 0:
        return None
    return -c0 / slope
