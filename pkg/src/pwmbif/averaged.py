"""State-space averaged model, kept for comparison with the sampled-data results.

Duties here are ON-stage fractions ``D_c`` (time the source is connected).
The switching condition itself is written in terms of the stage-1
fraction, so :func:`stage1_fraction` converts between the two.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .model import DiscreteDutyControl, RampControl, duty_command
from .numerics import bracketed_root, eigenvalues

HOPF_BAND = 1e-3


@dataclass(frozen=True, eq=False)
class AveragedOperatingPoint:
    D_c: float
    stage1_fraction: float
    X_ave: np.ndarray
    J_ave: np.ndarray
    eigenvalues: np.ndarray
    stable: bool
    near_hopf: bool


def stage1_fraction(spec, D_c):
    return D_c if spec.on_stage == 1 else 1.0 - D_c


def averaged_matrices(spec, D_c):
    """``A_ave = A_ON D_c + A_OFF (1 - D_c)`` and the same for ``B``."""
    f1 = stage1_fraction(spec, D_c)
    A = spec.A1 * f1 + spec.A2 * (1.0 - f1)
    B = spec.B1 * f1 + spec.B2 * (1.0 - f1)
    return A, B


def averaged_equilibrium(spec, D_c):
    """Equilibrium ``X_ave = -A_ave^-1 B_ave u`` at ON-duty ``D_c``."""
    A, B = averaged_matrices(spec, D_c)
    try:
        return np.linalg.solve(A, -(B @ spec.u))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"A_ave is singular at D_c = {D_c}") from exc


def _consistency(spec, D_c):
    X = averaged_equilibrium(spec, D_c)
    f1 = stage1_fraction(spec, D_c)
    ctl = spec.control
    if isinstance(ctl, RampControl):
        return float(ctl.C @ X + ctl.D @ spec.u) - (ctl.ramp.v_low + (ctl.ramp.v_high - ctl.ramp.v_low) * f1)
    return f1 * spec.T - duty_command(spec, X)


def consistent_duty(spec, orbit=None, tol=1e-13):
    """ON-duty at which the averaged equilibrium satisfies the modulator.

    For ramp control this solves ``C X_ave + D u = h(f1 T)`` with ``f1``
    the stage-1 fraction; for the discrete duty law it solves
    ``f1 T = base_duty T - K (X_ave - x_ref)``.  If no root lies in (0, 1)
    the ON-duty of ``orbit`` is returned instead.
    """
    eps = 1e-12
    try:
        return bracketed_root(lambda D: _consistency(spec, D), eps, 1.0 - eps, tol)
    except (NumericalError, ValueError):
        if orbit is not None:
            return float(orbit.on_duty[0])
        raise


def averaged_jacobian(spec, D_c):
    """Linearization of the averaged ramp-PWM model.

    ``J = A_ave + ((A1 - A2) X_ave + (B1 - B2) u) C / (V_h - V_l)``

    Returns
    -------
    J : (N, N) ndarray
    eigs : ndarray of complex
    """
    ctl = spec.control
    if isinstance(ctl, DiscreteDutyControl):
        raise TypeError("averaged_jacobian needs ramp control")
    A, _ = averaged_matrices(spec, D_c)
    X = averaged_equilibrium(spec, D_c)
    jump = (spec.A1 - spec.A2) @ X + (spec.B1 - spec.B2) @ spec.u
    J = A + np.outer(jump, ctl.C) / (ctl.ramp.v_high - ctl.ramp.v_low)
    return J, eigenvalues(J)


def operating_point(spec, D_c=None, orbit=None, band=HOPF_BAND):
    """Everything the averaged model says about ``spec``."""
    if D_c is None:
        D_c = consistent_duty(spec, orbit=orbit)
    X = averaged_equilibrium(spec, D_c)
    J, eigs = averaged_jacobian(spec, D_c)
    near = any(z.imag != 0 and abs(z.real) <= band * abs(z) for z in eigs)
    return AveragedOperatingPoint(D_c=float(D_c), stage1_fraction=stage1_fraction(spec, D_c),
                                  X_ave=X, J_ave=J, eigenvalues=eigs,
                                  stable=bool(np.all(eigs.real < 0)), near_hopf=near)
