"""Sampled-data analysis of PWM DC-DC converters.

Exact stroboscopic maps, periodic orbits, monodromy (Jacobian) matrices and
local bifurcation detection for two-stage switched-affine converters.
"""

from .averaged import (AveragedOperatingPoint, averaged_equilibrium, averaged_jacobian,
                       consistent_duty, operating_point)
from .bifurcation import (AttractorSample, BifurcationPoint, SweepRecord, brute_force_diagram,
                          estimate_modulation_frequency, locate_bifurcation, sweep)
from .cycle import (CycleResult, TrajectorySample, find_switching_instant, iterate_map,
                    simulate, stroboscopic_map)
from .errors import (ConvergenceError, DivergenceError, DocumentError, GrazingError,
                     NoBracketError, NonSmoothPointError, NoOrbitError, NumericalError,
                     PwmbifError, SingularJacobianError)
from .model import (PRESETS, ConverterSpec, DiscreteDutyControl, Limiter, Ramp, RampControl,
                    always_on_threshold, limiter_apply, preset, ramp_value,
                    saturated_always_on_check)
from .numerics import affine_flow, bracketed_root, eigenvalues, mat_exp, newton_solve
from .orbits import (PeriodicOrbit, StabilityReport, analyze_orbit, classify, find_orbit,
                     neimark_frequency, orbit_residual, phi_closed_form, phi_discrete_duty,
                     phi_finite_difference)

__version__ = "0.1.0"
