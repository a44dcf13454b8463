import math

import numpy as np
import pytest

from conftest import identical_stage_spec
from pwmbif import (PeriodicOrbit, analyze_orbit, classify, find_orbit, iterate_map, mat_exp,
                    neimark_frequency, orbit_residual, phi_closed_form, phi_discrete_duty,
                    phi_finite_difference, preset, saturated_always_on_check)
from pwmbif.cycle import stage_flow, stroboscopic_map
from pwmbif.errors import GrazingError, NonSmoothPointError, NoOrbitError
from pwmbif.numerics import eigenvalues, fd_jacobian
from pwmbif.orbits import cycle_jacobians_fd


def rel_close(a, b, rtol, floor=1e-8):
    mask = np.abs(b) > floor
    return np.all(np.abs(a[mask] - b[mask]) <= rtol * np.abs(b[mask])) and \
        np.all(np.abs(a[~mask] - b[~mask]) <= floor)


def equilibrium_spec():
    """Identical stages with a 6 V equilibrium; y = v_C meets the ramp at T/2."""
    return identical_stage_spec(b=(6.0 / 20e-3, 0.0))


# ---------------------------------------------------------------------------
# residual


def test_residual_of_located_period_two_orbit():
    spec = preset("pd_buck", vs=26.0)
    orbit = find_orbit(spec, m=2)
    z = np.concatenate([orbit.states.ravel(), orbit.d])
    assert np.max(np.abs(orbit_residual(spec, z, m=2))) <= 1e-10


def test_residual_vanishes_at_always_on_equilibrium():
    spec = preset("sn_buck", vs=20.5)
    _, x_eq = saturated_always_on_check(spec)
    assert np.max(np.abs(orbit_residual(spec, x_eq))) <= 1e-13 * 20.5


def test_residual_is_direct_substitution():
    spec = preset("pd_buck", vs=22.0)
    x0, d = np.array([0.5, 11.5]), 0.4 * spec.T
    ctl = spec.control
    xd = stage_flow(spec, 1, x0, d)
    xT = stage_flow(spec, 2, xd, spec.T - d)
    g = ctl.C @ xd + ctl.D @ spec.u - ctl.ramp(d)
    res = orbit_residual(spec, np.append(x0, d))
    assert res[0] == pytest.approx(g, abs=1e-12)
    assert np.allclose(res[1:], xT - x0, rtol=0, atol=1e-12)

    sn = preset("sn_buck")
    assert np.array_equal(orbit_residual(sn, x0), stroboscopic_map(sn, x0).x_next - x0)


def test_ramp_residual_rejects_saturated_duration(pd):
    with pytest.raises(ValueError):
        orbit_residual(pd, [0.5, 12.0, pd.T])
    with pytest.raises(ValueError):
        orbit_residual(pd, [0.5, 12.0, 0.1], m=3)


# ---------------------------------------------------------------------------
# find_orbit


def test_pd_period_one_orbit_unstable_at_26():
    spec = preset("pd_buck", vs=26.0)
    orbit = find_orbit(spec)
    assert orbit.residual <= 1e-10
    assert analyze_orbit(spec, orbit).spectral_radius > 1.0


def test_sn_two_coexisting_orbits():
    spec = preset("sn_buck", vs=19.9)
    low = find_orbit(spec, duty_guess=0.6)
    high = find_orbit(spec, duty_guess=0.8)
    assert high.on_duty[0] - low.on_duty[0] > 0.1
    assert analyze_orbit(spec, low).stable
    assert not analyze_orbit(spec, high).stable
    assert high.on_duty[0] == pytest.approx(0.7878, abs=0.003)


def test_ns_orbit_guess_insensitive():
    spec = preset("ns_buck", vs=30.0)
    a = find_orbit(spec)
    b = find_orbit(spec, guess=a.x0 * [1.05, 0.97, 1.1])
    c = find_orbit(spec, duty_guess=0.4)
    assert np.max(np.abs(a.x0 - b.x0)) < 1e-8
    assert np.max(np.abs(a.x0 - c.x0)) < 1e-8


def test_orbit_verified_by_resimulation():
    for name in ("pd_buck", "sn_buck", "ns_buck"):
        spec = preset(name)
        orbit = find_orbit(spec)
        states, _ = iterate_map(spec, orbit.x0, orbit.m)
        assert np.max(np.abs(states[-1] - orbit.x0)) <= 10 * 1e-10 * max(1, np.max(np.abs(orbit.x0)))


def test_duty_conventions(pd, ns):
    o = find_orbit(pd)
    assert o.on_duty[0] == pytest.approx(1 - o.duty[0], abs=1e-15)
    o = find_orbit(ns)
    assert o.on_duty == o.duty


def test_no_orbit_reports_attempts():
    # y = 2 V never reaches the ramp: every cycle switches at the clock edge
    spec = identical_stage_spec(C=(0.0, 0.0), D=(0.1, 0.0))
    with pytest.raises(NoOrbitError) as info:
        find_orbit(spec, m=2)
    assert info.value.attempts


def test_bad_guess_shape(pd):
    with pytest.raises(ValueError):
        find_orbit(pd, guess=[1.0, 2.0, 3.0, 4.0])


# ---------------------------------------------------------------------------
# monodromy matrices


@pytest.mark.parametrize("name,vs", [("pd_buck", 15.0), ("pd_buck", 20.0), ("pd_buck", 24.0),
                                     ("pd_buck", 25.0), ("ns_buck", 30.0), ("ns_buck", 36.0),
                                     ("ns_buck", 40.0)])
def test_closed_form_matches_finite_difference(name, vs):
    spec = preset(name, vs=vs)
    orbit = find_orbit(spec)
    assert rel_close(phi_closed_form(spec, orbit), phi_finite_difference(spec, orbit), 1e-5)


@pytest.mark.parametrize("vs,duty", [(18.5, None), (19.5, None), (19.9, 0.6), (19.9, 0.8)])
def test_discrete_duty_matches_finite_difference(vs, duty):
    spec = preset("sn_buck", vs=vs)
    orbit = find_orbit(spec, duty_guess=duty)
    assert rel_close(phi_discrete_duty(spec, orbit), phi_finite_difference(spec, orbit), 1e-5)


def test_identical_stages_collapse_to_exponential():
    spec = equilibrium_spec()
    orbit = find_orbit(spec, guess=[6.0 / 22.0, 6.0])
    assert orbit.d[0] == pytest.approx(spec.T / 2, rel=1e-9)
    E = mat_exp(spec.A1, spec.T)
    assert np.max(np.abs(phi_closed_form(spec, orbit) - E)) <= 1e-10 * np.max(np.abs(E))
    assert np.max(np.abs(phi_finite_difference(spec, orbit) - E)) <= 1e-6 * np.max(np.abs(E))


def test_pd_eigenvalue_at_minus_one_near_24_5():
    spec = preset("pd_buck", vs=24.5)
    lams = analyze_orbit(spec, find_orbit(spec)).eigenvalues
    assert np.min(np.abs(lams + 1)) < 5e-3  # -0.99624 at 24.5; exact crossing at 24.517


def test_sn_eigenvalue_reaches_one_near_fold():
    spec = preset("sn_buck", vs=19.9985)
    for duty in (0.6, 0.8):
        rep = analyze_orbit(spec, find_orbit(spec, duty_guess=duty))
        assert np.min(np.abs(rep.eigenvalues - 1)) < 1e-3
        assert rep.classification == "near_sn"


def test_always_on_jacobian_is_free_decay():
    spec = preset("sn_buck", vs=20.5)
    _, x_eq = saturated_always_on_check(spec)
    orbit = find_orbit(spec, guess=x_eq)
    assert orbit.saturated == ("full_stage2",)
    phi = phi_discrete_duty(spec, orbit)
    assert np.allclose(phi, mat_exp(spec.A2, spec.T), rtol=1e-13, atol=1e-15)
    assert np.all(np.abs(eigenvalues(phi)) < 1)


def test_zero_gain_is_open_loop():
    spec = preset("sn_buck", ki=0.0, kv=0.0)
    orbit = find_orbit(spec)
    d = 0.3 * spec.T
    expected = mat_exp(spec.A2, spec.T - d) @ mat_exp(spec.A1, d)
    assert np.allclose(phi_discrete_duty(spec, orbit), expected, rtol=1e-12, atol=1e-15)


def test_limiter_kink_is_reported():
    spec = preset("sn_buck", ki=0.0, kv=0.0, base_duty=0.0)
    orbit = find_orbit(spec)
    with pytest.raises(NonSmoothPointError):
        phi_discrete_duty(spec, orbit)


def test_grazing_is_reported():
    spec = equilibrium_spec()
    A, b = spec.stage(1)
    d = spec.T / 2
    slope = spec.control.ramp.slope
    v = spec.control.ramp(d)
    # inductor current that makes dv/dt equal the ramp slope at the crossing
    i = 47e-6 * slope + v / 22.0
    x0 = stage_flow(spec, 1, np.array([i, v]), -d)
    orbit = PeriodicOrbit(m=1, x0=x0, d=(d,), residual=0.0, duty=(0.5,), on_duty=(0.5,),
                          states=x0[None, :])
    with pytest.raises(GrazingError):
        phi_closed_form(spec, orbit)


def test_closed_form_preconditions(pd, sn):
    with pytest.raises(TypeError):
        phi_closed_form(sn, find_orbit(sn))
    with pytest.raises(TypeError):
        phi_discrete_duty(pd, find_orbit(pd))
    with pytest.raises(ValueError):
        phi_closed_form(preset("pd_buck", vs=26.0), find_orbit(preset("pd_buck", vs=26.0), m=2))


def test_period_two_jacobian_is_product_of_cycles():
    spec = preset("pd_buck", vs=26.0)
    orbit = find_orbit(spec, m=2)
    J1, J2 = cycle_jacobians_fd(spec, orbit)
    assert rel_close(phi_finite_difference(spec, orbit), J2 @ J1, 1e-4)


def test_spectrum_invariant_under_section_shift():
    spec = preset("pd_buck", vs=26.0)
    orbit = find_orbit(spec, m=2)

    def two_cycles(x):
        for _ in range(2):
            x = stroboscopic_map(spec, x, root_tol=1e-15).x_next
        return x

    at_0 = eigenvalues(phi_finite_difference(spec, orbit))
    at_T = eigenvalues(fd_jacobian(two_cycles, orbit.states[1], rel_step=1e-6))
    assert np.max(np.abs(np.sort_complex(at_0) - np.sort_complex(at_T))) < 1e-6


# ---------------------------------------------------------------------------
# stability versus simulation


def _distance(spec, orbit, x0, cycles):
    states, _ = iterate_map(spec, x0, cycles)
    return np.max(np.abs(states[-orbit.m:] - orbit.x0) if orbit.m == 1 else
                  np.abs(states[-1] - orbit.x0))


@pytest.mark.parametrize("name,vs", [("pd_buck", 20.0), ("pd_buck", 15.0), ("sn_buck", 18.5),
                                     ("ns_buck", 25.0)])
def test_stable_orbits_attract(name, vs):
    spec = preset(name, vs=vs)
    orbit = find_orbit(spec)
    rep = analyze_orbit(spec, orbit)
    assert rep.spectral_radius < 0.98
    eps = 1e-4 * max(1.0, np.max(np.abs(orbit.x0)))
    x0 = orbit.x0 + eps * np.linspace(1, -1, spec.N)
    assert _distance(spec, orbit, x0, 200) < eps / 10


@pytest.mark.parametrize("name,vs", [("pd_buck", 26.0), ("ns_buck", 50.0)])
def test_unstable_orbits_repel(name, vs):
    spec = preset(name, vs=vs)
    orbit = find_orbit(spec)
    assert analyze_orbit(spec, orbit).spectral_radius > 1.02
    eps = 1e-6
    x0 = orbit.x0 + eps * np.linspace(1, -1, spec.N)
    states, _ = iterate_map(spec, x0, 400)
    assert np.max(np.abs(states - orbit.x0)) >= 10 * eps


# ---------------------------------------------------------------------------
# classification


def test_classify_examples():
    rep = classify([-1.0005, 0.3])
    assert rep.classification == "near_pd" and not rep.stable
    assert rep.critical_eigenvalue == -1.0005
    rep = classify([0.8897 + 0.4567j, 0.8897 - 0.4567j, 0.5])
    assert rep.classification == "near_ns"
    assert classify([0.5, 0.2]).classification == "stable"
    assert classify([1.0004, 0.2]).classification == "near_sn"
    assert classify([1.5, 0.2]).classification == "unstable"


def test_classify_band_is_configurable():
    assert classify([-0.995, 0.1], band=1e-2).classification == "near_pd"
    assert classify([-0.995, 0.1]).classification == "stable"


def test_neimark_frequency_examples():
    assert neimark_frequency(0.8897 + 0.4567j, 15000) == pytest.approx(1132, abs=2)
    assert neimark_frequency(1j, 15000) == pytest.approx(3750, rel=1e-15)
    assert neimark_frequency(-1 + 1e-4j, 15000) == pytest.approx(7500, rel=1e-4)
    with pytest.raises(ValueError):
        neimark_frequency(0.5, 15000)
    assert neimark_frequency(complex(math.cos(0.3), -math.sin(0.3)), 1.0) == \
        pytest.approx(0.3 / (2 * math.pi), rel=1e-14)
