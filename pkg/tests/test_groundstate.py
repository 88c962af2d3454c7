import numpy as np
import pytest
from scipy.integrate import quad, simpson

from twobubble.errors import InvalidExponent, NonConvergence, WindowTooNoisy
from twobubble.groundstate import (GroundState, asymptotic_constant,
                                   closed_form_profile, closed_form_q0,
                                   decay_shape, interaction_weight,
                                   ode_residual, solve_profile, sphere_area,
                                   structure_constants)

from oracles import shoot_q0

# frozen from the fixed-step RK4 oracle, h=1e-5, bracket width 1e-10
Q0_D2_P3_ORACLE = 2.206200864650


def test_closed_form_p3(gs1):
    assert abs(gs1.q0 - np.sqrt(2.0)) < 1e-10
    exact = closed_form_profile(3.0, gs1.r)
    assert np.max(np.abs(gs1.q - exact)) < 1e-8
    dq_exact = -np.sqrt(2.0) * np.tanh(gs1.r) / np.cosh(gs1.r)
    assert np.max(np.abs(gs1.dq - dq_exact)) < 1e-8


def test_closed_form_p2():
    gs = solve_profile(2.0, 1)
    assert abs(gs.q0 - 1.5) < 1e-10
    assert np.max(np.abs(gs.q - closed_form_profile(2.0, gs.r))) < 1e-8


@pytest.mark.parametrize("p", [1.8, 2.5, 4.0])
def test_closed_form_generic_p(p):
    gs = solve_profile(p, 1)
    assert abs(gs.q0 - closed_form_q0(p)) < 1e-9
    assert np.max(np.abs(gs.q - closed_form_profile(p, gs.r))) < 1e-8


def test_d2_against_independent_oracle(gs2):
    assert abs(gs2.q0 - Q0_D2_P3_ORACLE) < 1e-3
    assert abs(gs2.q0 - Q0_D2_P3_ORACLE) < 1e-6  # observed agreement is far tighter


def test_oracle_self_consistency():
    # the coarse in-test oracle must agree with the frozen high-resolution value
    coarse = shoot_q0(3.0, 2, h=1e-3, bracket_width=1e-8)
    assert abs(coarse - Q0_D2_P3_ORACLE) < 1e-6


def test_profile_monotone_positive(gs1, gs2):
    for gs in (gs1, gs2):
        assert np.all(gs.q > 0)
        assert np.all(np.diff(gs.q) < 0)
        assert abs(gs.dq[0]) < 1e-12


def test_ode_residual_small(gs1, gs2):
    assert np.max(np.abs(ode_residual(gs1))) < 1e-6
    assert np.max(np.abs(ode_residual(gs2))) < 1e-6


def test_pohozaev_weak_residuals(gs1):
    res = ode_residual(gs1)
    w = gs1.r ** (gs1.d - 1)
    against_q = sphere_area(gs1.d) * simpson(res * gs1.q * w, x=gs1.r)
    lam_q = 2.0 / (gs1.p - 1.0) * gs1.q + gs1.r * gs1.dq
    against_lamq = sphere_area(gs1.d) * simpson(res * lam_q * w, x=gs1.r)
    assert abs(against_q) < 1e-9
    assert abs(against_lamq) < 1e-8


def test_asymptotic_constant_p3(gs1):
    c_q, resid = asymptotic_constant(gs1)
    assert abs(c_q - 2.0 * np.sqrt(2.0)) < 1e-6
    assert resid < 1e-4  # fitted model reproduces the window data


def test_asymptotic_constant_p2():
    gs = solve_profile(2.0, 1)
    c_q, _ = asymptotic_constant(gs)
    assert abs(c_q - 6.0) < 1e-4


def test_tail_remainder_bound(gs1):
    # |q - c_Q r^(-(d-1)/2) e^(-r)| <= K r^(-(d-1)/2-1) e^(-r) on the window
    c_q, _ = asymptotic_constant(gs1)
    rr = np.linspace(10.0, 20.0, 200)
    model = c_q * rr ** (-0.5 * (gs1.d - 1)) * np.exp(-rr)
    rem = np.abs(gs1.q_at(rr) - model) * rr ** (0.5 * (gs1.d - 1) + 1) * np.exp(rr)
    assert np.max(rem) < 10.0


def test_structure_constants_p3_d1(gs1, sc1):
    assert abs(sc1.c2 - 2.0) < 1e-8
    assert abs(sc1.c1 - 2.0) < 1e-8
    assert abs(sc1.i_q - 4.0 * np.sqrt(2.0)) < 1e-6
    assert abs(sc1.c - 16.0) < 1e-4
    assert sc1.c > 0 and sc1.c2 > 0


def test_c2_half_mass_identity(gs1, gs2):
    for gs in (gs1, gs2):
        sc = structure_constants(gs)
        assert abs(sc.c2 / (0.5 * sc.l2) - 1.0) < 1e-8


def test_c1_scaling_identity(gs2):
    gs = solve_profile(2.2, 2)
    sc = structure_constants(gs)
    expected = (2.0 / (gs.p - 1.0) - gs.d / 2.0) * sc.l2
    assert abs(sc.c1 - expected) < 1e-8 * abs(expected)
    assert sc.c1 > 0  # sub-critical
    # critical case degenerates
    sc2 = structure_constants(gs2)
    assert abs(sc2.c1) < 1e-8


def test_i_q_d2_against_radial_reduction(gs2):
    # independent oracle: angular average reduces the weight to a Bessel factor
    sc = structure_constants(gs2)
    val, err = quad(lambda r: gs2.q_at(r) ** gs2.p * interaction_weight(2, r),
                    0.0, gs2.r_max, limit=400)
    assert err < 1e-8
    assert abs(sc.i_q - val) < 1e-7 * abs(val)


def test_tail_matches_decay_shape(gs1):
    # beyond r_max the profile continues with the matched linear tail
    rr = np.array([gs1.r_max + 0.5, gs1.r_max + 3.0])
    expect = gs1.tail_amplitude * decay_shape(gs1.d, rr)
    assert np.allclose(gs1.q_at(rr), expect, rtol=1e-12)


def test_invalid_exponent():
    with pytest.raises(InvalidExponent):
        solve_profile(1.0, 1)
    with pytest.raises(InvalidExponent):
        solve_profile(0.5, 1)
    with pytest.raises(InvalidExponent):
        solve_profile(6.0, 3)  # above (d+2)/(d-2) = 5


def test_bad_tolerance():
    with pytest.raises(NonConvergence):
        solve_profile(3.0, 1, tol=-1.0)


def test_window_too_noisy(gs1):
    with pytest.raises(WindowTooNoisy):
        asymptotic_constant(gs1, window=(20.0, 30.0))  # beyond r_max


def test_groundstate_immutable(gs1):
    with pytest.raises(Exception):
        gs1.q0 = 2.0
    assert isinstance(gs1, GroundState)
