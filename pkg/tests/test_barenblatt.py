import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from plapsys.barenblatt import (
    BarenblattProfile,
    evaluate,
    evaluate_via_rescaling,
    pde_residual,
    profile_constant,
    profile_mass,
    rescaled_profile,
    similarity_exponents,
    sphere_area,
)
from plapsys.core import Grid, SupportOverflowError

# Profile constants from the closed form
#   M = |S^(n-1)| C^(g + n/q) c^(-n/q) / q * B(n/q, g + 1),  q = p/(p-1), g = (p-1)/(p-2), c = (p-2)/p
# solved with mpmath at 40 digits.
FROZEN_C = {
    (3, 1, 0.5): 0.60952636665985811,
    (3, 1, 1.0): 0.79045790188721842,
    (3, 1, 2.0): 1.0250970734537918,
    (4, 1, 0.5): 0.5943528996733347,
    (4, 1, 1.0): 0.80878948245011858,
    (4, 1, 2.0): 1.1005926399643311,
    (3, 2, 0.5): 0.5580141323418195,
    (3, 2, 1.0): 0.68699598160014184,
    (3, 2, 2.0): 0.84579126473742153,
}


def beta_mass(C, p, n):
    """Independent mass oracle (mpmath Beta function)."""
    p = mp.mpf(p)
    q = p / (p - 1)
    g = (p - 1) / (p - 2)
    c = (p - 2) / p
    omega = 2 * mp.pi ** (mp.mpf(n) / 2) / mp.gamma(mp.mpf(n) / 2)
    return omega * mp.mpf(C) ** (g + n / q) * c ** (-n / q) / q * mp.beta(n / q, g + 1)


@pytest.mark.parametrize("key", sorted(FROZEN_C))
def test_profile_constant_matches_frozen_oracle(key):
    p, n, M = key
    assert profile_constant(M, p, n) == pytest.approx(FROZEN_C[key], rel=1e-9)


@pytest.mark.parametrize("p,n", [(3, 1), (4, 1), (3, 2), (2.5, 2), (5, 1)])
def test_quadrature_agrees_with_beta_function(p, n):
    for C in (0.3, 1.0, 2.7):
        assert profile_mass(C, p, n) == pytest.approx(float(beta_mass(C, p, n)), rel=1e-11)


@settings(max_examples=25, deadline=None)
@given(
    st.sampled_from([(3.0, 1), (4.0, 1), (3.0, 2)]),
    st.floats(0.05, 20.0),
    st.floats(1.1, 8.0),
)
def test_scaling_law(pn, M, lam):
    p, n = pn
    s = (p - 1) / (p - 2) + n * (p - 1) / p
    c1 = profile_constant(M, p, n)
    c2 = profile_constant(lam * M, p, n)
    assert c2 / c1 == pytest.approx(lam ** (1.0 / s), rel=1e-8)


def test_mass_round_trip():
    for (p, n, M) in FROZEN_C:
        C = profile_constant(M, p, n)
        assert abs(profile_mass(C, p, n) - M) <= 1e-10 * M


def test_invalid_inputs():
    with pytest.raises(ValueError):
        profile_constant(0.0, 3, 1)
    with pytest.raises(ValueError):
        profile_constant(1.0, 2.0, 1)
    with pytest.raises(ValueError):
        similarity_exponents(1.9, 2)
    with pytest.raises(ValueError):
        evaluate(0.0, 0.0, BarenblattProfile.from_mass(1.0, 3, 1))
    assert profile_mass(0.0, 3, 1) == 0.0


@pytest.mark.parametrize("p,n", [(3, 1), (4, 2), (2.5, 2), (6, 1)])
def test_exponent_identities(p, n):
    a1, a2 = similarity_exponents(p, n)
    assert a1 == pytest.approx(n * a2, rel=1e-15)
    assert (n * (p - 2) + p) * a2 == pytest.approx(1.0, rel=1e-15)


def test_known_exponents():
    assert similarity_exponents(3, 1) == (0.25, 0.25)
    assert similarity_exponents(3, 2) == pytest.approx((0.4, 0.2))


def test_sphere_area():
    assert sphere_area(1) == pytest.approx(2.0)
    assert sphere_area(2) == pytest.approx(2 * math.pi)


@pytest.mark.parametrize("p,n", [(3, 1), (4, 1), (3, 2)])
def test_physical_and_rescaled_forms_agree(p, n):
    prof = BarenblattProfile.from_mass(1.3, p, n)
    r = np.linspace(0, 1.2 * prof.support_radius(2.0), 301)
    for t in (0.3, 1.0, 2.0, 7.5):
        np.testing.assert_allclose(evaluate(r, t, prof), evaluate_via_rescaling(r, t, prof), rtol=1e-12, atol=1e-14)


def test_support_radius_bounds_the_profile():
    prof = BarenblattProfile.from_mass(1.0, 3, 2)
    t = 1.7
    rs = prof.support_radius(t)
    assert evaluate(rs * 1.0001, t, prof) == 0.0
    assert evaluate(rs * 0.999, t, prof) > 0.0
    assert rescaled_profile(prof.rescaled_radius * 1.0001, prof) == 0.0


@pytest.mark.parametrize("p,n", [(3, 1), (4, 1), (3, 2)])
def test_mass_is_time_invariant(p, n):
    prof = BarenblattProfile.from_mass(1.0, p, n)
    omega = sphere_area(n)
    for t in (0.25, 1.0, 4.0):
        rs = prof.support_radius(t)
        val, _ = integrate.quad(lambda r: float(evaluate(r, t, prof)) * r ** (n - 1), 0, rs, epsabs=0, epsrel=1e-12, limit=200)
        assert omega * val == pytest.approx(1.0, rel=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(0.0, 4.0), st.floats(0.0, 4.0))
def test_radial_monotonicity(t, r1, r2):
    prof = BarenblattProfile.from_mass(1.0, 3, 1)
    lo, hi = sorted((r1, r2))
    assert evaluate(hi, t, prof) <= evaluate(lo, t, prof)


def test_tuple_coordinates_are_radial():
    prof = BarenblattProfile.from_mass(1.0, 3, 2)
    x = np.array([0.3, -0.2])
    y = np.array([0.4, 0.1])
    np.testing.assert_allclose(evaluate((x, y), 1.0, prof), evaluate(np.hypot(x, y), 1.0, prof))


def test_residual_converges_at_first_order_or_better():
    # [DERIVED] grid-refinement study: ratios near 2 in 1D, near 3 in 2D
    prof = BarenblattProfile.from_mass(1.0, 3, 1)
    r1 = pde_residual(prof, Grid((400,), 5.0), 1.0)
    r2 = pde_residual(prof, Grid((800,), 5.0), 1.0)
    assert r1 / r2 >= 1.5
    prof2 = BarenblattProfile.from_mass(1.0, 3, 2)
    q1 = pde_residual(prof2, Grid((64, 64), 4.0), 1.0)
    q2 = pde_residual(prof2, Grid((128, 128), 4.0), 1.0)
    assert q1 / q2 >= 1.5


def test_residual_smaller_at_later_time():
    prof = BarenblattProfile.from_mass(1.0, 3, 1)
    g = Grid((800,), 5.0)
    r1 = pde_residual(prof, g, 1.0)
    r2 = pde_residual(prof, g, 2.0)
    assert math.isfinite(r2) and r2 < r1


def test_residual_vanishes_with_mass():
    g = Grid((400,), 5.0)
    vals = [pde_residual(BarenblattProfile.from_mass(M, 3, 1), g, 1.0) for M in (1.0, 1e-2, 1e-4)]
    assert vals[2] < vals[1] < vals[0]
    assert vals[2] < 1e-2 * vals[0]


def test_residual_rejects_overflowing_support():
    prof = BarenblattProfile.from_mass(1.0, 3, 1)
    with pytest.raises(SupportOverflowError):
        pde_residual(prof, Grid((200,), 2.0), 4.0)
    with pytest.raises(ValueError):
        pde_residual(prof, Grid((20, 20), 5.0), 1.0)
