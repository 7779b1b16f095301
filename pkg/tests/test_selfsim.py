import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from plapsys.barenblatt import BarenblattProfile, sample, similarity_exponents
from plapsys.core import Grid, MassVector, SystemParams, VectorField, l1_mass
from plapsys.selfsim import (
    EntropyRecord,
    RescaledState,
    component_deviations,
    component_proportionality,
    entropy_H,
    entropy_Hhat,
    entropy_decay_report,
    entropy_verdict,
    proportionality_csv,
    quadrature_tolerance,
    sigma,
    sigma_prime,
    to_self_similar,
)

P3 = SystemParams(3.0, 1, 1)

# H and Hhat of theta = R(1) B_1(R(1) eta, 2) (a Barenblatt snapshot at t = 2
# labelled t = 1), p = 3, n = 1, from mpmath quadrature of the continuous
# integrands at 30 digits.
ORACLE_H = 0.0130241404753581
ORACLE_HHAT = 0.013754451616690905


def test_rescaled_state_checks_tau():
    g = Grid((4,), 1.0)
    with pytest.raises(ValueError):
        RescaledState(g, np.zeros((1, 4)), tau=0.3, source_time=0.25, a2=0.25)
    rs = RescaledState(g, np.zeros((1, 4)), tau=0.0, source_time=0.25, a2=0.25)
    assert rs.R == 1.0


@pytest.mark.parametrize("t", [0.1, 0.25, 3.0, 200.0])
def test_rescaling_preserves_mass(t):
    rng = np.random.default_rng(0)
    g = Grid((50,), 3.0)
    f = VectorField(g, rng.random((2, 50)), t)
    rs = to_self_similar(f, P3)
    np.testing.assert_allclose(rs.masses().masses, l1_mass(f).masses, rtol=1e-12)
    _, a2 = similarity_exponents(3.0, 1)
    assert rs.tau == pytest.approx(a2 * math.log(t / a2), rel=1e-14, abs=1e-15)


def test_rescaling_needs_positive_time():
    g = Grid((4,), 1.0)
    with pytest.raises(ValueError):
        to_self_similar(VectorField(g, np.ones(4), 0.0), P3)


@pytest.mark.parametrize("p", [2.5, 3.0, 4.0, 7.0])
def test_sigma_prime_matches_finite_differences(p):
    s = np.linspace(0.1, 5.0, 40)
    d = 1e-6
    fd = (sigma(s + d, p) - sigma(s - d, p)) / (2 * d)
    np.testing.assert_allclose(sigma_prime(s, p), fd, rtol=1e-7)


def test_sigma_rejects_negative_arguments():
    with pytest.raises(ValueError):
        sigma(-1.0, 3.0)
    with pytest.raises(ValueError):
        sigma_prime(np.array([1.0, -0.1]), 3.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(2.05, 8.0), st.floats(0, 100), st.floats(0, 100), st.floats(0, 1))
def test_sigma_is_convex(p, s1, s2, lam):
    lhs = sigma(lam * s1 + (1 - lam) * s2, p)
    rhs = lam * sigma(s1, p) + (1 - lam) * sigma(s2, p)
    assert lhs <= rhs * (1 + 1e-12) + 1e-300


def test_entropies_match_dense_oracle():
    prof = BarenblattProfile.from_mass(1.0, 3.0, 1)
    g = Grid((4000,), 6.0)
    rs = to_self_similar(VectorField(g, sample(prof, g, 2.0), 1.0), P3)
    assert entropy_H(rs, prof) == pytest.approx(ORACLE_H, rel=1e-6)
    assert entropy_Hhat(rs, prof) == pytest.approx(ORACLE_HHAT, rel=1e-6)


@pytest.mark.parametrize("t", [0.25, 1.0, 10.0])
def test_entropies_vanish_on_the_profile(t):
    prof = BarenblattProfile.from_mass(1.0, 3.0, 1)
    g = Grid((2000,), 6.0)
    rs = to_self_similar(VectorField(g, sample(prof, g, t), t), P3)
    tol = quadrature_tolerance(rs, prof)
    assert abs(entropy_H(rs, prof)) <= 1e-6
    assert abs(entropy_Hhat(rs, prof)) <= 1e-6
    assert tol < 1e-5


@settings(max_examples=20, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(0.5, 2.0), st.floats(0.0, 0.4), st.integers(0, 1000))
def test_entropy_chain(t, width, noise, seed):
    # Hhat >= H >= -tolerance for arbitrary nonnegative data with the right mass
    g = Grid((300,), 6.0)
    rng = np.random.default_rng(seed)
    x = g.axis(0)
    u = np.maximum(1 - (x / width) ** 2, 0) ** 2 * (1 + noise * rng.random(300))
    data = np.stack([u, 0.5 * u[::-1]])
    f = VectorField(g, data, t)
    m = l1_mass(f).total_norm
    assume(m > 0)
    prof = BarenblattProfile.from_mass(m, 3.0, 1)
    rs = to_self_similar(f, SystemParams(3.0, 1, 2))
    tol = quadrature_tolerance(rs, prof)
    H = entropy_H(rs, prof)
    Hh = entropy_Hhat(rs, prof)
    assert H >= -tol
    assert Hh >= H - tol


def test_entropy_rejects_wrong_profile_mass():
    prof = BarenblattProfile.from_mass(2.0, 3.0, 1)
    g = Grid((400,), 6.0)
    rs = to_self_similar(VectorField(g, sample(BarenblattProfile.from_mass(1.0, 3.0, 1), g, 1.0), 1.0), P3)
    with pytest.raises(ValueError):
        entropy_H(rs, prof)


def _records(taus, values, tol=0.0):
    return [EntropyRecord(tau=t, t=math.exp(t), H=v, Hhat=v, quad_tol=tol) for t, v in zip(taus, values)]


def test_verdict_passes_exponential_decay():
    taus = np.linspace(0, 3, 7)
    rep = entropy_verdict(_records(taus, np.exp(-1.2 * taus)))
    assert rep.verdict and rep.strictly_decreasing and rep.ordering_ok
    assert rep.worst_ratio() <= 1.15


def test_verdict_fails_slow_decay():
    taus = np.linspace(0, 3, 7)
    rep = entropy_verdict(_records(taus, np.exp(-0.5 * taus)))
    assert not rep.verdict
    assert rep.worst_ratio() > 1.15


def test_verdict_fails_time_reversed_records():
    taus = np.linspace(0, 3, 7)
    recs = _records(taus, np.exp(-2 * taus))[::-1]
    rep = entropy_verdict(recs, start_tau=-1.0)
    assert not rep.ordering_ok
    assert not rep.verdict


def test_verdict_window_starts_at_tau0():
    taus = np.array([-1.0, 0.0, 1.0, 2.0])
    vals = np.array([100.0, 1.0, math.exp(-1.0), math.exp(-2.0)])
    rep = entropy_verdict(_records(taus, vals))
    assert rep.reference_index == 1
    assert rep.verdict


def test_decay_report_csv_layout():
    prof = BarenblattProfile.from_mass(1.0, 3.0, 1)
    g = Grid((400,), 6.0)
    snaps = [VectorField(g, sample(prof, g, t + 0.5), t) for t in (0.25, 0.5, 1.0)]
    rep = entropy_decay_report(snaps, P3)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "tau,t,H,Hhat,envelope,pass"
    assert len(lines) == 4


def test_component_proportionality():
    g = Grid((100,), 3.0)
    x = g.axis(0)
    u = np.maximum(1 - x**2, 0)
    f = VectorField(g, np.stack([3 * u, 4 * u]), 1.0)
    rs = to_self_similar(f, SystemParams(3.0, 1, 2))
    m = l1_mass(f)
    assert component_proportionality(rs, m) == pytest.approx(0.0, abs=1e-14)
    v = np.maximum(1 - (x / 0.5) ** 2, 0)
    f2 = VectorField(g, np.stack([u, v * l1_mass(VectorField(g, u)).masses[0] / l1_mass(VectorField(g, v)).masses[0]]), 1.0)
    rs2 = to_self_similar(f2, SystemParams(3.0, 1, 2))
    devs = component_deviations(rs2, l1_mass(f2))
    assert component_proportionality(rs2, l1_mass(f2)) == pytest.approx(max(devs))
    assert max(devs) > 0.05
    with pytest.raises(ValueError):
        component_proportionality(rs2, MassVector((0.0, 0.0)))


def test_proportionality_csv_layout():
    text = proportionality_csv([(0.0, 1, 0.5), (0.0, 2, 0.25)])
    assert text == "tau,component,deviation\n0.0,1,0.5\n0.0,2,0.25\n"
