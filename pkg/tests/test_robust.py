import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from robust_harvest.calibration import build_model
from robust_harvest.errors import ValidationError
from robust_harvest.growth import envelope_curves, raw_moment
from robust_harvest.robust import (
    UncertaintyAversion,
    entropic_bound,
    omega_lattice,
    variational_objective,
    worst_case_distortion,
)

W0_10_2023 = (10.0, (0.059, 29, 293, 1.0, 9.75))
YEARLY_2023 = (20.5, (0.079, 24, 123, 1.0, 2.5))


@pytest.fixture(scope="module")
def m10():
    return build_model(*W0_10_2023)


@pytest.fixture(scope="module")
def m_yearly():
    return build_model(*YEARLY_2023)


def test_eta_forms():
    n = np.array([0.0, 0.5, 1.0])
    assert np.allclose(UncertaintyAversion(0.1)(n), 0.1)
    assert np.allclose(UncertaintyAversion(0.1, "linear-decreasing")(n), [0.1, 0.05, 0.0])
    assert np.allclose(UncertaintyAversion(0.1, "affine-increasing")(n), [0.1, 0.15, 0.2])
    # the two sensitivity laws: (1 - 9n/10)/10 and (1 + n)/10
    assert np.allclose(UncertaintyAversion(0.1, "affine", slope=-0.9)(n), (1 - 0.9 * n) / 10)
    assert np.allclose(UncertaintyAversion(0.1, "affine", slope=1.0)(n), (1 + n) / 10)
    tab = UncertaintyAversion(0.0, "table", table=((0.0, 0.2), (1.0, 0.0)))
    assert np.allclose(tab(n), [0.2, 0.1, 0.0])


@pytest.mark.parametrize("kw", [dict(mu=-0.1), dict(mu=0.1, form="bogus"), dict(mu=0.1, form="affine", slope=-2.0),
                                dict(mu=0.0, form="table", table=((0.0, -1.0),))])
def test_eta_rejected(kw):
    with pytest.raises(ValidationError):
        UncertaintyAversion(**kw)


def test_eta_zero_gives_mean(m10):
    assert entropic_bound(90.0, 0.3, UncertaintyAversion(0.0), m10) == raw_moment(1, 90.0, m10)


def test_huge_eta_approaches_lower_envelope(m10):
    lo, _ = envelope_curves(90.0, m10)
    assert entropic_bound(90.0, 0.0, UncertaintyAversion(1e6), m10) == pytest.approx(lo, abs=0.5)


def _brute_force_min(model, t, eta):
    """Minimize the objective over all likelihood ratios, parametrized by a softmax."""
    w = model.weights
    W = model.weights_at(t)

    def obj(z):
        e = np.exp(z - z.max())
        phi = e / (e @ w)
        value = (phi * W) @ w + (phi * np.log(phi) - phi + 1) @ w / eta
        g = w * (W + np.log(phi) / eta)
        return value, g * phi - phi * w * (g @ phi)

    res = minimize(obj, np.zeros(W.size), jac=True, method="L-BFGS-B",
                   options={"maxiter": 20000, "ftol": 1e-16, "gtol": 1e-14})
    return res.fun


def test_variational_identity_against_brute_force(m_yearly):
    eta = UncertaintyAversion(0.1)
    omega = entropic_bound(151.0, 0.0, eta, m_yearly)
    assert _brute_force_min(m_yearly, 151.0, 0.1) == pytest.approx(omega, abs=1e-6)


def test_phi_one_gives_mean(m10):
    phi = np.ones(m10.quad_points)
    assert variational_objective(phi, 90.0, 0.5, UncertaintyAversion(0.1), m10) == pytest.approx(
        raw_moment(1, 90.0, m10), abs=1e-12)


def test_infeasible_phi_rejected(m10):
    eta = UncertaintyAversion(0.1)
    with pytest.raises(ValidationError):
        variational_objective(np.full(m10.quad_points, 2.0), 90.0, 0.5, eta, m10)
    phi = np.ones(m10.quad_points)
    phi[0] = -1e-3
    with pytest.raises(ValidationError):
        variational_objective(phi, 90.0, 0.5, eta, m10)
    with pytest.raises(ValidationError):
        variational_objective(np.ones(3), 90.0, 0.5, eta, m10)


def test_distortion_eta_zero_is_one(m10):
    d = worst_case_distortion(90.0, 1.0, UncertaintyAversion(0.1, "linear-decreasing"), m10)
    assert np.all(d.values == 1.0)


@pytest.mark.parametrize("t", [61.0, 121.0, 180.0])
def test_distortion_normalized_and_decreasing(m_yearly, t):
    d = worst_case_distortion(t, 0.2, UncertaintyAversion(0.1), m_yearly)
    assert d.total_mass() == pytest.approx(1.0, abs=1e-8)
    assert np.all(d.values > 0)
    # w0 = 20.5 < w_lo = 24, so W increases in W_max and the tilt decreases
    assert np.all(np.diff(d.values) < 0)
    assert d.mean_wmax() <= m_yearly.dist.mean() + 1e-12


@settings(max_examples=30, deadline=None)
@given(t=st.floats(1, 200), e1=st.floats(1e-4, 1.0), e2=st.floats(1e-4, 1.0), n=st.floats(0, 1))
def test_omega_monotone_in_eta_and_below_mean(t, e1, e2, n):
    m = build_model(*YEARLY_2023)
    lo, hi = sorted((e1, e2))
    o_lo = entropic_bound(t, n, UncertaintyAversion(lo), m)
    o_hi = entropic_bound(t, n, UncertaintyAversion(hi), m)
    assert o_hi <= o_lo + 1e-10
    assert o_lo <= raw_moment(1, t, m) + 1e-10
    assert o_hi >= envelope_curves(t, m)[0] - 1e-10


@settings(max_examples=20, deadline=None)
@given(t=st.floats(0.5, 200), eta=st.floats(1e-3, 2.0), seed=st.integers(0, 2**32 - 1))
def test_variational_equality_and_dominance(t, eta, seed):
    m = build_model(*W0_10_2023)
    law = UncertaintyAversion(eta)
    omega = entropic_bound(t, 0.0, law, m)
    star = worst_case_distortion(t, 0.0, law, m)
    assert variational_objective(star.values, t, 0.0, law, m) == pytest.approx(omega, abs=1e-8)
    rng = np.random.default_rng(seed)
    for _ in range(10):
        phi = np.exp(0.5 * rng.standard_normal(m.quad_points))
        phi /= phi @ m.weights
        assert variational_objective(phi, t, 0.0, law, m) >= omega - 1e-8


def test_omega_nondecreasing_in_n_for_decreasing_eta(m_yearly):
    times = 61 + np.linspace(0, 120, 25)
    ns = np.linspace(0, 1, 51)
    om = omega_lattice(times, ns, UncertaintyAversion(0.1, "linear-decreasing"), m_yearly)
    assert np.all(np.diff(om, axis=1) >= -1e-12)


@pytest.mark.parametrize("eta", [UncertaintyAversion(0.1), UncertaintyAversion(0.1, "linear-decreasing"),
                                 UncertaintyAversion(0.1, "affine", slope=-0.9),
                                 UncertaintyAversion(0.1, "affine-increasing"),
                                 UncertaintyAversion(0.0, "table", table=((0.0, 0.3), (0.4, 0.05), (1.0, 0.0)))])
def test_lattice_matches_pointwise(m_yearly, eta):
    times = 61 + np.linspace(0, 120, 13)
    ns = np.linspace(0, 1, 21)
    om = omega_lattice(times, ns, eta, m_yearly)
    ref = np.array([[entropic_bound(t, n, eta, m_yearly) for n in ns] for t in times])
    assert np.allclose(om, ref, rtol=1e-12, atol=1e-10)


def test_lattice_nonuniform_ns(m_yearly):
    eta = UncertaintyAversion(0.1, "linear-decreasing")
    times = np.array([61.0, 100.0])
    ns = np.array([0.0, 0.1, 0.7, 1.0])
    om = omega_lattice(times, ns, eta, m_yearly)
    ref = np.array([[entropic_bound(t, n, eta, m_yearly) for n in ns] for t in times])
    assert np.allclose(om, ref, rtol=1e-12)
