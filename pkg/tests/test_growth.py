import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from robust_harvest.calibration import build_model
from robust_harvest.errors import ValidationError
from robust_harvest.growth import (
    LogisticParams,
    MaxWeightDistribution,
    UncertainGrowthModel,
    beta_density,
    envelope_curves,
    logistic_rhs,
    logistic_weight,
    model_stats,
    raw_moment,
    stats_from_moments,
)
from robust_harvest.reference import ALL_UNCERTAIN_FITS, LOGISTIC_FITS


def test_logistic_initial_and_inflection():
    p = LogisticParams(10.0, 100.0, 0.05)
    assert logistic_weight(0.0, p) == pytest.approx(10.0, rel=1e-15)
    assert logistic_weight(math.log(9) / 0.05, p) == pytest.approx(50.0, rel=1e-13)


def test_logistic_2023_day_90_against_ode():
    w0, wm, r = LOGISTIC_FITS[2023]
    sol = integrate.solve_ivp(lambda t, w: r * w * (1 - w / wm), (0, 90), [w0], rtol=1e-12, atol=1e-12)
    got = logistic_weight(90.0, LogisticParams(w0, wm, r))
    assert got == pytest.approx(sol.y[0, -1], rel=1e-9)
    assert round(got, 1) == 65.8


def test_logistic_rhs_fixed_points_and_finite_difference():
    p = LogisticParams(20.5, 83.2, 0.0272)
    assert logistic_rhs(0.0, p) == 0.0
    assert logistic_rhs(83.2, p) == 0.0
    h = 1e-4
    fd = (logistic_weight(30 + h, p) - logistic_weight(30 - h, p)) / (2 * h)
    assert fd == pytest.approx(logistic_rhs(logistic_weight(30.0, p), p), rel=1e-6)


@pytest.mark.parametrize("bad", [(0, 10, 0.1), (10, 5, 0.1), (1, 10, 0), (1, float("nan"), 0.1)])
def test_logistic_params_rejected(bad):
    with pytest.raises(ValidationError):
        LogisticParams(*bad)


@settings(max_examples=60, deadline=None)
@given(w0=st.floats(1, 50), ratio=st.floats(1.1, 20), r=st.floats(0.005, 0.2),
       t1=st.floats(0, 300), dt=st.floats(0.01, 50))
def test_logistic_monotone_and_bounded(w0, ratio, r, t1, dt):
    p = LogisticParams(w0, w0 * ratio, r)
    a, b = logistic_weight(t1, p), logistic_weight(t1 + dt, p)
    assert w0 <= a <= b <= p.w_max
    # increasing in w_max at fixed t > 0
    q = LogisticParams(w0, p.w_max * 1.01, r)
    assert logistic_weight(t1 + dt, q) > b


def test_uniform_density_is_one():
    d = MaxWeightDistribution(1e-9, 1.0, 1.0, 1.0)
    w = np.array([0.1, 0.5, 0.9])
    assert np.allclose(beta_density(w, d), 1.0, rtol=1e-8)


def test_density_zero_outside_open_support():
    d = MaxWeightDistribution(24, 123, 1.0, 2.5)
    assert np.all(beta_density(np.array([10.0, 24.0, 123.0, 200.0]), d) == 0.0)


@pytest.mark.parametrize("fit", ALL_UNCERTAIN_FITS, ids=lambda f: f"{f.year}-{f.w0}")
def test_density_normalized_and_close_to_closed_form(fit):
    d = MaxWeightDistribution(fit.w_lo, fit.w_hi, fit.a, fit.b)
    nodes = fit.w_lo + (np.arange(1000) + 0.5) * (fit.w_hi - fit.w_lo) / 1000
    mass = beta_density(nodes, d).sum() * (fit.w_hi - fit.w_lo) / 1000
    assert mass == pytest.approx(1.0, abs=1e-10)
    exact = stats.beta.pdf((nodes - fit.w_lo) / (fit.w_hi - fit.w_lo), fit.a, fit.b) / (fit.w_hi - fit.w_lo)
    assert np.allclose(beta_density(nodes, d), exact, rtol=1e-2, atol=0)


def test_symmetric_beta_mean():
    d = MaxWeightDistribution(1e-12, 1.0, 4.0, 4.0)
    assert d.mean() == pytest.approx(0.5, abs=1e-9)


@pytest.mark.parametrize("bad", [(0, 1, 1, 1), (5, 5, 1, 1), (1, 2, 0, 1), (1, 2, 1, -1)])
def test_distribution_rejected(bad):
    with pytest.raises(ValidationError):
        MaxWeightDistribution(*bad)


def test_moments_against_adaptive_quadrature():
    m = build_model(10.0, (0.059, 29, 293, 1.0, 9.75))
    for k in (1, 2, 3):
        def f(x):
            return (x / (1 + (x / 10.0 - 1) * math.exp(-0.059 * 90))) ** k * stats.beta.pdf((x - 29) / 264, 1.0, 9.75) / 264
        ref, _ = integrate.quad(f, 29, 293, epsabs=0, epsrel=1e-12, limit=200)
        assert raw_moment(k, 90.0, m) == pytest.approx(ref, rel=1e-5)


def test_moment_at_zero_is_power_of_w0():
    m = build_model(10.0, (0.059, 29, 293, 1.0, 9.75))
    for k in (1, 2, 3):
        assert raw_moment(k, 0.0, m) == pytest.approx(10.0**k, rel=1e-13)


@pytest.mark.parametrize("order", [0, -1, 1.5])
def test_moment_order_rejected(order):
    m = build_model(10.0, (0.059, 29, 293, 1.0, 9.75))
    with pytest.raises(ValidationError):
        raw_moment(order, 90.0, m)


def test_table_2023_w0_10_stats():
    s = model_stats(90.0, build_model(10.0, (0.059, 29, 293, 1.0, 9.75)))
    assert (round(s.mean, 1), round(s.std, 1)) == (52.2, 21.0)
    assert s.skew == pytest.approx(1.43, abs=0.02)


def test_table_2017_yearly_stats():
    s = model_stats(97.0, build_model(9.8, (0.075, 24, 187, 2.0, 8.25)))
    assert (round(s.mean, 1), round(s.std, 1)) == (55.6, 19.1)
    assert s.skew == pytest.approx(0.84, abs=0.02)


def test_degenerate_start_flags_skew():
    s = model_stats(0.0, build_model(20.5, (0.079, 24, 123, 1.0, 2.5)))
    assert s.mean == pytest.approx(20.5)
    assert s.std == 0.0
    assert not s.skew_defined and math.isnan(s.skew)
    assert "skew_undefined" in s.flags


def test_stats_from_moments_symmetric():
    # {1, 2, 3}
    s = stats_from_moments(2.0, 14 / 3, 12.0)
    assert s.std == pytest.approx(math.sqrt(2 / 3))
    assert s.skew == pytest.approx(0.0, abs=1e-12)


def test_envelopes_limits():
    m = build_model(20.5, (0.079, 24, 123, 1.0, 2.5))
    assert envelope_curves(0.0, m) == pytest.approx((20.5, 20.5))
    lo, hi = envelope_curves(5000.0, m)
    assert (lo, hi) == pytest.approx((24.0, 123.0))


@st.composite
def models(draw):
    w0 = draw(st.floats(2, 30))
    w_lo = draw(st.floats(w0 + 0.5, 80))
    w_hi = draw(st.floats(w_lo + 1, 300))
    a = draw(st.sampled_from([0.25 * k for k in range(1, 41)]))
    b = draw(st.sampled_from([0.25 * k for k in range(1, 41)]))
    r = draw(st.floats(0.02, 0.08))
    return build_model(w0, (r, w_lo, w_hi, a, b), quad_points=200)


@settings(max_examples=40, deadline=None)
@given(m=models(), t=st.floats(0.5, 250))
def test_envelope_containment_and_jensen(m, t):
    lo, hi = envelope_curves(t, m)
    m1, m2 = raw_moment(1, t, m), raw_moment(2, t, m)
    assert lo * (1 - 1e-12) <= m1 <= hi * (1 + 1e-12)
    assert m2 >= m1 * m1 * (1 - 1e-12)
    assert model_stats(t, m).std >= 0


@settings(max_examples=40, deadline=None)
@given(m=models(), t=st.floats(0.5, 250))
def test_curves_increase_in_wmax(m, t):
    w = m.weights_at(t)
    assert np.all(np.diff(w) > 0)


def test_support_below_w0_allowed():
    # a 2019 fit has w_lo = 2 below w0 = 10: those curves decrease towards w_max
    m = build_model(10.0, (0.052, 2, 151, 4.75, 7.75))
    w = m.weights_at(95.0)
    assert np.all(np.isfinite(w))
    assert w[0] < 10.0 < w[-1]


def test_model_validation():
    d = MaxWeightDistribution(24, 123, 1, 2.5)
    with pytest.raises(ValidationError):
        UncertainGrowthModel(w0=-1.0, r=0.05, dist=d)
    with pytest.raises(ValidationError):
        UncertainGrowthModel(w0=10.0, r=0.0, dist=d)
