import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robust_harvest.calibration import (
    CalibrationGrid,
    CompetitionSample,
    Restriction,
    WeightSeries,
    build_model,
    empirical_stats,
    error_metric,
    evaluate_candidate,
    fit_logistic,
    grid_search,
    index_of,
)
from robust_harvest.errors import FitError, ValidationError
from robust_harvest.growth import StatsSummary, logistic_curve, model_stats
from robust_harvest.reference import COMPETITION_STATS, LOGISTIC_FITS, UNCERTAIN_FITS_W0_10


def target(year):
    c = COMPETITION_STATS[year]
    return StatsSummary(mean=c.mean, std=c.std, skew=float("nan"), count=c.count)


def series(w0, wm, r, days):
    days = np.asarray(days, dtype=float)
    return WeightSeries(tuple(days), tuple(logistic_curve(days, w0, wm, r)))


def test_fit_round_trip_synthetic():
    fit, sse = fit_logistic(series(10, 100, 0.03, range(0, 191, 10)), return_residual=True)
    assert (fit.w0, fit.w_max, fit.r) == pytest.approx((10, 100, 0.03), rel=1e-6)
    assert sse < 1e-10


def test_fit_round_trip_2023_triple():
    w0, wm, r = LOGISTIC_FITS[2023]
    fit = fit_logistic(series(w0, wm, r, range(61, 182, 10)))
    assert (fit.w0, fit.w_max, fit.r) == pytest.approx((w0, wm, r), rel=1e-4)


def test_fit_is_a_fixed_point():
    w0, wm, r = LOGISTIC_FITS[2018]
    first = fit_logistic(series(w0, wm, r, range(0, 200, 15)))
    again, sse = fit_logistic(series(first.w0, first.w_max, first.r, range(0, 200, 15)), return_residual=True)
    assert sse < 1e-10
    assert again.w_max == pytest.approx(first.w_max, rel=1e-8)


def test_fit_needs_three_points():
    with pytest.raises(ValidationError):
        fit_logistic(WeightSeries((0.0, 10.0), (5.0, 6.0)))


def test_fit_flat_series():
    with pytest.raises(FitError, match="no sigmoid signal"):
        fit_logistic(WeightSeries((0.0, 10.0, 20.0), (5.0, 5.0, 5.0)))


def test_series_validation_names_row():
    with pytest.raises(ValidationError, match="row 2"):
        WeightSeries((0.0, 5.0, 5.0), (1.0, 2.0, 3.0))
    with pytest.raises(ValidationError, match="row 1"):
        WeightSeries((0.0, 5.0, 6.0), (1.0, -2.0, 3.0))


def test_empirical_stats_constant_sample():
    s = empirical_stats(CompetitionSample(90, (5.0, 5.0, 5.0)))
    assert (s.mean, s.std) == (5.0, 0.0)
    assert not s.skew_defined


def test_empirical_stats_symmetric():
    s = empirical_stats(CompetitionSample(90, (1.0, 2.0, 3.0)))
    assert s.mean == 2.0
    assert s.std == pytest.approx(math.sqrt(2 / 3))
    assert s.skew == pytest.approx(0.0, abs=1e-15)
    assert (s.median, s.min, s.max, s.count) == (2.0, 1.0, 3.0, 3)


def test_sample_needs_two_positive_weights():
    with pytest.raises(ValidationError):
        CompetitionSample(90, (3.0,))
    with pytest.raises(ValidationError, match="row 1"):
        CompetitionSample(90, (3.0, -1.0))


def test_error_metric_arithmetic():
    t = StatsSummary(mean=50.0, std=20.0, skew=0.0)
    assert error_metric(t, t) == 0.0
    assert error_metric(t, StatsSummary(mean=50.5, std=20.0, skew=0.0)) == pytest.approx(1e-4, rel=1e-12)
    with pytest.raises(ValidationError):
        error_metric(StatsSummary(mean=0.0, std=1.0, skew=0.0), t)


def test_evaluate_candidate_2023_tuple():
    grid = CalibrationGrid()
    model, er = evaluate_candidate((39, 29, 293, 4, 39), 10.0, 90, target(2023), grid)
    s = model_stats(90, model)
    assert (round(s.mean, 1), round(s.std, 1)) == (52.2, 21.0)
    # recomputed against the rounded published targets; see the acceptance suite for the published Er
    assert er == pytest.approx(2.84e-9, rel=0.02)


def test_evaluate_candidate_skips_empty_support():
    grid = CalibrationGrid(k_max=300)
    assert evaluate_candidate((0, 30, 30, 4, 4), 10.0, 90, target(2023), grid) is None


def test_evaluate_candidate_outside_grid():
    with pytest.raises(ValidationError):
        evaluate_candidate((41, 29, 293, 4, 39), 10.0, 90, target(2023))


def test_index_round_trip():
    grid = CalibrationGrid()
    for f in UNCERTAIN_FITS_W0_10:
        idx = index_of((f.r, f.w_lo, f.w_hi, f.a, f.b), grid)
        assert grid.decode(*idx) == pytest.approx((f.r, f.w_lo, f.w_hi, f.a, f.b))


def test_grid_size_default():
    assert CalibrationGrid().size() == 41 * sum(300 - j for j in range(1, 51)) * 40 * 40


def test_restriction_parse_and_format():
    r = Restriction.parse("36:42,26:32,290:296,1:7,36:42")
    assert r.k == (290, 296)
    assert Restriction.parse(r.format()) == r
    with pytest.raises(ValidationError):
        Restriction.parse("1:2,3:4")
    with pytest.raises(ValidationError):
        Restriction.parse("1:2,3:4,5:x,1:1,1:1")


def test_singleton_restriction():
    idx = (39, 29, 293, 4, 39)
    res = grid_search(10.0, target(2023), restriction=Restriction(*[(v, v) for v in idx]), day=90)
    assert res.indices == idx
    _, er = evaluate_candidate(idx, 10.0, 90, target(2023))
    assert res.er == er


def test_result_er_recomputes_exactly():
    idx = (39, 29, 293, 4, 39)
    res = grid_search(10.0, target(2023), restriction=Restriction.around(idx, 1), day=90)
    assert res.er == error_metric(res.target_stats, model_stats(90, res.model))
    assert res.er >= 0


def test_empty_restriction_rejected():
    with pytest.raises(ValidationError):
        grid_search(10.0, target(2023), restriction=Restriction((5, 4), (1, 2), (3, 4), (1, 1), (1, 1)), day=90)


def test_optimum_beats_random_candidates():
    idx = (39, 29, 293, 4, 39)
    rest = Restriction.around(idx, 3)
    grid = CalibrationGrid.spanning(rest)
    res = grid_search(10.0, target(2023), grid=grid, restriction=rest, day=90)
    rng = np.random.default_rng(7)
    for _ in range(1000):
        cand = tuple(int(rng.integers(lo, hi + 1)) for lo, hi in (rest.i, rest.j, rest.k, rest.l, rest.m))
        _, er = evaluate_candidate(cand, 10.0, 90, target(2023), grid)
        assert res.er <= er * (1 + 1e-9)


def test_ties_resolved_to_smallest_index(monkeypatch):
    import robust_harvest.calibration as cal

    # every chunk reports the same Er for its first candidate
    def flat(args):
        i, jk, lm = args[0], args[1], args[2]
        return 0.0, (int(i), int(jk[0, 0]), int(jk[0, 1]), int(lm[0, 0]), int(lm[0, 1]))

    monkeypatch.setattr(cal, "_scan_chunk", flat)
    res = cal.grid_search(10.0, target(2023), restriction=Restriction((3, 5), (10, 12), (20, 22), (2, 3), (2, 3)), day=90)
    assert res.indices == (3, 10, 20, 2, 2)


@settings(max_examples=8, deadline=None)
@given(i=st.integers(5, 35), j=st.integers(5, 40), k=st.integers(120, 280), l=st.integers(3, 30),
       m=st.integers(3, 30))
def test_worker_count_does_not_change_result(i, j, k, l, m):
    rest = Restriction.around((i, j, k, l, m), 1)
    a = grid_search(10.0, target(2019), restriction=rest, day=95, workers=1)
    b = grid_search(10.0, target(2019), restriction=rest, day=95, workers=3)
    assert (a.indices, a.er) == (b.indices, b.er)


def test_sample_route_matches_summary_route():
    model = build_model(10.0, (0.059, 29, 293, 1.0, 9.75))
    sample = CompetitionSample(90, tuple(model.weights_at(90)[::10]))
    idx = (39, 29, 293, 4, 39)
    a = grid_search(10.0, sample, restriction=Restriction.around(idx, 1))
    b = grid_search(10.0, empirical_stats(sample), restriction=Restriction.around(idx, 1), day=90)
    assert a.indices == b.indices
