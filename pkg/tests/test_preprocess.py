import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_series
from diary_forecast.dataset import FeatureSet
from diary_forecast.errors import DimensionMismatch, EmptyMatrix, EmptySeries
from diary_forecast.preprocess import (
    FilterRule, apply_minmax, filter_labels, fit_minmax, impute_linear, label_mask,
)
from oracles import brute_force_filter, interp_oracle

D0 = np.datetime64("2021-03-01", "D")


def day(n):
    return (D0 + n - 1).astype(object)


def series_with(feature_days, label_days):
    days = sorted(set(feature_days) | set(label_days))
    feats = [1.0 if d in feature_days else np.nan for d in days]
    labels = [3.0 if d in label_days else np.nan for d in days]
    return make_series("A", days, feats, labels)


def test_filter_exactly_five():
    assert filter_labels(series_with([1, 2, 3, 4, 5], [8])) == {day(8)}


def test_filter_four_is_too_few():
    assert filter_labels(series_with([1, 2, 3, 4], [8])) == set()


def test_filter_short_history():
    s = series_with([1, 2, 3, 4, 5, 6, 7], [5, 8])
    assert filter_labels(s) == {day(8)}


def test_filter_window_excludes_label_day():
    # six present days but only four inside d-7..d-1
    s = series_with([1, 2, 3, 4, 8, 9], [9])
    assert filter_labels(s) == set()


def test_filter_respects_view():
    feats = np.ones((8, 24))
    feats[:4, :13] = np.nan  # ESM missing on days 1-4
    from diary_forecast.dataset import DEFAULT_COLUMNS

    s = make_series("A", range(1, 9), feats, [np.nan] * 7 + [5], columns=DEFAULT_COLUMNS)
    assert filter_labels(s, FeatureSet.DAILY_DIARY) == {day(8)}
    assert filter_labels(s, FeatureSet.INTRADAY_ESM) == set()
    assert filter_labels(s, FeatureSet.COMBINED) == set()


@given(
    st.sets(st.integers(1, 40), max_size=40),
    st.sets(st.integers(1, 40), min_size=1, max_size=40),
    st.integers(1, 10),
    st.integers(0, 10),
    st.randoms(use_true_random=False),
)
def test_filter_matches_brute_force_and_ignores_order(feat_days, label_days, window, need, rnd):
    need = min(need, window)
    s = series_with(feat_days, label_days)
    rule = FilterRule(window, need)
    expected = {day(d) for d in brute_force_filter(feat_days, sorted(label_days), window, need)}
    assert filter_labels(s, rule=rule) == expected
    # same records given in a shuffled storage order
    idx = list(range(len(s)))
    rnd.shuffle(idx)
    shuffled = make_series("A", (s.days - s.days[0] + 1)[idx] + (s.days[0] - D0.astype(np.int64)),
                           s.features[idx], s.phq2[idx])
    assert filter_labels(shuffled, rule=rule) == expected


def test_filter_rule_validation():
    with pytest.raises(ValueError):
        FilterRule(7, 8)
    with pytest.raises(ValueError):
        FilterRule(0, 0)


def test_impute_single_gap_is_mean():
    out = impute_linear(make_series("A", [1, 2, 3], [2, np.nan, 4], [1, 1, 1]))
    assert out.features[:, 0].tolist() == [2.0, 3.0, 4.0]


def test_impute_two_day_gap():
    out = impute_linear(make_series("A", [1, 2, 3, 4], [2, np.nan, np.nan, 5], [1] * 4))
    np.testing.assert_allclose(out.features[:, 0], [2, 3, 4, 5], atol=1e-12, rtol=0)


def test_impute_leading_edge():
    out = impute_linear(make_series("A", [1, 2], [np.nan, 7], [1, 1]))
    assert out.features[:, 0].tolist() == [7.0, 7.0]


def test_impute_fills_absent_calendar_days():
    out = impute_linear(make_series("A", [1, 4], [1, 4], [2, 5]))
    np.testing.assert_allclose(out.features[:, 0], [1, 2, 3, 4], atol=1e-12, rtol=0)
    assert np.isnan(out.phq2[1]) and out.phq2[3] == 5


def test_impute_empty_series():
    with pytest.raises(EmptySeries):
        impute_linear(make_series("A", [1, 2], [np.nan, np.nan], [1, 1]))


finite = st.floats(-1e3, 1e3, allow_nan=False)


@st.composite
def gappy_series(draw):
    n = draw(st.integers(1, 25))
    days = sorted(draw(st.sets(st.integers(1, 40), min_size=n, max_size=n)))
    vals = [draw(st.one_of(finite, st.just(np.nan))) for _ in days]
    if all(np.isnan(v) for v in vals):
        vals[draw(st.integers(0, n - 1))] = draw(finite)
    return make_series("A", days, vals, [1.0] * n)


@given(gappy_series())
def test_impute_matches_oracle_and_keeps_observed(s):
    out = impute_linear(s)
    obs = ~np.isnan(s.features[:, 0])
    xs, vs = s.days[obs].tolist(), s.features[obs, 0].tolist()
    for d, v in zip(out.days, out.features[:, 0]):
        assert v == pytest.approx(interp_oracle(xs, vs, d), abs=1e-9 * (1 + max(map(abs, vs))))
    pos = np.searchsorted(out.days, s.days[obs])
    assert np.array_equal(out.features[pos, 0], s.features[obs, 0])
    again = impute_linear(out)
    assert np.array_equal(again.features, out.features)


def test_scaler_examples():
    M = np.array([[0.0, 3.0], [5.0, 3.0], [10.0, 3.0]])
    s = fit_minmax(M)
    assert s.min_.tolist() == [0, 3] and s.max_.tolist() == [10, 3]
    out = apply_minmax(s, np.array([[0.0, 3.0], [10.0, 3.0], [12.0, 3.0]]))
    assert out[:, 0].tolist() == [0.0, 1.0, 1.2]
    assert out[:, 1].tolist() == [0.0, 0.0, 0.0]


def test_scaler_fit_on_train_only():
    train = np.array([[0.0, 1.0], [2.0, 3.0]])
    s = fit_minmax(train)
    apply_minmax(s, np.array([[99.0, -99.0]]))
    assert s.min_.tolist() == [0, 1] and s.max_.tolist() == [2, 3]


def test_scaler_errors():
    with pytest.raises(EmptyMatrix):
        fit_minmax(np.empty((0, 3)))
    with pytest.raises(DimensionMismatch):
        apply_minmax(fit_minmax(np.ones((2, 3))), np.ones((2, 2)))


@given(st.lists(st.lists(finite, min_size=3, max_size=3), min_size=1, max_size=20))
def test_scaled_training_matrix_in_unit_box(rows):
    M = np.array(rows)
    out = apply_minmax(fit_minmax(M), M)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_imputation_is_per_subject(small_cohort):
    a = small_cohort.subjects[0]
    alone = impute_linear(a)
    # imputing the same subject next to other data gives the same result
    for other in small_cohort.subjects[1:]:
        impute_linear(other)
        assert np.array_equal(impute_linear(a).features, alone.features)


def test_label_mask_runtime(small_cohort):
    t = time.perf_counter()
    for s in small_cohort.subjects:
        label_mask(s)
        impute_linear(s, FeatureSet.COMBINED)
    assert time.perf_counter() - t < 1.0
