import numpy as np
import pytest

from diary_forecast.dataset import FeatureSet, save_cohort
from diary_forecast.errors import InvalidConfig
from diary_forecast.eval import mae
from diary_forecast.features import build_sameday
from diary_forecast.models import baseline_predictions
from diary_forecast.synth import SynthConfig, generate_cohort, missing_day_fraction


def test_deterministic_bytes(tmp_path):
    cfg = SynthConfig(n_subjects=4, n_days=30, seed=9)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    save_cohort(generate_cohort(cfg), a)
    save_cohort(generate_cohort(cfg), b)
    assert a.read_bytes() == b.read_bytes()


def test_seed_changes_data():
    a = generate_cohort(SynthConfig(n_subjects=3, n_days=20, seed=1))
    b = generate_cohort(SynthConfig(n_subjects=3, n_days=20, seed=2))
    assert not np.array_equal(a.subjects[0].phq2, b.subjects[0].phq2)


def test_no_missingness():
    c = generate_cohort(SynthConfig(n_subjects=3, n_days=20, missing_rate=0.0, seed=1))
    for s in c.subjects:
        assert s.available.all() and s.labeled.all()


def test_default_cohort_shape_and_missing_rate():
    c = generate_cohort(SynthConfig(seed=42))
    assert len(c) == 48
    assert all(len(s) == 90 for s in c.subjects)
    assert abs(missing_day_fraction(c) - 0.16) <= 0.02


def test_labels_in_range_and_present_with_features():
    c = generate_cohort(SynthConfig(n_subjects=10, n_days=60, seed=5, missing_rate=0.4))
    for s in c.subjects:
        lab = s.phq2[s.labeled]
        assert lab.min() >= 0 and lab.max() <= 12
        assert np.all(lab == np.round(lab))
        any_feature = ~np.isnan(s.features).all(axis=1)
        assert s.labeled[any_feature].all()


def test_feature_signs_vary():
    c = generate_cohort(SynthConfig(n_subjects=20, n_days=90, missing_rate=0.0, seed=4))
    X = np.vstack([s.features for s in c.subjects])
    y = np.concatenate([s.phq2 for s in c.subjects])
    r = [np.corrcoef(X[:, j], y)[0, 1] for j in range(X.shape[1])]
    assert min(r) < -0.3 and max(r) > 0.3


def test_ols_beats_rolling_mean():
    c = generate_cohort(SynthConfig(n_subjects=12, n_days=60, missing_rate=0.0, seed=8))
    dm = build_sameday(c, FeatureSet.COMBINED)
    A = np.column_stack([dm.X, np.ones(len(dm))])
    coef = np.linalg.lstsq(A, dm.y, rcond=None)[0]
    ols = mae(A @ coef, dm.y)
    base = mae(baseline_predictions(dm.subjects, dm.y, float(dm.y.mean())), dm.y)
    assert ols < base


@pytest.mark.parametrize(
    "kwargs",
    [dict(missing_rate=1.0), dict(missing_rate=-0.1), dict(n_subjects=1), dict(n_days=7),
     dict(ar_coefficient=1.0), dict(noise_sd=0.0), dict(seed=-1)],
)
def test_invalid_config(kwargs):
    with pytest.raises(InvalidConfig):
        generate_cohort(SynthConfig(**kwargs))
