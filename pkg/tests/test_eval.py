import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_series
from diary_forecast.dataset import Cohort, FeatureSet
from diary_forecast.errors import EmptyInput, InsufficientSubjects, InvalidConfig, LengthMismatch, TooFewRows
from diary_forecast.eval import (
    HyperGrid, Task, build_design, lag_sweep, loso_evaluate, mae, nested_grid_search,
)
from diary_forecast.features import DesignMatrix
from diary_forecast.synth import SynthConfig, generate_cohort

FAST = HyperGrid.from_dict({
    "gbt": {"colsample": [0.4, 0.8], "max_depth": [2], "n_trees": [5, 10]},
    "rf": {"n_trees": [5], "max_split_features": [2, 3]},
    "svr": {"C": [0.1, 1]},
    "mlp": {"epochs": 3},
})


def design(X, y):
    n = len(y)
    dates = np.datetime64("2021-03-01") + np.arange(n)
    return DesignMatrix(np.asarray(X, float), np.asarray(y, float), np.array(["S"] * n, dtype=object),
                        dates, dates[:, None])


def test_mae_examples():
    assert mae([1, 2], [1, 2]) == 0
    assert mae([1, 2], [2, 4]) == 1.5
    with pytest.raises(LengthMismatch):
        mae([1], [1, 2])
    with pytest.raises(EmptyInput):
        mae([], [])


@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=1, max_size=20),
       st.randoms(use_true_random=False))
def test_mae_joint_permutation(pairs, rnd):
    a, b = map(list, zip(*pairs))
    idx = list(range(len(a)))
    rnd.shuffle(idx)
    assert mae([a[i] for i in idx], [b[i] for i in idx]) == pytest.approx(mae(a, b), rel=1e-12, abs=1e-12)


def test_grid_overrides_and_validation():
    g = HyperGrid.from_dict({"svr": {"C": [2]}})
    assert g.points("svr") == [{"kernel": "rbf", "C": 2}, {"kernel": "linear", "C": 2}]
    with pytest.raises(InvalidConfig):
        HyperGrid.from_dict({"xgb": {}})
    with pytest.raises(InvalidConfig):
        HyperGrid.from_dict({"rf": {"depth": [1]}})
    with pytest.raises(InvalidConfig):
        HyperGrid.from_dict({"mlp": {"width": 3}})


def test_single_point_grid():
    rng = np.random.default_rng(0)
    dm = design(rng.random((30, 3)), rng.random(30))
    g = HyperGrid.from_dict({"gbt": {"colsample": [0.6], "max_depth": [4], "n_trees": [10]}})
    assert nested_grid_search(dm, "gbt", g).best == {"colsample": 0.6, "max_depth": 4, "n_trees": 10}


def test_memorizing_point_beats_constant_predictor():
    x = np.linspace(-1, 1, 45)[:, None]
    dm = design(x, 3 * x[:, 0])
    g = HyperGrid.from_dict({"svr": {"kernel": ["linear"], "C": [1e-4, 10]}})
    res = nested_grid_search(dm, "svr", g, seed=3)
    assert res.best == {"kernel": "linear", "C": 10}
    assert res.scores[1] < 0.2 < res.scores[0]


def test_ties_go_to_first_point():
    rng = np.random.default_rng(0)
    dm = design(rng.random((20, 3)), np.full(20, 2.0))
    res = nested_grid_search(dm, "gbt", HyperGrid())
    assert len(res.scores) == 24 and max(res.scores) == 0
    assert res.best == {"colsample": 0.2, "max_depth": 3, "n_trees": 10}


def test_mlp_skips_search():
    dm = design(np.ones((2, 2)), [1.0, 2.0])
    res = nested_grid_search(dm, "mlp", FAST)
    assert res.best["epochs"] == 3 and res.scores == []


def test_too_few_rows():
    with pytest.raises(TooFewRows):
        nested_grid_search(design(np.ones((2, 2)), [1.0, 2.0]), "gbt", FAST)


def five_subjects():
    return generate_cohort(SynthConfig(n_subjects=5, n_days=30, seed=2))


@pytest.mark.parametrize("kind", ["gbt", "rf", "svr", "mlp", "baseline"])
def test_loso_folds_and_provenance(kind):
    c = five_subjects()
    res = loso_evaluate(c, FeatureSet.COMBINED, Task(), kind, FAST, seed=1)
    assert [f.test_subject for f in res.folds] == c.subject_ids
    for f in res.folds:
        assert f.test_subject not in f.train_subjects
        assert len(f.train_subjects) == 4
    assert sorted(res.per_subject_mae) == c.subject_ids
    assert res.pooled_mae == pytest.approx(mae([p[3] for p in res.predictions], [p[2] for p in res.predictions]),
                                           abs=0)
    for sid, v in res.per_subject_mae.items():
        rows = [p for p in res.predictions if p[0] == sid]
        assert v == mae([p[3] for p in rows], [p[2] for p in rows])


def test_loso_deterministic():
    c = five_subjects()
    a = loso_evaluate(c, FeatureSet.DAILY_DIARY, Task("forecast", 2), "gbt", FAST, seed=4)
    b = loso_evaluate(c, FeatureSet.DAILY_DIARY, Task("forecast", 2), "gbt", FAST, seed=4)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())


def test_parallel_equals_serial(monkeypatch):
    c = five_subjects()
    monkeypatch.setenv("DIARY_FORECAST_THREADS", "1")
    a = loso_evaluate(c, FeatureSet.COMBINED, Task(), "rf", FAST, seed=5)
    monkeypatch.setenv("DIARY_FORECAST_THREADS", "3")
    b = loso_evaluate(c, FeatureSet.COMBINED, Task(), "rf", FAST, seed=5)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())


def test_bad_thread_setting(monkeypatch):
    monkeypatch.setenv("DIARY_FORECAST_THREADS", "zero")
    with pytest.raises(InvalidConfig):
        loso_evaluate(five_subjects(), FeatureSet.COMBINED, Task(), "baseline", FAST)


def test_subject_without_labels_changes_nothing():
    c = five_subjects()
    stub = make_series("S0", [1, 2, 3], np.ones((3, 24)), [np.nan, 4, 5], columns=c.columns)
    bigger = Cohort(c.subjects + (stub,), c.columns)
    a = loso_evaluate(c, FeatureSet.COMBINED, Task(), "gbt", FAST, seed=2)
    b = loso_evaluate(bigger, FeatureSet.COMBINED, Task(), "gbt", FAST, seed=2)
    assert b.skipped == {"S0": "no retained labels"}
    assert a.per_subject_mae == b.per_subject_mae
    assert a.chosen_params == b.chosen_params


def test_insufficient_subjects():
    c = five_subjects()
    one = Cohort(c.subjects[:1], c.columns)
    with pytest.raises(InsufficientSubjects):
        loso_evaluate(one, FeatureSet.COMBINED, Task(), "baseline")


def test_baseline_calibration_band():
    c = generate_cohort(SynthConfig(seed=42))
    res = loso_evaluate(c, FeatureSet.COMBINED, Task(), "baseline", seed=42)
    assert 1.5 <= res.pooled_mae <= 3.0


def test_baseline_uses_training_mean():
    c = five_subjects()
    dm = build_design(c, FeatureSet.COMBINED, Task())
    res = loso_evaluate(c, FeatureSet.COMBINED, Task(), "baseline", design=dm)
    for sid in c.subject_ids:
        others = dm.for_subjects([sid], exclude=True)
        assert res.chosen_params[sid]["global_train_mean"] == pytest.approx(others.y.mean(), abs=0)
        first = next(p for p in res.predictions if p[0] == sid)
        assert first[3] == pytest.approx(others.y.mean(), abs=0)


def test_lag_sweep_shape():
    c = five_subjects()
    sw = lag_sweep(c, FeatureSet.DAILY_DIARY, "mlp", range(1, 8), FAST, seed=0)
    assert [r.k for r in sw.rows] == list(range(1, 8))
    assert sorted(sw.ttests) == list(range(2, 8))
    for r in sw.rows:
        assert len(r.per_subject_mae) == len(sw.results[r.k].per_subject_mae) == 5
    assert all(t.dof == 4 for t in sw.ttests.values())
    assert sw.best_k in range(1, 8)
    assert len(sw.figure_rows()) == 7


def test_task_validation():
    with pytest.raises(ValueError):
        Task("forecast")
    with pytest.raises(ValueError):
        Task("forecast", 8)
    with pytest.raises(ValueError):
        Task("nowcast")
