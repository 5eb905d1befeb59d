"""Leave-one-subject-out evaluation with nested grid search and lag sweeps."""

from __future__ import annotations

import dataclasses
import hashlib
import itertools
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .dataset import Cohort, FeatureSet
from .errors import (
    EmptyInput, InsufficientSubjects, InvalidConfig, LengthMismatch, NoRows, TooFewRows, UsageError,
)
from .features import MAX_LAG, DesignMatrix, build_lagged, build_sameday
from .models import (
    MlpSpec, baseline_predictions, fit_gbt, fit_mlp, fit_rf,
)
from .models.svr import EPSILON, default_gamma, fit_svr_gram, kernel_matrix
from .preprocess import FilterRule, Scaler, apply_minmax, fit_minmax
from .stats import TTestResult, paired_ttest

log = logging.getLogger(__name__)

LEARNERS = ("gbt", "rf", "svr", "mlp")
MODEL_KINDS = LEARNERS + ("baseline",)
N_INNER_FOLDS = 3
THREADS_ENV = "DIARY_FORECAST_THREADS"

# canonical enumeration order: first key outermost
DEFAULT_GRID = {
    "gbt": {"colsample": [0.2, 0.4, 0.6, 0.8], "max_depth": [3, 4, 5], "n_trees": [10, 100]},
    "svr": {"kernel": ["rbf", "linear"], "C": [0.0001, 0.001, 0.1, 1, 3, 5, 10]},
    "rf": {"n_trees": [10, 100, 500, 1000], "max_split_features": [2, 3, 4, 5, 6]},
}
# the parameter whose values share one fit through staged predictions
_STAGED = {"gbt": "n_trees", "rf": "n_trees", "svr": None}


def mae(y_pred, y_true) -> float:
    y_pred = np.asarray(y_pred, dtype=np.float64).reshape(-1)
    y_true = np.asarray(y_true, dtype=np.float64).reshape(-1)
    if len(y_pred) != len(y_true):
        raise LengthMismatch(f"{len(y_pred)} predictions for {len(y_true)} labels")
    if len(y_true) == 0:
        raise EmptyInput("MAE of zero predictions is undefined")
    return float(np.mean(np.abs(y_pred - y_true)))


def stream_seed(seed: int, *key: int) -> int:
    """64-bit seed of the independent stream ``key`` under ``seed``."""
    ss = np.random.SeedSequence(int(seed) % 2**64, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class HyperGrid:
    gbt: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_GRID["gbt"].items()})
    svr: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_GRID["svr"].items()})
    rf: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_GRID["rf"].items()})
    # no search for the perceptron; entries override MlpSpec fields
    mlp: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, overrides: dict | None) -> "HyperGrid":
        """Default grid with per-parameter value lists replaced from ``overrides``."""
        grid = cls()
        for kind, params in (overrides or {}).items():
            if kind not in LEARNERS or not isinstance(params, dict):
                raise InvalidConfig(f"grid override for unknown model {kind!r}")
            if kind == "mlp":
                known = {f.name for f in dataclasses.fields(MlpSpec)}
                bad = set(params) - known
                if bad:
                    raise InvalidConfig(f"unknown perceptron settings {sorted(bad)}")
                grid.mlp.update(params)
                continue
            target = getattr(grid, kind)
            for name, values in params.items():
                if name not in target:
                    raise InvalidConfig(f"unknown {kind} hyperparameter {name!r}")
                values = list(values) if isinstance(values, (list, tuple)) else [values]
                if not values:
                    raise InvalidConfig(f"empty value list for {kind}.{name}")
                target[name] = values
        return grid

    def to_dict(self) -> dict:
        return {"gbt": self.gbt, "svr": self.svr, "rf": self.rf, "mlp": self.mlp}

    def mlp_spec(self) -> MlpSpec:
        return MlpSpec(**self.mlp).validate()

    def points(self, kind: str) -> list[dict]:
        if kind in ("mlp", "baseline"):
            return [{}]
        space = getattr(self, kind)
        names = list(space)
        return [dict(zip(names, combo)) for combo in itertools.product(*(space[n] for n in names))]


@dataclass(frozen=True)
class Task:
    kind: str = "sameday"
    k: int | None = None

    def __post_init__(self):
        if self.kind not in ("sameday", "forecast"):
            raise UsageError(f"task must be 'sameday' or 'forecast', got {self.kind!r}")
        if self.kind == "forecast" and (self.k is None or not 1 <= self.k <= MAX_LAG):
            raise UsageError(f"forecast lag k must lie in 1..{MAX_LAG}, got {self.k!r}")

    @property
    def label(self) -> str:
        return "sameday" if self.kind == "sameday" else f"forecast(k={self.k})"


def build_design(cohort: Cohort, fs: FeatureSet, task: Task, rule: FilterRule = FilterRule()) -> DesignMatrix:
    if task.kind == "sameday":
        return build_sameday(cohort, fs, rule)
    return build_lagged(cohort, fs, task.k, rule)


# ---------------------------------------------------------------------------
# model fitting


def _group_key(kind: str, point: dict) -> tuple:
    staged = _STAGED.get(kind)
    return tuple((k, v) for k, v in point.items() if k != staged)


def fit_model(kind: str, X: np.ndarray, y: np.ndarray, params: dict, seed: int, mlp: MlpSpec | None = None):
    if kind == "gbt":
        return fit_gbt(X, y, params["colsample"], int(params["max_depth"]), int(params["n_trees"]), seed)
    if kind == "rf":
        return fit_rf(X, y, int(params["n_trees"]), int(params["max_split_features"]), seed)
    if kind == "svr":
        gamma = default_gamma(X) if params["kernel"] == "rbf" else None
        K = kernel_matrix(X, X, params["kernel"], gamma)
        return fit_svr_gram(K, X, y, params["kernel"], float(params["C"]), gamma)
    if kind == "mlp":
        return fit_mlp(X, y, mlp, seed)
    raise UsageError(f"unknown model kind {kind!r}")


def _score_split(kind, grid: HyperGrid, points, Xtr, ytr, Xva, yva, seed_of) -> np.ndarray:
    """Validation MAE of every grid point on one inner split.

    Points that differ only in the tree count share one fit whose staged
    predictions give every count.
    """
    scores = np.empty(len(points))
    staged = _STAGED[kind]
    groups: dict[tuple, list[int]] = {}
    for i, pt in enumerate(points):
        groups.setdefault(_group_key(kind, pt), []).append(i)
    for g, (key, members) in enumerate(groups.items()):
        base = dict(key)
        if kind == "svr":
            gamma = default_gamma(Xtr) if base["kernel"] == "rbf" else None
            K = kernel_matrix(Xtr, Xtr, base["kernel"], gamma)
            for i in members:
                m = fit_svr_gram(K, Xtr, ytr, base["kernel"], float(points[i]["C"]), gamma)
                scores[i] = mae(m.predict(Xva), yva)
            continue
        counts = [int(points[i][staged]) for i in members]
        model = fit_model(kind, Xtr, ytr, {**base, staged: max(counts)}, seed_of(key))
        preds = model.staged_predict(Xva, counts)
        for i, c in zip(members, counts):
            scores[i] = mae(preds[c], yva)
    return scores


@dataclass
class SearchResult:
    best: dict
    scores: list
    input_checksum: str
    inner_checksums: list


def nested_grid_search(
    train: DesignMatrix,
    kind: str,
    grid: HyperGrid | None = None,
    n_folds: int = N_INNER_FOLDS,
    seed: int = 0,
    fold_index: int = 0,
) -> SearchResult:
    """Pick hyperparameters by ``n_folds``-fold CV over the training rows.

    Rows are shuffled with a stream seeded by ``(seed, fold_index)`` and cut
    into contiguous folds, ignoring subject membership. Each inner split
    refits its own min-max scaler. The lowest mean validation MAE wins; ties
    go to the earliest point in grid order.
    """
    grid = grid or HyperGrid()
    if kind not in MODEL_KINDS:
        raise UsageError(f"unknown model kind {kind!r}")
    points = grid.points(kind)
    checksum = train.checksum()
    if kind in ("mlp", "baseline"):
        best = dataclasses.asdict(grid.mlp_spec()) if kind == "mlp" else {}
        return SearchResult(best, [], checksum, [])
    n = len(train)
    if n < n_folds:
        raise TooFewRows(f"inner cross-validation needs at least {n_folds} rows, got {n}")
    rng = np.random.default_rng(stream_seed(seed, fold_index))
    parts = np.array_split(rng.permutation(n), n_folds)
    total = np.zeros(len(points))
    inner = []
    for v in range(n_folds):
        tr = np.sort(np.concatenate([parts[u] for u in range(n_folds) if u != v]))
        va = np.sort(parts[v])
        scaler = fit_minmax(train.X[tr])
        Xtr = apply_minmax(scaler, train.X[tr])
        Xva = apply_minmax(scaler, train.X[va])
        inner.append(_digest(train.X[tr], scaler))
        group_ids: dict[tuple, int] = {}

        def seed_of(key, v=v):
            return stream_seed(seed, fold_index, v, group_ids.setdefault(key, len(group_ids)))

        total += _score_split(kind, grid, points, Xtr, train.y[tr], Xva, train.y[va], seed_of)
    mean = total / n_folds
    best = points[int(np.argmin(mean))]
    return SearchResult(dict(best), [float(s) for s in mean], checksum, inner)


def _digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        if isinstance(a, Scaler):
            h.update(np.ascontiguousarray(a.min_).tobytes())
            h.update(np.ascontiguousarray(a.max_).tobytes())
        else:
            h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# leave-one-subject-out


@dataclass
class FoldAudit:
    """What one outer fold consumed, for leakage checks."""

    test_subject: str
    train_subjects: list
    train_checksum: str
    scaler_checksum: str
    search_checksum: str
    fit_checksum: str

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class EvalResult:
    model: str
    feature_set: str
    task: Task
    per_subject_mae: dict
    pooled_mae: float
    chosen_params: dict
    predictions: list  # (subject, date, y_true, y_pred)
    skipped: dict = field(default_factory=dict)
    folds: list = field(default_factory=list)

    @property
    def mean_subject_mae(self) -> float:
        return float(np.mean(list(self.per_subject_mae.values())))

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "feature_set": self.feature_set,
            "task": self.task.label,
            "pooled_mae": self.pooled_mae,
            "mean_subject_mae": self.mean_subject_mae,
            "per_subject_mae": self.per_subject_mae,
            "chosen_params": self.chosen_params,
            "skipped_subjects": self.skipped,
            "folds": [f.to_dict() for f in self.folds],
            "predictions": [
                {"subject": s, "date": d, "y_true": yt, "y_pred": yp} for s, d, yt, yp in self.predictions
            ],
        }


_WORKER_STATE: dict[str, Any] = {}


def _init_worker(design, grid, seed):
    _WORKER_STATE.update(design=design, grid=grid, seed=seed)


def _run_fold(kind: str, fold_index: int, subject: str):
    dm: DesignMatrix = _WORKER_STATE["design"]
    grid: HyperGrid = _WORKER_STATE["grid"]
    seed: int = _WORKER_STATE["seed"]
    train = dm.for_subjects([subject], exclude=True)
    test = dm.for_subjects([subject])
    if kind == "baseline":
        gm = float(np.mean(train.y))
        pred = baseline_predictions(test.subjects, test.y, gm)
        audit = FoldAudit(subject, sorted(train.subject_ids), train.checksum(), "", "", _digest(train.y))
        return subject, {"global_train_mean": gm}, pred, test, audit
    scaler = fit_minmax(train)
    Xtr = apply_minmax(scaler, train.X)
    Xte = apply_minmax(scaler, test.X)
    search = nested_grid_search(train, kind, grid, seed=seed, fold_index=fold_index)
    params = search.best
    group = 0
    if kind in ("gbt", "rf"):
        keys = list(dict.fromkeys(_group_key(kind, p) for p in grid.points(kind)))
        group = keys.index(_group_key(kind, params))
    model = fit_model(kind, Xtr, train.y, params, stream_seed(seed, fold_index, N_INNER_FOLDS, group),
                      grid.mlp_spec())
    pred = model.predict(Xte)
    audit = FoldAudit(subject, sorted(train.subject_ids), train.checksum(), _digest(scaler),
                      search.input_checksum, _digest(Xtr, train.y))
    chosen = dict(model.params) if kind == "mlp" else params
    return subject, chosen, pred, test, audit


def n_workers(n_tasks: int) -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        cap = os.cpu_count() or 1
    else:
        try:
            cap = int(raw)
        except ValueError:
            raise InvalidConfig(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
        if cap < 1:
            raise InvalidConfig(f"{THREADS_ENV} must be at least 1")
    return max(1, min(cap, n_tasks))


def _map_folds(kind, design, grid, seed, subjects):
    jobs = list(enumerate(subjects))
    workers = n_workers(len(jobs))
    if workers == 1:
        _init_worker(design, grid, seed)
        try:
            return [_run_fold(kind, i, s) for i, s in jobs]
        finally:
            _WORKER_STATE.clear()
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(design, grid, seed)) as ex:
        futures = [ex.submit(_run_fold, kind, i, s) for i, s in jobs]
        # merged in fold order, whatever order the workers finish in
        return [f.result() for f in futures]


def loso_evaluate(
    cohort: Cohort,
    fs: FeatureSet,
    task: Task,
    model_kind: str,
    grid: HyperGrid | None = None,
    rule: FilterRule = FilterRule(),
    seed: int = 0,
    design: DesignMatrix | None = None,
) -> EvalResult:
    """Hold out each subject in turn, tune on the rest, predict the held-out one.

    Subjects without a retained row are skipped and listed in ``skipped``.
    Pass a prebuilt ``design`` to evaluate several models on identical rows.
    """
    if model_kind not in MODEL_KINDS:
        raise UsageError(f"unknown model kind {model_kind!r}; expected one of {MODEL_KINDS}")
    fs = FeatureSet.parse(fs)
    grid = grid or HyperGrid()
    if design is None:
        try:
            design = build_design(cohort, fs, task, rule)
        except NoRows:
            raise InsufficientSubjects("no subject has a retained label") from None
    present = set(design.subject_ids)
    subjects = [s for s in cohort.subject_ids if s in present]
    skipped = {s: "no retained labels" for s in cohort.subject_ids if s not in present}
    for s in skipped:
        log.warning("subject %s has no retained labels for %s/%s; skipped", s, fs.value, task.label)
    if len(subjects) < 2:
        raise InsufficientSubjects(f"LOSO needs at least 2 subjects with retained labels, got {len(subjects)}")

    per_subject, chosen, preds, folds = {}, {}, [], []
    for subject, params, pred, test, audit in _map_folds(model_kind, design, grid, seed, subjects):
        per_subject[subject] = mae(pred, test.y)
        chosen[subject] = params
        folds.append(audit)
        for d, yt, yp in zip(test.dates.astype(str), test.y, pred):
            preds.append((subject, str(d), float(yt), float(yp)))
    pooled = mae([p[3] for p in preds], [p[2] for p in preds])
    return EvalResult(model_kind, fs.value, task, per_subject, pooled, chosen, preds, skipped, folds)


def evaluate_models(
    cohort: Cohort,
    fs: FeatureSet,
    task: Task,
    kinds: Sequence[str] = MODEL_KINDS,
    grid: HyperGrid | None = None,
    rule: FilterRule = FilterRule(),
    seed: int = 0,
) -> dict[str, EvalResult]:
    """Several models on one shared design matrix, hence identical folds."""
    fs = FeatureSet.parse(fs)
    try:
        design = build_design(cohort, fs, task, rule)
    except NoRows:
        raise InsufficientSubjects("no subject has a retained label") from None
    return {k: loso_evaluate(cohort, fs, task, k, grid, rule, seed, design) for k in kinds}


# ---------------------------------------------------------------------------
# lag sweep


@dataclass
class SweepRow:
    k: int
    pooled_mae: float
    per_subject_mae: dict

    @property
    def mae_stddev_over_subjects(self) -> float:
        vals = list(self.per_subject_mae.values())
        return float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0


@dataclass
class SweepResult:
    model: str
    feature_set: str
    rows: list
    results: dict  # k -> EvalResult
    ttests: dict  # k -> TTestResult against the smallest k

    @property
    def best_k(self) -> int:
        return min(self.rows, key=lambda r: (r.pooled_mae, r.k)).k

    def figure_rows(self) -> list[tuple[int, float, float]]:
        return [(r.k, r.pooled_mae, r.mae_stddev_over_subjects) for r in self.rows]


def lag_sweep(
    cohort: Cohort,
    fs: FeatureSet,
    model_kind: str,
    k_range: Sequence[int] = range(1, MAX_LAG + 1),
    grid: HyperGrid | None = None,
    rule: FilterRule = FilterRule(),
    seed: int = 0,
) -> SweepResult:
    """Forecast evaluation for every lag count in ``k_range``.

    The first k is compared against each other k with a paired t-test over
    the per-subject MAEs of subjects evaluable at both.
    """
    ks = [int(k) for k in k_range]
    if not ks or any(not 1 <= k <= MAX_LAG for k in ks) or len(set(ks)) != len(ks):
        raise UsageError(f"lag range must hold distinct values in 1..{MAX_LAG}, got {ks}")
    fs = FeatureSet.parse(fs)
    rows, results = [], {}
    for k in ks:
        res = loso_evaluate(cohort, fs, Task("forecast", k), model_kind, grid, rule, seed)
        results[k] = res
        rows.append(SweepRow(k, res.pooled_mae, res.per_subject_mae))
    ref = ks[0]
    ttests: dict[int, TTestResult] = {}
    for k in ks[1:]:
        common = [s for s in results[ref].per_subject_mae if s in results[k].per_subject_mae]
        a = [results[ref].per_subject_mae[s] for s in common]
        b = [results[k].per_subject_mae[s] for s in common]
        ttests[k] = paired_ttest(a, b)
    return SweepResult(model_kind, fs.value, rows, results, ttests)
