"""Label filtering, linear-interpolation imputation and min-max scaling."""

from __future__ import annotations

import dataclasses
import datetime as dt
from dataclasses import dataclass

import numpy as np

from .dataset import FeatureSet, SubjectSeries
from .errors import DimensionMismatch, EmptyMatrix, EmptySeries, UsageError


@dataclass(frozen=True)
class FilterRule:
    """Keep a label only if enough of the preceding days carry data."""

    window_days: int = 7
    min_present_days: int = 5

    def __post_init__(self):
        if self.window_days < 1 or self.min_present_days < 0:
            raise UsageError("window_days must be >= 1 and min_present_days >= 0")
        if self.min_present_days > self.window_days:
            raise UsageError("min_present_days cannot exceed window_days")


def label_mask(series: SubjectSeries, rule: FilterRule = FilterRule()) -> np.ndarray:
    """Boolean mask over ``series`` rows marking retained labels.

    A labeled day ``d`` is kept iff at least ``rule.min_present_days`` of the
    days ``d - window_days .. d - 1`` have a complete feature vector.
    """
    days = series.days
    avail_days = np.sort(days[series.available])
    lo = np.searchsorted(avail_days, days - rule.window_days, side="left")
    hi = np.searchsorted(avail_days, days, side="left")
    return series.labeled & (hi - lo >= rule.min_present_days)


def filter_labels(
    series: SubjectSeries, view: FeatureSet | None = None, rule: FilterRule = FilterRule()
) -> set[dt.date]:
    if view is not None:
        series = series.view(view)
    keep = label_mask(series, rule)
    return set(series.dates[keep].astype(object))


def interpolate_columns(
    days: np.ndarray, features: np.ndarray, query_days: np.ndarray
) -> np.ndarray:
    """Per-column linear interpolation over calendar days.

    Values outside the observed range copy the nearest observation. Returns
    a ``(len(query_days), n_columns)`` array.
    """
    query = np.asarray(query_days, dtype=np.float64)
    out = np.empty((len(query), features.shape[1]))
    for j in range(features.shape[1]):
        obs = ~np.isnan(features[:, j])
        if not obs.any():
            raise EmptySeries(f"column {j} has no observed value")
        out[:, j] = np.interp(query, days[obs].astype(np.float64), features[obs, j])
    return out


def impute_linear(series: SubjectSeries, view: FeatureSet | None = None) -> SubjectSeries:
    """Fill every calendar day between the first and last record.

    Gaps between observations are linearly interpolated (a one-day gap gets
    the mean of its neighbours); leading and trailing gaps copy the nearest
    observed value. Observed cells are never changed. Days added to the
    calendar carry no label.
    """
    if view is not None:
        series = series.view(view)
    if len(series) == 0 or not series.available.any():
        raise EmptySeries(f"subject {series.subject_id}: no available day to impute from")
    days = series.days
    grid = np.arange(days[0], days[-1] + 1)
    filled = interpolate_columns(days, series.features, grid)
    pos = grid.searchsorted(days)
    observed = ~np.isnan(series.features)
    filled[pos] = np.where(observed, series.features, filled[pos])
    labels = np.full(len(grid), np.nan)
    labels[pos] = series.phq2
    return SubjectSeries(
        series.subject_id, grid.astype("datetime64[D]"), filled, labels, series.columns
    )


@dataclass(frozen=True)
class Scaler:
    min_: np.ndarray
    max_: np.ndarray

    @property
    def n_columns(self) -> int:
        return len(self.min_)


def _matrix(m) -> np.ndarray:
    return np.asarray(getattr(m, "X", m), dtype=np.float64)


def fit_minmax(train) -> Scaler:
    """Per-column extrema of the training rows (a DesignMatrix or array)."""
    X = _matrix(train)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyMatrix("cannot fit a scaler on an empty matrix")
    return Scaler(X.min(axis=0), X.max(axis=0))


def apply_minmax(s: Scaler, m):
    """Map columns to ``(x - min) / (max - min)``; constant columns become 0.

    Returns the same kind of object it was given (array or DesignMatrix).

    Test rows are not clamped, so values may fall outside [0, 1].
    """
    X = _matrix(m)
    if X.ndim != 2 or X.shape[1] != s.n_columns:
        raise DimensionMismatch(f"expected {s.n_columns} columns, got shape {X.shape}")
    span = s.max_ - s.min_
    const = span == 0
    out = (X - s.min_) / np.where(const, 1.0, span)
    out[:, const] = 0.0
    if hasattr(m, "X"):
        return dataclasses.replace(m, X=out)
    return out
