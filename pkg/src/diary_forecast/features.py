"""Design matrices for same-day prediction and k-lag forecasting."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .dataset import Cohort, FeatureSet, SubjectSeries, feature_view
from .errors import EmptySeries, InvalidLag, NoRows, UsageError
from .preprocess import FilterRule, interpolate_columns, label_mask

MAX_LAG = 7


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Feature rows, labels and per-row provenance.

    ``source_dates[i]`` lists the calendar days whose features make up row
    ``i`` (the label day for same-day rows, ``d-1 .. d-k`` for lagged rows).
    """

    X: np.ndarray
    y: np.ndarray
    subjects: np.ndarray
    dates: np.ndarray
    source_dates: np.ndarray
    columns: tuple[str, ...] = ()

    def __post_init__(self):
        n = len(self.y)
        if not (self.X.shape[0] == len(self.subjects) == len(self.dates) == len(self.source_dates) == n):
            raise UsageError("design matrix rows, labels and provenance differ in length")
        if not np.isfinite(self.X).all():
            raise UsageError("design matrix contains non-finite entries")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def take(self, index) -> "DesignMatrix":
        return DesignMatrix(
            self.X[index], self.y[index], self.subjects[index], self.dates[index],
            self.source_dates[index], self.columns,
        )

    def for_subjects(self, subject_ids, exclude: bool = False) -> "DesignMatrix":
        mask = np.isin(self.subjects, list(subject_ids))
        return self.take(~mask if exclude else mask)

    @property
    def subject_ids(self) -> list[str]:
        return list(dict.fromkeys(self.subjects.tolist()))

    def checksum(self) -> str:
        """SHA-256 over provenance, labels and feature values."""
        h = hashlib.sha256()
        for arr in (self.subjects.astype(str), self.dates.astype(str)):
            h.update("\x1f".join(arr.tolist()).encode())
        h.update(np.ascontiguousarray(self.y, dtype=np.float64).tobytes())
        h.update(np.ascontiguousarray(self.X, dtype=np.float64).tobytes())
        return h.hexdigest()


def _retained(series: SubjectSeries, rule: FilterRule, require_full_window: bool) -> np.ndarray:
    mask = label_mask(series, rule)
    if require_full_window and len(series):
        days = series.days
        mask &= days - rule.window_days >= days[0]
    return mask


def _lagged_values(series: SubjectSeries, label_days: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Features at ``d-1 .. d-k`` imputed from observations strictly before ``d``.

    Returns ``(values, ok)`` with ``values`` of shape ``(n, k, F)``; rows with
    no earlier observation of some column get ``ok=False``.
    """
    days = series.days
    n, F = len(label_days), series.features.shape[1]
    out = np.empty((n, k, F))
    ok = np.ones(n, dtype=bool)
    query = (label_days[:, None] - np.arange(1, k + 1)[None, :]).astype(np.float64)
    cutoff = label_days[:, None]
    for j in range(F):
        obs = ~np.isnan(series.features[:, j])
        od = days[obs]
        ov = series.features[obs, j]
        n_before = np.searchsorted(od, label_days, side="left")
        ok &= n_before > 0
        if len(od) == 0:
            out[:, :, j] = 0.0
            continue
        idx = np.searchsorted(od, query, side="right")
        left = np.clip(idx - 1, 0, len(od) - 1)
        right = np.clip(idx, 0, len(od) - 1)
        has_left = idx > 0
        has_right = (idx < len(od)) & (od[right] < cutoff)
        x0, x1 = od[left].astype(np.float64), od[right].astype(np.float64)
        f0, f1 = ov[left], ov[right]
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = (f1 - f0) / (x1 - x0)
            interp = slope * (query - x0) + f0
        vals = np.where(has_left & has_right, interp, f0)
        vals = np.where(has_left, vals, ov[0])
        vals = np.where(has_left | (od[0] < cutoff), vals, np.nan)
        out[:, :, j] = vals
    return out, ok


def _stack(parts: list[DesignMatrix], columns: tuple[str, ...]) -> DesignMatrix:
    return DesignMatrix(
        np.vstack([p.X for p in parts]),
        np.concatenate([p.y for p in parts]),
        np.concatenate([p.subjects for p in parts]),
        np.concatenate([p.dates for p in parts]),
        np.vstack([p.source_dates for p in parts]),
        columns,
    )


def build_sameday(
    cohort: Cohort,
    fs: FeatureSet,
    rule: FilterRule = FilterRule(),
    require_full_window: bool = True,
) -> DesignMatrix:
    """One row per retained label date, holding that day's imputed features.

    With ``require_full_window`` a label also needs the whole look-back window
    to fall inside the subject's recorded period.
    """
    view = feature_view(cohort, fs)
    parts = []
    for s in view.subjects:
        mask = _retained(s, rule, require_full_window)
        if not mask.any():
            continue
        days = s.days[mask]
        try:
            X = interpolate_columns(s.days, s.features, days)
        except EmptySeries:
            continue
        parts.append(
            DesignMatrix(
                X, s.phq2[mask].copy(), np.full(len(days), s.subject_id, dtype=object),
                s.dates[mask].copy(), s.dates[mask].reshape(-1, 1).copy(),
            )
        )
    if not parts:
        raise NoRows(f"no label passes the filter for feature set {FeatureSet.parse(fs).value}")
    return _stack(parts, view.columns)


def build_lagged(
    cohort: Cohort,
    fs: FeatureSet,
    k: int,
    rule: FilterRule = FilterRule(),
    require_full_window: bool = True,
) -> DesignMatrix:
    """Rows of concatenated features from ``d-1, d-2, ..., d-k`` (newest first).

    Missing lag days are interpolated from observations strictly before the
    label day, so nothing recorded on or after ``d`` reaches its row.
    """
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= MAX_LAG:
        raise InvalidLag(f"lag count must be an integer in 1..{MAX_LAG}, got {k!r}")
    k = int(k)
    view = feature_view(cohort, fs)
    columns = tuple(f"{c}@t-{lag}" for lag in range(1, k + 1) for c in view.columns)
    parts = []
    for s in view.subjects:
        mask = _retained(s, rule, require_full_window)
        if not mask.any():
            continue
        label_days = s.days[mask]
        vals, ok = _lagged_values(s, label_days, k)
        if not ok.any():
            continue
        vals = vals[ok]
        n = len(vals)
        src = (label_days[ok][:, None] - np.arange(1, k + 1)[None, :]).astype("datetime64[D]")
        parts.append(
            DesignMatrix(
                vals.reshape(n, -1), s.phq2[mask][ok].copy(),
                np.full(n, s.subject_id, dtype=object), s.dates[mask][ok].copy(), src,
            )
        )
    if not parts:
        raise NoRows(f"no label passes the filter for feature set {FeatureSet.parse(fs).value}")
    return _stack(parts, columns)
