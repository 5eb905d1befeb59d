from __future__ import annotations

import numpy as np


def baseline_rolling_mean(labels, global_train_mean: float) -> np.ndarray:
    """Expanding mean of a subject's strictly earlier labels.

    ``labels`` must be date-sorted. The first label has no history and is
    predicted with ``global_train_mean``.
    """
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    out = np.empty_like(y)
    if len(y) == 0:
        return out
    out[0] = global_train_mean
    if len(y) > 1:
        # centred on the first label so a constant history is reproduced exactly
        csum = np.cumsum(y[:-1] - y[0])
        out[1:] = y[0] + csum / np.arange(1, len(y))
    return out


def baseline_predictions(subjects: np.ndarray, y: np.ndarray, global_train_mean: float) -> np.ndarray:
    """Apply the rolling mean per subject to rows grouped by subject in date order."""
    out = np.empty(len(y))
    subjects = np.asarray(subjects)
    for sid in dict.fromkeys(subjects.tolist()):
        idx = np.flatnonzero(subjects == sid)
        out[idx] = baseline_rolling_mean(y[idx], global_train_mean)
    return out
