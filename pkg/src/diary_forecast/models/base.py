from __future__ import annotations

import numpy as np

from ..errors import DegenerateData, DimensionMismatch


class Regressor:
    """Fitted model with a uniform ``predict`` contract.

    Subclasses set ``kind``, ``params`` and ``n_features`` at fit time and
    implement ``_predict`` on an already-validated float64 matrix.
    """

    kind = "base"

    def __init__(self, n_features: int, params: dict):
        self.n_features = int(n_features)
        self.params = dict(params)

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatch(
                f"{self.kind} model was fitted on {self.n_features} columns, got shape {X.shape}"
            )
        return np.ascontiguousarray(X)

    def predict(self, X) -> np.ndarray:
        return self._predict(self._check(X))

    def _predict(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"<{type(self).__name__} {args}>"


def check_training_data(X, y, min_rows: int = 1) -> tuple[np.ndarray, np.ndarray]:
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y = np.ascontiguousarray(np.asarray(y, dtype=np.float64).reshape(-1))
    if X.ndim != 2 or X.shape[0] != len(y):
        raise DimensionMismatch(f"X has shape {X.shape} but y has {len(y)} entries")
    if len(y) < min_rows:
        raise DegenerateData(f"need at least {min_rows} training rows, got {len(y)}")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise DegenerateData("training data contains non-finite values")
    return X, y


def shifted_mean(a: np.ndarray, axis: int = 0) -> np.ndarray | float:
    """Mean computed around the first element, exact for constant input."""
    a = np.asarray(a, dtype=np.float64)
    ref = np.take(a, [0], axis=axis)
    return np.squeeze(ref + np.mean(a - ref, axis=axis, keepdims=True), axis=axis)[()]


def predict(model: Regressor, X) -> np.ndarray:
    return model.predict(X)
