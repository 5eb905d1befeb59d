"""Gradient-boosted trees and random forests on top of the shared tree kernel."""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

from ..errors import InvalidMaxFeatures, UsageError
from . import _tree
from .base import Regressor, check_training_data

GBT_LEARNING_RATE = 0.3


class Tree(NamedTuple):
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        return _tree.predict_tree(X, *self)

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())


def _seed64(seed) -> np.uint64:
    return np.uint64(int(seed) % 2**64)


def _derive(seed, index: int) -> np.uint64:
    # numba boxes uint64 results as Python ints; re-wrap before passing back in
    return np.uint64(_tree.derive_seed(_seed64(seed), np.uint64(index)))


def n_sampled_columns(colsample: float, p: int) -> int:
    # round first so 0.6 * 5 counts as 3, not 4
    return max(1, min(p, math.ceil(round(colsample * p, 9))))


class GradientBoostedTrees(Regressor):
    kind = "gbt"

    def __init__(self, n_features, params, base_score, trees, columns, learning_rate):
        super().__init__(n_features, params)
        self.base_score = float(base_score)
        self.trees: list[Tree] = trees
        self.tree_columns: list[np.ndarray] = columns
        self.learning_rate = learning_rate

    def staged_predict(self, X, stages: Sequence[int]) -> dict[int, np.ndarray]:
        """Predictions using only the first ``s`` trees, for each ``s`` in ``stages``."""
        X = self._check(X)
        wanted = set(int(s) for s in stages)
        if any(s < 0 or s > len(self.trees) for s in wanted):
            raise UsageError(f"stages must lie in 0..{len(self.trees)}")
        out = np.full(X.shape[0], self.base_score)
        staged = {0: out.copy()} if 0 in wanted else {}
        for t, tree in enumerate(self.trees, start=1):
            out = out + self.learning_rate * tree.predict(X)
            if t in wanted:
                staged[t] = out.copy()
        return staged

    def _predict(self, X):
        return self.staged_predict(X, [len(self.trees)])[len(self.trees)]


def fit_gbt(
    X,
    y,
    colsample: float,
    max_depth: int,
    n_trees: int,
    seed: int = 0,
    learning_rate: float = GBT_LEARNING_RATE,
) -> GradientBoostedTrees:
    """First-order gradient boosting with squared-error loss.

    Starts from the mean label; every round fits a depth-limited tree to the
    current residuals using a fresh random subset of ``ceil(colsample * p)``
    columns and adds it with shrinkage ``learning_rate``.
    """
    X, y = check_training_data(X, y, min_rows=2)
    if not 0 < colsample <= 1:
        raise UsageError(f"colsample must lie in (0, 1], got {colsample}")
    if max_depth < 1 or n_trees < 1:
        raise UsageError("max_depth and n_trees must be positive")
    n, p = X.shape
    m = n_sampled_columns(colsample, p)
    rng = np.random.default_rng(int(seed) % 2**64)
    Xt = np.ascontiguousarray(X.T)
    order = _tree.presort(X)
    w = np.ones(n)

    base = y[0] + np.mean(y - y[0])
    current = np.full(n, base)
    trees, columns = [], []
    for t in range(n_trees):
        cols = np.sort(rng.choice(p, size=m, replace=False)).astype(np.int64)
        residual = y - current
        tree = Tree(*_tree.build_tree(Xt, residual, w, order, cols, m, max_depth,
                                      _derive(seed, t)))
        current = current + learning_rate * tree.predict(X)
        trees.append(tree)
        columns.append(cols)
    params = {"colsample": colsample, "max_depth": max_depth, "n_trees": n_trees}
    return GradientBoostedTrees(p, params, base, trees, columns, learning_rate)


class RandomForest(Regressor):
    kind = "rf"

    def __init__(self, n_features, params, trees, samples=None):
        super().__init__(n_features, params)
        self.trees: list[Tree] = trees
        # per-tree bootstrap counts, kept only on request
        self.samples: list[np.ndarray] | None = samples

    def staged_predict(self, X, stages: Sequence[int]) -> dict[int, np.ndarray]:
        """Forest mean over the first ``s`` trees, for each ``s`` in ``stages``."""
        X = self._check(X)
        wanted = sorted(set(int(s) for s in stages))
        if any(s < 1 or s > len(self.trees) for s in wanted):
            raise UsageError(f"stages must lie in 1..{len(self.trees)}")
        P = np.empty((wanted[-1], X.shape[0]))
        for t in range(wanted[-1]):
            P[t] = self.trees[t].predict(X)
        # centred on the first tree: exact when every tree agrees
        D = P - P[0]
        csum = np.cumsum(D, axis=0)
        return {s: P[0] + csum[s - 1] / s for s in wanted}

    def _predict(self, X):
        return self.staged_predict(X, [len(self.trees)])[len(self.trees)]


def fit_rf(
    X,
    y,
    n_trees: int,
    max_split_features: int,
    seed: int = 0,
    bootstrap: bool = True,
    keep_samples: bool = False,
) -> RandomForest:
    """Bagged, fully grown regression trees.

    Each tree sees a bootstrap sample of size n and scores
    ``max_split_features`` random columns per split (more if all of those
    are constant in the node). Tree ``t`` draws from a stream derived from
    ``(seed, t)``, so the first ``s`` trees of a larger forest equal an
    ``s``-tree forest with the same seed.
    """
    X, y = check_training_data(X, y, min_rows=1)
    n, p = X.shape
    if not 1 <= max_split_features <= p:
        raise InvalidMaxFeatures(f"max_split_features={max_split_features} not in 1..{p}")
    if n_trees < 1:
        raise UsageError("n_trees must be positive")
    Xt = np.ascontiguousarray(X.T)
    order = _tree.presort(X)
    pool = np.arange(p, dtype=np.int64)
    trees, samples = [], []
    for t in range(n_trees):
        tree_seed = _derive(seed, t)
        w = _tree.bootstrap_counts(n, tree_seed) if bootstrap else np.ones(n)
        trees.append(Tree(*_tree.build_tree(Xt, y, w, order, pool, max_split_features, -1,
                                            _derive(tree_seed, 1))))
        if keep_samples:
            samples.append(w)
    params = {"n_trees": n_trees, "max_split_features": max_split_features}
    return RandomForest(p, params, trees, samples if keep_samples else None)
