"""One-hidden-layer perceptron trained with Adam on the absolute-error loss.

Parameters are kept in one flat vector ``theta = [W1, b1, W2, b2]`` with
``W1`` of shape (p, h), ``b1`` (h,), ``W2`` (h,) and scalar ``b2``, so the
optimizer state and the finite-difference check both work on a single array.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from numba import njit

from ..errors import DegenerateData, UsageError
from .base import Regressor, check_training_data


@dataclass(frozen=True)
class MlpSpec:
    hidden_width: int | None = None  # None: same as the input width
    dropout: float = 0.2
    learning_rate: float = 0.0005
    epochs: int = 50
    batch_size: int = 16
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def validate(self) -> "MlpSpec":
        if self.hidden_width is not None and self.hidden_width < 1:
            raise UsageError("hidden_width must be positive")
        if not 0 <= self.dropout < 1:
            raise UsageError("dropout must lie in [0, 1)")
        if self.learning_rate < 0 or self.epochs < 0 or self.batch_size < 1:
            raise UsageError("learning_rate, epochs and batch_size must be non-negative (batch >= 1)")
        return self


def n_params(p: int, h: int) -> int:
    return p * h + h + h + 1


def unpack(theta: np.ndarray, p: int, h: int):
    """Views ``(W1, b1, W2, b2)`` into a flat parameter vector."""
    W1 = theta[: p * h].reshape(p, h)
    b1 = theta[p * h: p * h + h]
    W2 = theta[p * h + h: p * h + 2 * h]
    return W1, b1, W2, theta[-1]


@njit(cache=True)
def _loss_grad(X, y, theta, keep, p, h, grad):
    """Mean absolute error of a batch and its gradient, written into ``grad``.

    ``keep`` holds the per-row, per-hidden-unit dropout multipliers (already
    divided by the keep probability); pass ones to disable dropout.
    """
    B = X.shape[0]
    W1 = theta[: p * h].reshape((p, h))
    b1 = theta[p * h: p * h + h]
    W2 = theta[p * h + h: p * h + 2 * h]
    b2 = theta[p * h + 2 * h]
    gW1 = grad[: p * h].reshape((p, h))
    gb1 = grad[p * h: p * h + h]
    gW2 = grad[p * h + h: p * h + 2 * h]
    grad[:] = 0.0

    z = np.empty(h)
    act = np.empty(h)
    dz = np.empty(h)
    loss = 0.0
    for b in range(B):
        for j in range(h):
            z[j] = b1[j]
        for i in range(p):
            xi = X[b, i]
            for j in range(h):
                z[j] += xi * W1[i, j]
        out = b2
        for j in range(h):
            a = z[j] if z[j] > 0 else 0.0
            act[j] = a * keep[b, j]
            out += act[j] * W2[j]
        r = out - y[b]
        loss += abs(r)
        # subgradient of |r| is taken as 0 at r == 0
        g = 0.0
        if r > 0:
            g = 1.0 / B
        elif r < 0:
            g = -1.0 / B
        if g == 0.0:
            continue
        grad[p * h + 2 * h] += g
        for j in range(h):
            gW2[j] += g * act[j]
            dz[j] = g * W2[j] * keep[b, j] if z[j] > 0 else 0.0
            gb1[j] += dz[j]
        for i in range(p):
            xi = X[b, i]
            for j in range(h):
                gW1[i, j] += xi * dz[j]
    return loss / B


@njit(cache=True)
def _train_epoch(X, y, order, keep, theta, m1, m2, step, p, h, batch, lr, beta1, beta2, eps):
    n = X.shape[0]
    grad = np.empty_like(theta)
    Xb = np.empty((batch, p))
    yb = np.empty(batch)
    kb = np.empty((batch, h))
    for s in range(0, n, batch):
        B = min(batch, n - s)
        for b in range(B):
            r = order[s + b]
            Xb[b] = X[r]
            yb[b] = y[r]
            kb[b] = keep[s + b]
        _loss_grad(Xb[:B], yb[:B], theta, kb[:B], p, h, grad)
        step += 1
        c1 = 1.0 - beta1 ** step
        c2 = 1.0 - beta2 ** step
        for t in range(theta.shape[0]):
            m1[t] = beta1 * m1[t] + (1.0 - beta1) * grad[t]
            m2[t] = beta2 * m2[t] + (1.0 - beta2) * grad[t] * grad[t]
            theta[t] -= lr * (m1[t] / c1) / (np.sqrt(m2[t] / c2) + eps)
    return step


def loss_and_gradient(theta, X, y, p: int, h: int, keep=None) -> tuple[float, np.ndarray]:
    """Batch loss and analytic gradient at ``theta`` (dropout off unless ``keep`` given)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    if keep is None:
        keep = np.ones((X.shape[0], h))
    grad = np.empty_like(theta)
    loss = _loss_grad(X, y, theta, np.ascontiguousarray(keep, dtype=np.float64), p, h, grad)
    return float(loss), grad


def dropout_multipliers(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    """Inverted dropout: zero with probability ``rate``, else ``1 / (1 - rate)``."""
    if rate == 0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def init_params(rng: np.random.Generator, p: int, h: int) -> np.ndarray:
    theta = np.zeros(n_params(p, h))
    W1, _, W2, _ = unpack(theta, p, h)
    lim1 = np.sqrt(6.0 / (p + h))
    lim2 = np.sqrt(6.0 / (h + 1))
    W1[:] = rng.uniform(-lim1, lim1, size=(p, h))
    W2[:] = rng.uniform(-lim2, lim2, size=h)
    return theta


class MLP(Regressor):
    kind = "mlp"

    def __init__(self, n_features, params, theta, hidden_width, initial_theta):
        super().__init__(n_features, params)
        self.theta = theta
        self.hidden_width = hidden_width
        self.initial_theta = initial_theta

    def weights(self, initial: bool = False):
        return unpack(self.initial_theta if initial else self.theta, self.n_features, self.hidden_width)

    def _predict(self, X):
        W1, b1, W2, b2 = self.weights()
        return np.maximum(X @ W1 + b1, 0.0) @ W2 + b2


def fit_mlp(X, y, spec: MlpSpec | None = None, seed: int = 0) -> MLP:
    """Train the perceptron for ``spec.epochs`` passes of shuffled mini-batches.

    Hidden weights start uniform in +-sqrt(6 / (fan_in + fan_out)), hidden
    biases at zero and the output bias at the label median. With a constant
    target the output weights start at zero, which makes every gradient
    vanish and the fit return that constant.
    """
    spec = (spec or MlpSpec()).validate()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DegenerateData("cannot train a perceptron on zero rows")
    X, y = check_training_data(X, y, min_rows=1)
    n, p = X.shape
    h = spec.hidden_width or p
    rng = np.random.default_rng(int(seed) % 2**64)
    theta = init_params(rng, p, h)
    _, _, W2, _ = unpack(theta, p, h)
    theta[-1] = np.median(y)
    if np.all(y == y[0]):
        W2[:] = 0.0
        theta[-1] = y[0]
    initial = theta.copy()

    m1 = np.zeros_like(theta)
    m2 = np.zeros_like(theta)
    step = 0
    for _ in range(spec.epochs):
        order = rng.permutation(n)
        keep = dropout_multipliers(rng, (n, h), spec.dropout)
        step = _train_epoch(X, y, order, keep, theta, m1, m2, step, p, h, spec.batch_size,
                            spec.learning_rate, spec.beta1, spec.beta2, spec.adam_eps)
    params = {k: v for k, v in asdict(spec).items()}
    params["hidden_width"] = h
    return MLP(p, params, theta, h, initial)
