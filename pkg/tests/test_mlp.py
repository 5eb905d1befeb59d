import numpy as np
import pytest

from diary_forecast.errors import DegenerateData
from diary_forecast.models import MlpSpec, fit_mlp
from diary_forecast.models.mlp import dropout_multipliers, loss_and_gradient, n_params, unpack


def linear_data(n=64, p=4, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.random((n, p))
    return X, X @ np.arange(1.0, p + 1) + 1.0


def central_differences(theta, X, y, p, h, step=1e-6):
    g = np.empty_like(theta)
    for i in range(len(theta)):
        up, dn = theta.copy(), theta.copy()
        up[i] += step
        dn[i] -= step
        g[i] = (loss_and_gradient(up, X, y, p, h)[0] - loss_and_gradient(dn, X, y, p, h)[0]) / (2 * step)
    return g


def relative_error(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    p, h = 4, 4
    X, y = rng.normal(size=(12, p)), rng.normal(size=12) * 3
    theta = rng.normal(size=n_params(p, h))
    # pre-activations and residuals well away from the kinks
    _, b1, _, _ = unpack(theta, p, h)
    b1 += 0.5 * np.sign(b1)
    analytic = loss_and_gradient(theta, X, y, p, h)[1]
    assert relative_error(analytic, central_differences(theta, X, y, p, h)) < 1e-4


def test_architecture_and_init_bounds():
    X, y = linear_data(p=6)
    m = fit_mlp(X, y, MlpSpec(learning_rate=0.0), seed=1)
    W1, b1, W2, _ = m.weights()
    assert W1.shape == (6, 6) and W2.shape == (6,) and b1.shape == (6,)
    assert np.abs(W1).max() <= np.sqrt(6 / 12) and np.abs(W2).max() <= np.sqrt(6 / 7)
    assert m.params["hidden_width"] == 6


def test_zero_learning_rate_keeps_init():
    X, y = linear_data()
    m = fit_mlp(X, y, MlpSpec(learning_rate=0.0), seed=3)
    assert np.array_equal(m.theta, m.initial_theta)


def test_training_error_decreases_seed_42():
    X, y = linear_data()
    spec = MlpSpec()
    before = fit_mlp(X, y, MlpSpec(learning_rate=0.0), seed=42)
    after = fit_mlp(X, y, spec, seed=42)
    assert np.array_equal(before.initial_theta, after.initial_theta)
    assert np.abs(after.predict(X) - y).mean() < np.abs(before.predict(X) - y).mean()


def test_deterministic():
    X, y = linear_data()
    a = fit_mlp(X, y, seed=7).predict(X)
    b = fit_mlp(X, y, seed=7).predict(X)
    c = fit_mlp(X, y, seed=8).predict(X)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_partial_last_batch_and_tiny_input():
    X, y = linear_data(n=5)
    m = fit_mlp(X, y, MlpSpec(batch_size=16), seed=0)
    assert np.isfinite(m.predict(X)).all()


def test_zero_rows():
    with pytest.raises(DegenerateData):
        fit_mlp(np.empty((0, 3)), np.empty(0))


def test_constant_target():
    X, _ = linear_data()
    m = fit_mlp(X, np.full(len(X), 5.0), seed=0)
    assert np.all(m.predict(X * 3) == 5.0)


def test_inverted_dropout_preserves_expectation():
    rng = np.random.default_rng(0)
    act = rng.random(8) + 0.5
    masks = dropout_multipliers(np.random.default_rng(1), (10_000, 8), 0.2)
    assert set(np.unique(masks)) == {0.0, 1.25}
    np.testing.assert_allclose((masks * act).mean(axis=0), act, rtol=0.01)


def test_dropout_off_at_inference():
    X, y = linear_data()
    m = fit_mlp(X, y, seed=0)
    assert np.array_equal(m.predict(X), m.predict(X))
