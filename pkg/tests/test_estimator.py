import numpy as np
import pytest
from sklearn.base import clone
from sklearn.model_selection import cross_val_score

from sumext.estimator import ExtensionRegressor


def sample(n=12, seed=0):
    rng = np.random.default_rng(seed)
    X = np.sort(rng.uniform(0, 3, n)).reshape(-1, 1)
    return X, np.sin(X[:, 0])


def test_fit_predict_and_score():
    X, y = sample()
    reg = ExtensionRegressor(m=2, weight=100.0).fit(X, y)
    assert reg.score(X, y) > 0.9
    assert reg.predict(X).shape == (12,)


def test_infinite_weights_interpolate():
    X, y = sample()
    reg = ExtensionRegressor(m=2).fit(X, y, sample_weight=np.full(len(y), np.inf))
    assert np.abs(reg.predict(X) - y).max() <= 1e-9


def test_prediction_is_linear_in_targets():
    X, y = sample()
    reg = ExtensionRegressor(m=1).fit(X, y)
    grid = np.linspace(-1, 4, 50).reshape(-1, 1)
    L = reg.operator_matrix(grid)
    assert np.allclose(L @ y, reg.predict(grid), atol=1e-12)


def test_sklearn_protocol():
    X, y = sample(10)
    reg = ExtensionRegressor(m=1, weight=10.0)
    assert clone(reg).get_params()["weight"] == 10.0
    scores = cross_val_score(reg, X, y, cv=3)
    assert scores.shape == (3,)


def test_predict_before_fit():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        ExtensionRegressor().predict([[0.0]])
