"""scikit-learn wrapper: fit builds the extension operator on (X, y, sample_weight),
predict evaluates Tf.  Weights play the role of the atom weights; inf forces interpolation."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .config import default_config
from .measures import normalize


class ExtensionRegressor(RegressorMixin, BaseEstimator):
    """Smooth fit minimizing ||F||_{L^{m,p}}^p + sum w_i |F(x_i) - y_i|^p up to a constant factor,
    and linear in y.

    Parameters mirror the run configuration.  ``weight`` is used for every sample when no
    sample_weight is passed.
    """

    def __init__(self, m=1, p=2.0, eps=0.1, weight=1.0, oracle=None):
        self.m = m
        self.p = p
        self.eps = eps
        self.weight = weight
        self.oracle = oracle

    def fit(self, X, y, sample_weight=None):
        X = check_array(X, ensure_2d=True, dtype=float)
        y = np.asarray(y, float).reshape(-1)
        if y.shape[0] != X.shape[0]:
            raise ValueError("X and y have different numbers of samples")
        if not np.all(np.isfinite(y)):
            raise ValueError("y must be finite")
        if sample_weight is None:
            w = np.full(X.shape[0], float(self.weight))
        else:
            w = np.asarray(sample_weight, float).reshape(-1)
            if w.shape[0] != X.shape[0]:
                raise ValueError("sample_weight has the wrong length")
        n = X.shape[1]
        kw = {"eps": self.eps}
        if self.oracle is not None:
            kw["oracle"] = self.oracle
        self.config_ = default_config(m=self.m, n=n, p=float(self.p), **kw)
        self.measure_ = normalize(X, w, y, self.m, float(self.p))
        from .extension import top_extend

        self.operator_ = top_extend(self.measure_, self.config_)
        self.coef_values_ = np.asarray(self.measure_.values, float)
        self.n_features_in_ = n
        return self

    def predict(self, X):
        check_is_fitted(self, "operator_")
        X = check_array(X, ensure_2d=True, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return self.operator_(self.coef_values_, self.measure_.frame.forward(X))

    def operator_matrix(self, X):
        """Matrix L with predict(X) = L @ y_fit (rows over X, columns over merged samples)."""
        check_is_fitted(self, "operator_")
        X = check_array(X, ensure_2d=True, dtype=float)
        ev = self.operator_.node.eval(self.measure_.frame.forward(X), 0, True)
        if "f" not in ev.terms:
            return np.zeros((X.shape[0], len(self.measure_)))
        return ev.terms["f"][0]
