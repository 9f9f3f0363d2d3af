"""scikit-learn style wrappers around the base- and meta-learners.

The array-level functions in :mod:`metagap.learn` remain the workhorses; these
classes add the familiar ``fit``/``predict`` surface, parameter introspection
and input validation for use outside the simulation harness.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._validation import ValidationError
from .env import Dataset
from .learn import ConvexCombination, DatasetMean, Ridge, RidgeBiasClosedForm, fit_base, fit_meta_batch


class BiasedRidgeRegression(RegressorMixin, BaseEstimator):
    """Ridge regression pulled towards ``bias`` instead of zero.

    Minimises ``mean((Xw - y)^2) + lam/2 * ||w - bias||^2``; no intercept.

    Parameters
    ----------
    lam : float
        Regularisation strength, > 0.
    bias : array-like of shape (n_features,) or None
        Centre of the penalty; ``None`` means zero.
    """

    def __init__(self, lam: float = 2.0, bias=None):
        self.lam = lam
        self.bias = bias

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        bias = np.zeros(X.shape[1]) if self.bias is None else np.asarray(self.bias, dtype=float).ravel()
        if bias.shape != (X.shape[1],):
            raise ValidationError(f"bias has {bias.size} entries, X has {X.shape[1]} features")
        self.coef_ = fit_base(Ridge(self.lam), Dataset(x=X, y=y), bias)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValidationError(f"X has {X.shape[1]} features, model was fitted with {self.n_features_in_}")
        return X @ self.coef_


class ShrunkMeanEstimator(RegressorMixin, BaseEstimator):
    """Location estimate ``alpha * mean(y) + (1 - alpha) * bias``.

    Follows the ``DummyRegressor`` convention: ``X`` only fixes the number of
    samples, ``predict`` returns the constant estimate.
    """

    def __init__(self, alpha: float = 0.5, bias: float = 0.0):
        self.alpha = alpha
        self.bias = bias

    def fit(self, X, y=None):
        if y is None:
            X, y = None, X
        y = check_array(np.asarray(y, dtype=float).reshape(-1, 1), ensure_min_samples=1).ravel()
        self.location_ = float(fit_base(ConvexCombination(self.alpha), Dataset(z=y), float(self.bias))[0])
        return self

    def predict(self, X):
        check_is_fitted(self, "location_")
        n = len(X) if not np.isscalar(X) else int(X)
        return np.full(n, self.location_)


def _stack(blocks, name):
    shapes = {np.shape(b) for b in blocks}
    if len(blocks) == 0:
        raise ValidationError(f"{name}: need at least one task")
    if len(shapes) != 1:
        raise ValidationError(f"{name}: all tasks must have the same shape, got {sorted(shapes)}")
    return np.stack([np.asarray(b, dtype=float) for b in blocks])


class MetaBiasedRidge(BaseEstimator):
    """Learns the ridge bias shared by several regression tasks.

    ``fit(Xs, ys)`` takes one ``(m, d)`` design and one ``(m,)`` target per task
    and stores the bias minimising the average training loss of the fitted
    :class:`BiasedRidgeRegression` models in ``bias_``.
    """

    def __init__(self, lam: float = 2.0):
        self.lam = lam

    def fit(self, Xs, ys):
        pairs = [check_X_y(X, y, y_numeric=True) for X, y in zip(Xs, ys, strict=True)]
        x = _stack([p[0] for p in pairs], "Xs")
        y = _stack([p[1] for p in pairs], "ys")
        self.bias_ = fit_meta_batch(RidgeBiasClosedForm(), Ridge(self.lam), Dataset(x=x, y=y))
        self.n_tasks_ = len(pairs)
        self.n_features_in_ = x.shape[-1]
        return self

    def adapt(self, X, y) -> BiasedRidgeRegression:
        """Ridge model for a new task, regularised towards the learned bias."""
        check_is_fitted(self, "bias_")
        return BiasedRidgeRegression(self.lam, self.bias_).fit(X, y)


class MetaShrunkMean(BaseEstimator):
    """Learns the shrinkage target of :class:`ShrunkMeanEstimator` from several tasks."""

    def __init__(self, alpha: float = 0.5):
        self.alpha = alpha

    def fit(self, samples):
        z = _stack([np.asarray(s, dtype=float).ravel() for s in samples], "samples")
        ConvexCombination(self.alpha)  # validates alpha
        self.bias_ = float(fit_meta_batch(DatasetMean(), ConvexCombination(self.alpha), Dataset(z=z))[0])
        self.n_tasks_ = len(z)
        return self

    def adapt(self, y) -> ShrunkMeanEstimator:
        check_is_fitted(self, "bias_")
        return ShrunkMeanEstimator(self.alpha, self.bias_).fit(y)
