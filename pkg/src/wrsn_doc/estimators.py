"""scikit-learn style wrappers around score fusion and thresholding.

Rows of ``X`` are observations, columns the four sub-scores
``[m_C, m_E, m_R, m_eta]``; ``y`` marks malicious rows with 1.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .config import Weights
from .detection import calibrate_threshold, combined_score

__all__ = ["ScoreFusion", "DocDetector"]


def _weights(w) -> Weights:
    return w if isinstance(w, Weights) else Weights(*w)


def _check_scores(X):
    X = check_array(X, dtype=float)
    if X.shape[1] != 4:
        raise ValueError(f"expected 4 sub-score columns, got {X.shape[1]}")
    return X


class ScoreFusion(BaseEstimator, TransformerMixin):
    """Stateless transformer: sub-scores -> one combined score column."""

    def __init__(self, weights=(0.25, 0.25, 0.25, 0.25)):
        self.weights = weights

    def fit(self, X, y=None):
        X = _check_scores(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = _check_scores(X)
        return np.asarray(combined_score(X, _weights(self.weights)), dtype=float).reshape(-1, 1)


class DocDetector(BaseEstimator, ClassifierMixin):
    """Threshold classifier on the combined maliciousness score.

    With ``target_fpr`` set, ``fit`` picks the smallest threshold whose
    false-positive rate on the labelled rows stays within the target;
    otherwise ``theta`` is used as given.
    """

    def __init__(self, weights=(0.25, 0.25, 0.25, 0.25), theta=0.4, target_fpr=None):
        self.weights = weights
        self.theta = theta
        self.target_fpr = target_fpr

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        X = _check_scores(X)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        if self.target_fpr is None:
            self.theta_ = float(self.theta)
            self.calibration_ = None
        else:
            self.calibration_ = calibrate_threshold(self.decision_function(X), y, self.target_fpr)
            self.theta_ = self.calibration_.theta
        return self

    def decision_function(self, X):
        X = _check_scores(X)
        return np.asarray(combined_score(X, _weights(self.weights)), dtype=float).reshape(-1)

    def predict(self, X):
        check_is_fitted(self, "theta_")
        return (self.decision_function(X) > self.theta_).astype(int)
