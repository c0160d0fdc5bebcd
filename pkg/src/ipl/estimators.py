"""Small downstream estimators used only to score feature selections."""

from __future__ import annotations

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata


def _design(X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.hstack([np.ones((X.shape[0], 1)), X])


class LinearRegression:
    """Ordinary least squares with intercept, minimum-norm when singular."""

    def fit(self, X, y):
        Z = _design(X)
        self.coef_ = np.linalg.pinv(Z, rcond=1e-12) @ np.asarray(y, dtype=float)
        return self

    def predict(self, X) -> np.ndarray:
        return _design(X) @ self.coef_


class LogisticRegression:
    """Unpenalised logistic regression fitted by damped Newton steps.

    Steps use the pseudo-inverse of the Hessian, so duplicated columns get
    the minimum-norm update and do not change the fitted scores.  Labels may
    be {-1, 1} or {0, 1}.
    """

    def __init__(self, max_iter: int = 100, tol: float = 1e-10):
        self.max_iter = max_iter
        self.tol = tol

    @staticmethod
    def _nll(Z, t, w):
        z = Z @ w
        return float(np.sum(np.logaddexp(0.0, z) - t * z))

    def fit(self, X, y):
        Z = _design(X)
        y = np.asarray(y, dtype=float)
        t = (y > 0).astype(float)
        w = np.zeros(Z.shape[1])
        nll = self._nll(Z, t, w)
        for _ in range(self.max_iter):
            p = expit(Z @ w)
            grad = Z.T @ (p - t)
            H = (Z * (p * (1 - p))[:, None]).T @ Z
            step = np.linalg.pinv(H, rcond=1e-12, hermitian=True) @ grad
            scale = 1.0
            while scale > 1e-8:
                cand = w - scale * step
                cand_nll = self._nll(Z, t, cand)
                if cand_nll <= nll:
                    break
                scale *= 0.5
            else:
                break
            w = cand
            improvement = nll - cand_nll
            nll = cand_nll
            if improvement <= self.tol * (1.0 + abs(nll)):
                break
        self.coef_ = w
        return self

    def decision_function(self, X) -> np.ndarray:
        return _design(X) @ self.coef_

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision_function(X) >= 0, 1, -1)


def roc_auc(y_true, scores) -> float:
    """Area under the ROC curve via the rank-sum statistic (ties averaged)."""
    y = np.asarray(y_true) > 0
    scores = np.asarray(scores, dtype=float)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores)
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def mse(y_true, y_pred) -> float:
    return float(np.mean((np.asarray(y_true, dtype=float) - np.asarray(y_pred, dtype=float)) ** 2))
