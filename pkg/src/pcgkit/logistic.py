"""Logistic regression fitted by iteratively reweighted least squares."""

from __future__ import annotations

import numpy as np

from .errors import DataError


def sigmoid(a):
    """Logistic function 1 / (1 + exp(-a)).

    Stable for |a| up to 500 and beyond: the exponential is only ever taken
    of a non-positive argument, chosen branchlessly per element.
    """
    a = np.asarray(a, dtype=np.float64)
    z = np.exp(-np.abs(a))
    out = np.where(a >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    if out.ndim == 0:
        return float(out)
    return out


def log_sigmoid(a):
    """log(sigmoid(a)) without underflow for large negative a."""
    a = np.asarray(a, dtype=np.float64)
    return np.where(a >= 0, -np.log1p(np.exp(-np.abs(a))),
                    a - np.log1p(np.exp(-np.abs(a))))


def fit_logistic(features, targets, ridge=1e-4, max_iter=50, tol=1e-6):
    """Fit w for P(y=1|x) = sigmoid(w . [x, 1]) by IRLS Newton steps.

    Minimizes the ridge-penalized negative log-likelihood
        -sum(y log p + (1-y) log(1-p)) + ridge/2 * ||w||^2
    (the bias is penalized too). Iteration stops when the largest weight
    update falls below tol or after max_iter Newton steps; the second return
    value reports whether the tolerance was reached.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DataError("features and targets disagree")
    if X.shape[0] == 0:
        raise DataError("cannot fit logistic regression on zero rows")
    A = np.column_stack([X, np.ones(X.shape[0])])
    d = A.shape[1]
    w = np.zeros(d)
    eye = np.eye(d)
    converged = False
    for _ in range(max_iter):
        p = sigmoid(A @ w)
        weights = p * (1.0 - p)
        grad = A.T @ (y - p) - ridge * w
        hess = A.T @ (A * weights[:, None]) + ridge * eye
        delta = np.linalg.solve(hess, grad)
        w = w + delta
        if np.abs(delta).max() < tol:
            converged = True
            break
    return w, converged
