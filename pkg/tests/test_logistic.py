"""Sigmoid numerics and the IRLS fitter."""

import numpy as np
import pytest

from pcgkit.errors import DataError
from pcgkit.logistic import fit_logistic, log_sigmoid, sigmoid


def test_sigmoid_fixed_points():
    assert sigmoid(0.0) == 0.5
    # frozen high-precision value of 1 / (1 + exp(-2))
    assert abs(sigmoid(2.0) - 0.8807970779778824) < 1e-15


def test_sigmoid_symmetry(rng):
    a = rng.standard_normal(500) * 10.0
    assert np.abs(sigmoid(a) + sigmoid(-a) - 1.0).max() < 1e-12


def test_sigmoid_extreme_arguments():
    assert sigmoid(500.0) == 1.0
    assert 0.0 < sigmoid(-500.0) < 1e-200
    assert np.isfinite(log_sigmoid(np.array([-1000.0, 0.0, 1000.0]))).all()
    assert abs(log_sigmoid(np.array([-1000.0]))[0] + 1000.0) < 1e-9


def test_log_sigmoid_matches_direct_evaluation(rng):
    a = rng.standard_normal(200) * 5.0
    assert np.abs(log_sigmoid(a) - np.log(sigmoid(a))).max() < 1e-12


def _gd_logistic(X, y, ridge, lr=0.05, iters=300000):
    """Deliberately slow gradient-descent reference fitter."""
    A = np.column_stack([X, np.ones(X.shape[0])])
    w = np.zeros(A.shape[1])
    for _ in range(iters):
        p = sigmoid(A @ w)
        grad = A.T @ (y - p) - ridge * w
        w = w + lr * grad / A.shape[0]
    return w


def test_irls_matches_gradient_descent_oracle():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((60, 1))
    y = (x[:, 0] + 0.3 * rng.standard_normal(60) > 0).astype(float)
    w_irls, converged = fit_logistic(x, y, ridge=1e-2)
    assert converged
    w_gd = _gd_logistic(x, y, ridge=1e-2)
    assert np.abs(w_irls - w_gd).max() < 1e-4


def test_irls_separable_data_converges_and_separates():
    rng = np.random.default_rng(1)
    x = np.concatenate([rng.normal(-2.0, 0.3, 40), rng.normal(2.0, 0.3, 40)])[:, None]
    y = np.concatenate([np.zeros(40), np.ones(40)])
    w, _ = fit_logistic(x, y, ridge=1e-4)
    pred = sigmoid(np.column_stack([x, np.ones(80)]) @ w) > 0.5
    assert np.array_equal(pred, y.astype(bool))


def test_irls_ridge_shrinks_weights():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((100, 3))
    y = (x @ np.array([2.0, -1.0, 0.5]) > 0).astype(float)
    w_small, _ = fit_logistic(x, y, ridge=1e-4)
    w_big, _ = fit_logistic(x, y, ridge=10.0)
    assert np.linalg.norm(w_big) < np.linalg.norm(w_small)


def test_irls_input_validation():
    with pytest.raises(DataError):
        fit_logistic(np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(DataError):
        fit_logistic(np.zeros((3, 2)), np.zeros(4))
