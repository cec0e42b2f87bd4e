"""Held-out accuracy metrics: Q2, (R)MSE variants, relative errors.

``rmse_paper`` and ``rrmse`` are means of squared (relative) errors without a
square root; that is how the source formulas are printed and how comparison
tables are reproduced.  ``rmse_sqrt`` is the conventional root form, exposed
under its own key.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

METRIC_KEYS = ("q2", "rmse_paper", "rmse_sqrt", "rrmse", "raae")


@dataclass(frozen=True, eq=False)
class TestSet:
    """Held-out points and their true responses."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if X.shape[0] != y.shape[0]:
            raise ValueError("X and y lengths differ")
        if X.shape[0] < 2:
            raise ValueError("a test set needs at least two points")
        if not np.isfinite(y).all():
            raise ValueError("non-finite test values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]


def q2(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """1 - SS_res / SS_tot on the test set; 1 iff perfect, 0 for the mean predictor."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    ss_tot = float(((y_true - y_true.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise ValueError("test set has zero variance; Q2 is undefined")
    ss_res = float(((y_true - y_pred) ** 2).sum())
    return 1.0 - ss_res / ss_tot


def rmse_paper(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Mean of squared errors (no square root, matching the printed formula)."""
    e = np.asarray(y_true, dtype=float) - np.asarray(y_pred, dtype=float)
    return float(np.mean(e**2))


def rmse_sqrt(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Conventional root-mean-square error."""
    return float(np.sqrt(rmse_paper(y_true, y_pred)))


def rrmse(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Mean of squared relative errors; requires no zero test values."""
    y_true = np.asarray(y_true, dtype=float)
    if np.any(y_true == 0.0):
        raise ValueError("rrmse undefined: test set contains zero values")
    e = (y_true - np.asarray(y_pred, dtype=float)) / y_true
    return float(np.mean(e**2))


def raae(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Mean absolute error normalized by the test-value standard deviation (ddof=1)."""
    y_true = np.asarray(y_true, dtype=float)
    sigma = float(np.std(y_true, ddof=1))
    if sigma == 0.0:
        raise ValueError("raae undefined: test values have zero standard deviation")
    return float(np.mean(np.abs(y_true - np.asarray(y_pred, dtype=float))) / sigma)


def evaluate_predictions(y_true: np.ndarray, y_pred: np.ndarray) -> dict[str, float]:
    """All metric keys at once; rrmse is NaN when zero test values make it undefined."""
    out = {
        "q2": q2(y_true, y_pred),
        "rmse_paper": rmse_paper(y_true, y_pred),
        "rmse_sqrt": rmse_sqrt(y_true, y_pred),
        "raae": raae(y_true, y_pred),
    }
    try:
        out["rrmse"] = rrmse(y_true, y_pred)
    except ValueError:
        out["rrmse"] = float("nan")
    return {k: out[k] for k in METRIC_KEYS}


def evaluate_model(model, test: TestSet) -> dict[str, float]:
    """Metrics of a fitted surrogate on a test set (model must have predict_mean)."""
    return evaluate_predictions(test.y, model.predict_mean(test.X))
