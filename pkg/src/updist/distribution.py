"""The cross-validation prediction distribution: weights, mean, variance.

At a query point x, the n leave-one-out sub-model predictions form an
empirical distribution.  Each prediction is weighted by how far x is from
the point that sub-model did *not* see: sub-model i is least trustworthy
near its own held-out point, so its weight vanishes there,

    w_i(x) = phi(d(x, x_i)) / sum_j phi(d(x, x_j)),   phi(d) = 1 - exp(-d^2 / rho^2).

All distances are Euclidean in [-1, 1]^p scaled coordinates.  The smoothing
length rho defaults to the largest nearest-neighbor distance of the design,
recomputed as points are added; a fixed-rho mode exists for studies of the
asymptotic behavior, which is proved under fixed rho.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .core import dbar, nearest_index
from .surrogate import CvEnsemble

RHO_POLICIES = ("dbar", "fixed")


@dataclass(frozen=True)
class UpParams:
    """Smoothing configuration for the prediction weights.

    ``rho_policy="dbar"`` recomputes rho from the current design at every
    evaluation; ``"fixed"`` uses the given positive value throughout.
    """

    rho: float | None = None
    rho_policy: str = "dbar"

    def __post_init__(self):
        if self.rho_policy not in RHO_POLICIES:
            raise ValueError(f"rho_policy must be one of {RHO_POLICIES}")
        if self.rho_policy == "fixed" and not (self.rho is not None and self.rho > 0):
            raise ValueError("fixed rho_policy requires rho > 0")

    def resolve(self, X_scaled: np.ndarray) -> float:
        return dbar(X_scaled) if self.rho_policy == "dbar" else float(self.rho)

    def as_dict(self) -> dict:
        return {"rho": self.rho, "rho_policy": self.rho_policy}


@dataclass(frozen=True, eq=False)
class UpDistribution:
    """Weighted empirical distribution of sub-model predictions at one point."""

    predictions: np.ndarray
    weights: np.ndarray
    query: np.ndarray
    rho: float
    degenerate: bool = False

    def __post_init__(self):
        p = np.asarray(self.predictions, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if p.shape != w.shape or p.ndim != 1:
            raise ValueError("predictions and weights must be 1-D of equal length")
        if (w < 0).any():
            raise ValueError("negative weight")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "predictions", p)
        object.__setattr__(self, "weights", w)


def smooth_weights_from_sq(sq: np.ndarray, rho: float) -> tuple[np.ndarray, np.ndarray]:
    """Smoothed weights from precomputed squared scaled distances, shape (m, n).

    Returns ``(W, degenerate)`` where ``degenerate`` marks rows whose
    normalizer underflowed to zero (query coincides with every design point
    within floating point); those rows fall back to uniform 1/n.
    """
    # -expm1 keeps w_i exactly 0 at d=0 and accurate for tiny d^2/rho^2
    phi = -np.expm1(-sq / rho**2)
    denom = phi.sum(axis=1)
    degenerate = denom <= 0.0
    n = phi.shape[1]
    W = np.empty_like(phi)
    ok = ~degenerate
    W[ok] = phi[ok] / denom[ok, None]
    W[degenerate] = 1.0 / n
    return W, degenerate


def smooth_weight_matrix(
    Xq_scaled: np.ndarray, X_scaled: np.ndarray, rho: float
) -> tuple[np.ndarray, np.ndarray]:
    """Smoothed weights for a stack of scaled query points, shape (m, n)."""
    sq = cdist(np.atleast_2d(Xq_scaled), np.atleast_2d(X_scaled), "sqeuclidean")
    return smooth_weights_from_sq(sq, rho)


def weights_smooth(x_scaled: np.ndarray, X_scaled: np.ndarray, rho: float) -> np.ndarray:
    """Smoothed weight vector at one scaled query point (uniform fallback if degenerate)."""
    W, _ = smooth_weight_matrix(np.asarray(x_scaled, dtype=float)[None, :], X_scaled, rho)
    return W[0]


def weights_binary(x_scaled: np.ndarray, X_scaled: np.ndarray) -> np.ndarray:
    """Binary weights: 0 for the nearest design point (lowest index on ties), 1/(n-1) else."""
    X_scaled = np.atleast_2d(X_scaled)
    n = X_scaled.shape[0]
    if n < 2:
        raise ValueError("binary weights need at least two design points")
    w = np.full(n, 1.0 / (n - 1))
    w[nearest_index(x_scaled, X_scaled)] = 0.0
    return w


def up_at(x: np.ndarray, cv: CvEnsemble, params: UpParams) -> UpDistribution:
    """The prediction distribution at one query point (original units)."""
    x = np.asarray(x, dtype=float)
    Xs = cv.dataset.X_scaled
    rho = params.resolve(Xs)
    W, degenerate = smooth_weight_matrix(cv.dataset.bounds.scale(x)[None, :], Xs, rho)
    preds = cv.sub_means(x[None, :])[0]
    return UpDistribution(
        predictions=preds, weights=W[0], query=x, rho=rho, degenerate=bool(degenerate[0])
    )


def up_mean(d: UpDistribution) -> float:
    """Expected value of the prediction distribution."""
    return float(d.weights @ d.predictions)


def up_variance(d: UpDistribution) -> float:
    """Variance of the prediction distribution (a sum of nonnegative terms)."""
    m = up_mean(d)
    return float(d.weights @ (d.predictions - m) ** 2)


def up_moments_batch(
    Xq: np.ndarray, cv: CvEnsemble, params: UpParams, rho: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (mean, variance) of the prediction distribution at many points.

    ``Xq`` is in original units.  ``rho`` may be passed to pin the smoothing
    length for the whole batch (the sequential engines resolve it once per
    iteration); otherwise it is resolved from ``params``.
    """
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    Xs = cv.dataset.X_scaled
    if rho is None:
        rho = params.resolve(Xs)
    W, _ = smooth_weight_matrix(cv.dataset.bounds.scale(Xq), Xs, rho)
    P = cv.sub_means(Xq)
    mean = np.einsum("mn,mn->m", W, P)
    var = np.einsum("mn,mn->m", W, (P - mean[:, None]) ** 2)
    return mean, var
