"""Acquisition criteria for refinement, optimization, and inversion.

Every criterion is nonnegative and vanishes at design points for
interpolating surrogates, which is what keeps the sequential engines from
clustering.  The cross-validation-based criteria consume the prediction
distribution (sub-model predictions + smoothed weights); the two baselines
(``gaussian_ei``, ``kriging_variance``) consume the kriging master directly.

Percent-of-range parameters (exploration delta, inversion windows) are
resolved into absolute values once per engine iteration against the observed
output range, so their defaults stay dimensionless.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import ndtr

from .distribution import UpParams, smooth_weights_from_sq
from .surrogate import CvEnsemble

KINDS = (
    "up_smart",
    "up_ei",
    "gaussian_ei",
    "kriging_variance",
    "tmse",
    "tmse_reg",
    "bichon",
    "ranjan",
)
INVERSION_KINDS = ("tmse", "tmse_reg", "bichon", "ranjan")
# criteria evaluated from the master model alone: no leave-one-out ensemble needed
MASTER_ONLY_KINDS = ("gaussian_ei", "kriging_variance")

_DELTA_PCT_DEFAULT = {"up_smart": 1.0, "up_ei": 0.005}
_ALPHA_DEFAULT = {"bichon": 2.0, "ranjan": 1.96}


@dataclass(frozen=True)
class CriterionSpec:
    """Which criterion to maximize, with its tuning knobs.

    ``delta_pct``, ``epsilon_pct``, ``sigma_eps_pct`` are percentages of the
    observed output range (e.g. 0.005 means 0.005%).  ``use_variance_eps``
    reproduces the literal variance-proportional band of the printed
    Bichon/Ranjan formulas instead of the standard-deviation convention.
    """

    kind: str
    delta_pct: float | None = None
    threshold: float | None = None
    epsilon_pct: float = 5.0
    sigma_eps_pct: float | None = None
    alpha: float | None = None
    use_variance_eps: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown criterion {self.kind!r}; expected one of {KINDS}")
        if self.kind in INVERSION_KINDS and self.threshold is None:
            raise ValueError(f"criterion {self.kind!r} requires a threshold")
        if self.delta_pct is not None and self.delta_pct < 0:
            raise ValueError("delta_pct must be nonnegative")
        if self.epsilon_pct <= 0:
            raise ValueError("epsilon_pct must be positive")
        if self.alpha is not None and self.alpha <= 0:
            raise ValueError("alpha must be positive")

    def resolve(self, output_range: float, y_best: float) -> "ResolvedCriterion":
        """Pin percent-of-range parameters against the current observations."""
        scale = output_range if output_range > 0 else 1.0
        delta_pct = self.delta_pct
        if delta_pct is None:
            delta_pct = _DELTA_PCT_DEFAULT.get(self.kind, 0.0)
        sigma_pct = self.sigma_eps_pct if self.sigma_eps_pct is not None else self.epsilon_pct
        alpha = self.alpha if self.alpha is not None else _ALPHA_DEFAULT.get(self.kind, 2.0)
        return ResolvedCriterion(
            kind=self.kind,
            delta=delta_pct / 100.0 * scale,
            y_best=y_best,
            threshold=self.threshold if self.threshold is not None else 0.0,
            epsilon=self.epsilon_pct / 100.0 * scale,
            sigma_eps=sigma_pct / 100.0 * scale,
            alpha=alpha,
            use_variance_eps=self.use_variance_eps,
        )

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "delta_pct": self.delta_pct,
            "threshold": self.threshold,
            "epsilon_pct": self.epsilon_pct,
            "sigma_eps_pct": self.sigma_eps_pct,
            "alpha": self.alpha,
            "use_variance_eps": self.use_variance_eps,
        }


@dataclass(frozen=True)
class ResolvedCriterion:
    """A criterion with every parameter absolute; fixed for one iteration."""

    kind: str
    delta: float = 0.0
    y_best: float = float("nan")
    threshold: float = 0.0
    epsilon: float = 0.0
    sigma_eps: float = 0.0
    alpha: float = 2.0
    use_variance_eps: bool = False


def needs_cv(kind: str) -> bool:
    return kind not in MASTER_ONLY_KINDS


# ---------------------------------------------------------------------------
# Vectorized cores (P: sub-model predictions (m, n); W: weights (m, n))
# ---------------------------------------------------------------------------


def _up_parts(Xq: np.ndarray, cv: CvEnsemble, rho: float):
    """Predictions, weights, and scaled nearest-design distances for a pool."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    Xs = cv.dataset.X_scaled
    sq = cdist(cv.dataset.bounds.scale(Xq), Xs, "sqeuclidean")
    W, _ = smooth_weights_from_sq(sq, rho)
    P = cv.sub_means(Xq)
    dmin = np.sqrt(sq.min(axis=1))
    return P, W, dmin


def _up_variance_rows(P: np.ndarray, W: np.ndarray) -> np.ndarray:
    mean = np.einsum("mn,mn->m", W, P)
    return np.einsum("mn,mn->m", W, (P - mean[:, None]) ** 2)


def _eps_band(P: np.ndarray, W: np.ndarray, res: ResolvedCriterion) -> np.ndarray:
    var = _up_variance_rows(P, W)
    return res.alpha * (var if res.use_variance_eps else np.sqrt(var))


def gaussian_ei(mean, sd, y_best: float):
    """Closed-form expected improvement of a Gaussian prediction; 0 where sd = 0."""
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    out = np.zeros(np.broadcast(mean, sd).shape)
    pos = sd > 0
    diff = np.broadcast_to(y_best - mean, out.shape)[pos]
    s = np.broadcast_to(sd, out.shape)[pos]
    u = diff / s
    pdf = np.exp(-0.5 * u**2) / np.sqrt(2.0 * np.pi)
    out[pos] = diff * ndtr(u) + s * pdf
    # the closed form is >= 0; cancellation far in the improbable tail can
    # leave tiny negatives behind
    return np.maximum(out, 0.0) if out.ndim else float(max(out, 0.0))


def evaluate_batch(
    res: ResolvedCriterion,
    Xq: np.ndarray,
    *,
    cv: CvEnsemble | None = None,
    master=None,
    rho: float | None = None,
) -> np.ndarray:
    """Criterion values at a pool of query points (original units).

    ``cv`` plus ``rho`` are required for the cross-validation criteria,
    ``master`` for the kriging-only baselines.
    """
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))

    if res.kind == "kriging_variance":
        return np.asarray(master.predict_var(Xq), dtype=float)
    if res.kind == "gaussian_ei":
        mean = np.atleast_1d(master.predict_mean(Xq))
        sd = np.sqrt(np.asarray(master.predict_var(Xq), dtype=float))
        return gaussian_ei(mean, sd, res.y_best)

    if cv is None or rho is None:
        raise ValueError(f"criterion {res.kind!r} needs a CvEnsemble and a resolved rho")
    P, W, dmin = _up_parts(Xq, cv, rho)

    if res.kind == "up_smart":
        return _up_variance_rows(P, W) + res.delta * dmin
    if res.kind == "up_ei":
        eei = np.einsum("mn,mn->m", W, np.maximum(res.y_best - P, 0.0))
        return eei + res.delta * dmin

    T = res.threshold
    if res.kind == "tmse":
        inside = np.abs(P - T) <= res.epsilon
        return np.einsum("mn,mn->m", W, inside.astype(float))
    if res.kind == "tmse_reg":
        dens = np.exp(-0.5 * ((P - T) / res.sigma_eps) ** 2) / (res.sigma_eps * np.sqrt(2 * np.pi))
        return np.einsum("mn,mn->m", W, dens)
    if res.kind == "bichon":
        eps_x = _eps_band(P, W, res)
        gap = np.abs(P - T)
        term = np.where(gap <= eps_x[:, None], eps_x[:, None] - gap, 0.0)
        return np.einsum("mn,mn->m", W, term)
    if res.kind == "ranjan":
        eps_x = _eps_band(P, W, res)
        gap2 = (P - T) ** 2
        term = np.where(gap2 <= eps_x[:, None] ** 2, eps_x[:, None] ** 2 - gap2, 0.0)
        return np.einsum("mn,mn->m", W, term)

    raise ValueError(f"unknown criterion kind {res.kind!r}")


# ---------------------------------------------------------------------------
# Pointwise forms (the documented per-operation contracts)
# ---------------------------------------------------------------------------


def _one(res: ResolvedCriterion, x, cv: CvEnsemble, params: UpParams) -> float:
    rho = params.resolve(cv.dataset.X_scaled)
    return float(evaluate_batch(res, np.asarray(x, dtype=float)[None, :], cv=cv, rho=rho)[0])


def up_smart_criterion(x, cv: CvEnsemble, params: UpParams, delta: float) -> float:
    """Refinement score: prediction-distribution variance + delta * distance to design."""
    return _one(ResolvedCriterion(kind="up_smart", delta=delta), x, cv, params)


def empirical_ei(x, cv: CvEnsemble, params: UpParams, y_best: float) -> float:
    """Expected improvement under the prediction distribution (no distance term)."""
    return _one(ResolvedCriterion(kind="up_ei", delta=0.0, y_best=y_best), x, cv, params)


def up_ei(x, cv: CvEnsemble, params: UpParams, delta: float, y_best: float) -> float:
    """Penalized empirical expected improvement: the optimization criterion."""
    return _one(ResolvedCriterion(kind="up_ei", delta=delta, y_best=y_best), x, cv, params)


def gaussian_ei_at(master, x, y_best: float) -> float:
    """Expected improvement of a kriging master at one point."""
    res = ResolvedCriterion(kind="gaussian_ei", y_best=y_best)
    return float(evaluate_batch(res, np.asarray(x, dtype=float)[None, :], master=master)[0])


def tmse(x, cv: CvEnsemble, params: UpParams, threshold: float, epsilon: float) -> float:
    """Weighted mass of sub-model predictions inside the window around the threshold."""
    res = ResolvedCriterion(kind="tmse", threshold=threshold, epsilon=epsilon)
    return _one(res, x, cv, params)


def tmse_regularized(x, cv: CvEnsemble, params: UpParams, threshold: float, sigma_eps: float) -> float:
    """Gaussian-window variant of :func:`tmse`; strictly positive everywhere."""
    res = ResolvedCriterion(kind="tmse_reg", threshold=threshold, sigma_eps=sigma_eps)
    return _one(res, x, cv, params)


def bichon(
    x, cv: CvEnsemble, params: UpParams, threshold: float, alpha: float = 2.0,
    use_variance_eps: bool = False,
) -> float:
    """Expected-feasibility criterion with band width alpha * UP spread."""
    res = ResolvedCriterion(
        kind="bichon", threshold=threshold, alpha=alpha, use_variance_eps=use_variance_eps
    )
    return _one(res, x, cv, params)


def ranjan(
    x, cv: CvEnsemble, params: UpParams, threshold: float, alpha: float = 1.96,
    use_variance_eps: bool = False,
) -> float:
    """Quadratic-improvement contour criterion with band width alpha * UP spread."""
    res = ResolvedCriterion(
        kind="ranjan", threshold=threshold, alpha=alpha, use_variance_eps=use_variance_eps
    )
    return _one(res, x, cv, params)
