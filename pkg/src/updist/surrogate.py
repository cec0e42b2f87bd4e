"""Surrogate model families behind one fit/predict contract.

Families
--------
kriging
    Universal kriging with a constant trend and an anisotropic Matern 5/2
    covariance.  Lengthscales are chosen by maximizing the log marginal
    likelihood (amplitude and trend coefficients profiled out in closed
    form) with multistart Nelder-Mead, deterministic under the spec seed.
polynomial
    Least-squares fit on the monomial basis of total degree <= ``degree``.
rbf
    Exact radial-basis interpolation (scipy's solver) on scaled inputs.
ensemble
    Convex combination of member fits, weighted by inverse leave-one-out
    mean squared error.  Stands in for proprietary aggregation methods and
    is deliberately non-interpolating.

:func:`fit_loo_submodels` builds the n leave-one-out sub-models used by the
prediction-uncertainty layer.  Sub-models reuse the master's hyperparameters
by default (refit of linear algebra only), so one sequential-design iteration
costs n Cholesky factorizations rather than n likelihood searches.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import product
from typing import Sequence

import numpy as np
from scipy.interpolate import RBFInterpolator
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

from .core import Bounds, Dataset
from .doe import lhs_unit

FAMILIES = ("kriging", "polynomial", "rbf", "ensemble")

# scipy RBF kernels that need a shape parameter
_RBF_SCALE_KERNELS = {"gaussian", "multiquadric", "inverse_multiquadric", "inverse_quadratic"}
_RBF_KERNELS = _RBF_SCALE_KERNELS | {"thin_plate_spline", "cubic", "linear", "quintic"}


class SingularSystemError(RuntimeError):
    """Raised when a linear system underlying a fit cannot be factorized."""


@dataclass(frozen=True)
class SurrogateSpec:
    """Model family plus its parameters; hashable and echoable into run configs.

    Only the fields relevant to ``family`` are read.  ``mle_budget`` counts
    multistart points for the kriging likelihood search; ``mle_budget_refit``
    is the reduced budget used when a warm start from a previous fit is
    available.  ``loo_refit`` switches leave-one-out sub-models from
    hyperparameter reuse to full per-sub-model re-estimation.
    """

    family: str = "kriging"
    seed: int = 0
    # kriging
    nugget_rel: float = 1e-8
    mle_budget: int = 8
    mle_budget_refit: int = 2
    mle_maxiter: int = 120
    lengthscale_bounds: tuple[float, float] = (1e-2, 1e2)
    loo_refit: bool = False
    # polynomial
    degree: int = 2
    # rbf
    kernel: str = "thin_plate_spline"
    shape: float = 1.0
    # ensemble
    members: tuple["SurrogateSpec", ...] | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "kriging":
            if self.nugget_rel < 0 or self.mle_budget < 1 or self.mle_maxiter < 1:
                raise ValueError("invalid kriging parameters")
            lo, hi = self.lengthscale_bounds
            if not (0 < lo < hi):
                raise ValueError("lengthscale bounds must satisfy 0 < lo < hi")
        elif self.family == "polynomial":
            if self.degree < 0:
                raise ValueError("polynomial degree must be nonnegative")
        elif self.family == "rbf":
            if self.kernel not in _RBF_KERNELS:
                raise ValueError(f"unknown rbf kernel {self.kernel!r}")
            if self.shape <= 0:
                raise ValueError("rbf shape parameter must be positive")
        elif self.family == "ensemble":
            members = self.members if self.members is not None else default_ensemble_members(self.seed)
            members = tuple(members)
            if not members:
                raise ValueError("ensemble needs at least one member")
            if any(m.family == "ensemble" for m in members):
                raise ValueError("nested ensembles are not supported")
            object.__setattr__(self, "members", members)

    def as_dict(self) -> dict:
        d = {"family": self.family, "seed": self.seed}
        if self.family == "kriging":
            d.update(
                nugget_rel=self.nugget_rel,
                mle_budget=self.mle_budget,
                mle_budget_refit=self.mle_budget_refit,
                mle_maxiter=self.mle_maxiter,
                lengthscale_bounds=list(self.lengthscale_bounds),
                loo_refit=self.loo_refit,
            )
        elif self.family == "polynomial":
            d["degree"] = self.degree
        elif self.family == "rbf":
            d.update(kernel=self.kernel, shape=self.shape)
        elif self.family == "ensemble":
            d["members"] = [m.as_dict() for m in self.members]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SurrogateSpec":
        d = dict(d)
        if "members" in d and d["members"] is not None:
            d["members"] = tuple(cls.from_dict(m) for m in d["members"])
        if "lengthscale_bounds" in d:
            d["lengthscale_bounds"] = tuple(d["lengthscale_bounds"])
        return cls(**d)


def default_ensemble_members(seed: int = 0) -> tuple[SurrogateSpec, ...]:
    """Kriging + quadratic + thin-plate RBF: a deliberately mixed committee."""
    return (
        SurrogateSpec(family="kriging", seed=seed, mle_budget=4),
        SurrogateSpec(family="polynomial", degree=2),
        SurrogateSpec(family="rbf", kernel="thin_plate_spline"),
    )


@dataclass(frozen=True)
class Prediction:
    """Pointwise surrogate output; ``model_variance`` is 0 for families without one."""

    mean: float
    model_variance: float = 0.0
    extrapolated: bool = False


# ---------------------------------------------------------------------------
# Matern 5/2 covariance
# ---------------------------------------------------------------------------


def matern52(A: np.ndarray, B: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    """Anisotropic Matern 5/2 correlation matrix between two point stacks."""
    sq = cdist(A / lengthscales, B / lengthscales, "sqeuclidean")
    t = np.sqrt(5.0 * sq)
    return (1.0 + t + (5.0 / 3.0) * sq) * np.exp(-t)


def _kriging_factors(Xs: np.ndarray, y: np.ndarray, lengthscales: np.ndarray, nugget: float):
    """Factorize the constant-trend kriging system for fixed lengthscales.

    Returns the pieces needed for prediction plus the concentrated log
    likelihood (trend coefficient and amplitude at their closed-form optima).
    """
    n = Xs.shape[0]
    R = matern52(Xs, Xs, lengthscales)
    R[np.diag_indices_from(R)] += nugget
    try:
        cho = cho_factor(R, lower=True)
    except LinAlgError as exc:
        raise SingularSystemError(
            f"kriging correlation matrix is singular (n={n}, cond~{np.linalg.cond(R):.2e})"
        ) from exc
    H = np.ones((n, 1))
    Rinv_H = cho_solve(cho, H)
    A = H.T @ Rinv_H  # 1x1, > 0
    Rinv_y = cho_solve(cho, y)
    beta = float((H.T @ Rinv_y) / A)
    resid = y - beta
    alpha = cho_solve(cho, resid)
    sigma2 = float(resid @ alpha) / n
    logdet = 2.0 * float(np.log(np.diag(cho[0])).sum())
    ll = -0.5 * (n * np.log(max(sigma2, 1e-300)) + logdet + n * (1.0 + np.log(2.0 * np.pi)))
    return cho, Rinv_H, float(A[0, 0]), beta, alpha, max(sigma2, 0.0), ll


@dataclass(eq=False)
class KrigingModel:
    """Fitted universal kriging model (constant trend, Matern 5/2)."""

    spec: SurrogateSpec
    bounds: Bounds
    Xs: np.ndarray  # training points, scaled to [-1, 1]^p
    y: np.ndarray
    lengthscales: np.ndarray
    nugget: float
    beta: float
    sigma2: float
    alpha: np.ndarray  # (R + nugget I)^{-1} (y - beta)
    log_likelihood: float
    dataset: Dataset | None = None
    mle_info: dict = field(default_factory=dict)
    _cho: tuple = field(default=None, repr=False)
    _Rinv_H: np.ndarray = field(default=None, repr=False)
    _A: float = field(default=1.0, repr=False)

    interpolates = True

    @property
    def n(self) -> int:
        return self.Xs.shape[0]

    def _cross(self, X: np.ndarray) -> np.ndarray:
        q = np.atleast_2d(np.asarray(X, dtype=float))
        return matern52(self.bounds.scale(q), self.Xs, self.lengthscales)

    def predict_mean(self, X: np.ndarray):
        single = np.asarray(X).ndim == 1
        out = self.beta + self._cross(X) @ self.alpha
        return float(out[0]) if single else out

    def mean_from_cross(self, R_cross: np.ndarray) -> np.ndarray:
        """Mean from a precomputed correlation block (pool-evaluation fast path)."""
        return self.beta + R_cross @ self.alpha

    def predict_var(self, X: np.ndarray):
        """Prediction variance including the trend-estimation term, clamped at 0."""
        single = np.asarray(X).ndim == 1
        r = self._cross(X)  # (m, n)
        w = cho_solve(self._cho, r.T)  # (n, m)
        reduction = np.einsum("mn,nm->m", r, w)
        u = 1.0 - r @ self._Rinv_H[:, 0]  # h(x) - H^T R^{-1} r(x), constant trend
        var = self.sigma2 * (1.0 - reduction + u**2 / self._A)
        var = np.maximum(var, 0.0)
        return float(var[0]) if single else var

    def predict(self, x: np.ndarray) -> Prediction:
        x = np.asarray(x, dtype=float)
        return Prediction(
            mean=self.predict_mean(x),
            model_variance=self.predict_var(x),
            extrapolated=not self.bounds.contains(x),
        )

    def refit_frozen(self, X: np.ndarray, y: np.ndarray) -> "KrigingModel":
        """Refit trend, amplitude, and factors on new data, keeping lengthscales."""
        Xs = self.bounds.scale(np.atleast_2d(np.asarray(X, dtype=float)))
        y = np.asarray(y, dtype=float)
        cho, Rinv_H, A, beta, alpha, sigma2, ll = _kriging_factors(
            Xs, y, self.lengthscales, self.nugget
        )
        return KrigingModel(
            spec=self.spec,
            bounds=self.bounds,
            Xs=Xs,
            y=y,
            lengthscales=self.lengthscales,
            nugget=self.nugget,
            beta=beta,
            sigma2=sigma2,
            alpha=alpha,
            log_likelihood=ll,
            _cho=cho,
            _Rinv_H=Rinv_H,
            _A=A,
        )


def _fit_kriging(
    spec: SurrogateSpec,
    X: np.ndarray,
    y: np.ndarray,
    bounds: Bounds,
    dataset: Dataset | None = None,
    warm_start: np.ndarray | None = None,
) -> KrigingModel:
    Xs = bounds.scale(np.atleast_2d(np.asarray(X, dtype=float)))
    y = np.asarray(y, dtype=float)
    n, p = Xs.shape
    if n < 2:
        raise ValueError("kriging needs at least two points")
    nugget = spec.nugget_rel

    lo, hi = spec.lengthscale_bounds
    log_lo, log_hi = np.log10(lo), np.log10(hi)

    def neg_ll(log_ls: np.ndarray) -> float:
        ls = 10.0 ** np.clip(log_ls, log_lo, log_hi)
        try:
            *_, ll = _kriging_factors(Xs, y, ls, nugget)
        except SingularSystemError:
            return 1e12
        return -ll

    budget = spec.mle_budget if warm_start is None else spec.mle_budget_refit
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, n, 7]))
    unit = lhs_unit(budget, p, rng) if budget >= 2 else rng.random((budget, p))
    starts = [log_lo + row * (log_hi - log_lo) for row in unit]
    # a moderate default lengthscale is a reliable basin for scaled inputs
    starts.insert(0, np.zeros(p))
    if warm_start is not None:
        starts.insert(0, np.log10(np.asarray(warm_start, dtype=float)))

    start_lls = []
    best = None
    for s in starts:
        res = minimize(
            neg_ll,
            s,
            method="Nelder-Mead",
            bounds=[(log_lo, log_hi)] * p,
            options={"maxiter": spec.mle_maxiter, "xatol": 1e-3, "fatol": 1e-6},
        )
        start_lls.append(-neg_ll(s))
        if best is None or res.fun < best.fun:
            best = res
    log_ls = np.clip(best.x, log_lo, log_hi)
    ls = 10.0**log_ls

    cho, Rinv_H, A, beta, alpha, sigma2, ll = _kriging_factors(Xs, y, ls, nugget)
    return KrigingModel(
        spec=spec,
        bounds=bounds,
        Xs=Xs,
        y=y,
        lengthscales=ls,
        nugget=nugget,
        beta=beta,
        sigma2=sigma2,
        alpha=alpha,
        log_likelihood=ll,
        dataset=dataset,
        mle_info={"start_log_likelihoods": start_lls, "final_log_likelihood": ll},
        _cho=cho,
        _Rinv_H=Rinv_H,
        _A=A,
    )


# ---------------------------------------------------------------------------
# Polynomial regression
# ---------------------------------------------------------------------------


def _monomial_exponents(dim: int, degree: int) -> np.ndarray:
    exps = [e for e in product(range(degree + 1), repeat=dim) if sum(e) <= degree]
    exps.sort(key=lambda e: (sum(e), e))
    return np.asarray(exps, dtype=int)


@dataclass(eq=False)
class PolynomialModel:
    """Least-squares polynomial response surface on scaled inputs."""

    spec: SurrogateSpec
    bounds: Bounds
    exponents: np.ndarray
    coef: np.ndarray
    dataset: Dataset | None = None

    interpolates = False

    def _basis(self, X: np.ndarray) -> np.ndarray:
        Xs = self.bounds.scale(np.atleast_2d(np.asarray(X, dtype=float)))
        # (m, n_basis): product over dims of coordinates raised to each exponent row
        return np.prod(Xs[:, None, :] ** self.exponents[None, :, :], axis=2)

    def predict_mean(self, X: np.ndarray):
        single = np.asarray(X).ndim == 1
        out = self._basis(X) @ self.coef
        return float(out[0]) if single else out

    def predict(self, x: np.ndarray) -> Prediction:
        x = np.asarray(x, dtype=float)
        return Prediction(self.predict_mean(x), 0.0, not self.bounds.contains(x))

    def refit_frozen(self, X: np.ndarray, y: np.ndarray) -> "PolynomialModel":
        return _fit_polynomial(self.spec, X, y, self.bounds)


def _fit_polynomial(
    spec: SurrogateSpec, X: np.ndarray, y: np.ndarray, bounds: Bounds, dataset: Dataset | None = None
) -> PolynomialModel:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    exponents = _monomial_exponents(X.shape[1], spec.degree)
    if X.shape[0] < exponents.shape[0]:
        raise ValueError(
            f"degree-{spec.degree} polynomial in {X.shape[1]}-D needs at least "
            f"{exponents.shape[0]} points, got {X.shape[0]}"
        )
    model = PolynomialModel(spec, bounds, exponents, np.zeros(exponents.shape[0]), dataset)
    basis = model._basis(X)
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    model.coef = coef
    return model


# ---------------------------------------------------------------------------
# Radial basis interpolation
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class RbfModel:
    """Exact RBF interpolant on scaled inputs (scipy solver underneath)."""

    spec: SurrogateSpec
    bounds: Bounds
    _interp: RBFInterpolator
    dataset: Dataset | None = None

    interpolates = True

    def predict_mean(self, X: np.ndarray):
        single = np.asarray(X).ndim == 1
        Xs = self.bounds.scale(np.atleast_2d(np.asarray(X, dtype=float)))
        out = self._interp(Xs)
        return float(out[0]) if single else out

    def predict(self, x: np.ndarray) -> Prediction:
        x = np.asarray(x, dtype=float)
        return Prediction(self.predict_mean(x), 0.0, not self.bounds.contains(x))

    def refit_frozen(self, X: np.ndarray, y: np.ndarray) -> "RbfModel":
        return _fit_rbf(self.spec, X, y, self.bounds)


def _fit_rbf(
    spec: SurrogateSpec, X: np.ndarray, y: np.ndarray, bounds: Bounds, dataset: Dataset | None = None
) -> RbfModel:
    Xs = bounds.scale(np.atleast_2d(np.asarray(X, dtype=float)))
    kwargs = {"kernel": spec.kernel}
    if spec.kernel in _RBF_SCALE_KERNELS:
        kwargs["epsilon"] = spec.shape
    try:
        interp = RBFInterpolator(Xs, np.asarray(y, dtype=float), **kwargs)
    except LinAlgError as exc:
        raise SingularSystemError(f"rbf interpolation system is singular: {exc}") from exc
    return RbfModel(spec, bounds, interp, dataset)


# ---------------------------------------------------------------------------
# Cross-validation-weighted ensemble
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class EnsembleModel:
    """Convex combination of member surrogates, weighted by inverse LOO error."""

    spec: SurrogateSpec
    bounds: Bounds
    members: list
    weights: np.ndarray
    member_loo_mse: np.ndarray | None = None
    dataset: Dataset | None = None

    interpolates = False

    def predict_mean(self, X: np.ndarray):
        single = np.asarray(X).ndim == 1
        out = sum(w * np.atleast_1d(m.predict_mean(np.atleast_2d(np.asarray(X, dtype=float))))
                  for w, m in zip(self.weights, self.members))
        return float(out[0]) if single else out

    def predict(self, x: np.ndarray) -> Prediction:
        x = np.asarray(x, dtype=float)
        return Prediction(self.predict_mean(x), 0.0, not self.bounds.contains(x))

    def refit_frozen(self, X: np.ndarray, y: np.ndarray) -> "EnsembleModel":
        """Refit members on new data, keeping member hyperparameters and weights."""
        return EnsembleModel(
            spec=self.spec,
            bounds=self.bounds,
            members=[m.refit_frozen(X, y) for m in self.members],
            weights=self.weights,
        )


def _member_loo_mse(member_master, X: np.ndarray, y: np.ndarray) -> float:
    n = X.shape[0]
    errs = np.empty(n)
    for i in range(n):
        mask = np.arange(n) != i
        sub = member_master.refit_frozen(X[mask], y[mask])
        errs[i] = sub.predict_mean(X[i]) - y[i]
    return float(np.mean(errs**2))


def _fit_ensemble(
    spec: SurrogateSpec, X: np.ndarray, y: np.ndarray, bounds: Bounds, dataset: Dataset | None = None
) -> EnsembleModel:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    members = [_fit_any(m, X, y, bounds) for m in spec.members]
    mse = np.array([_member_loo_mse(m, X, y) for m in members])
    raw = 1.0 / (mse + 1e-12)
    weights = raw / raw.sum()
    return EnsembleModel(spec, bounds, members, weights, member_loo_mse=mse, dataset=dataset)


# ---------------------------------------------------------------------------
# Dispatch and leave-one-out machinery
# ---------------------------------------------------------------------------


def _fit_any(spec, X, y, bounds, dataset=None, warm_start=None):
    if spec.family == "kriging":
        return _fit_kriging(spec, X, y, bounds, dataset, warm_start)
    if spec.family == "polynomial":
        return _fit_polynomial(spec, X, y, bounds, dataset)
    if spec.family == "rbf":
        return _fit_rbf(spec, X, y, bounds, dataset)
    if spec.family == "ensemble":
        return _fit_ensemble(spec, X, y, bounds, dataset)
    raise ValueError(f"unknown family {spec.family!r}")


def fit(spec: SurrogateSpec, data: Dataset, warm_start: np.ndarray | None = None):
    """Fit the master surrogate on the full dataset.

    ``warm_start`` (kriging only) supplies previous lengthscales as an extra
    multistart point, with the reduced ``mle_budget_refit`` search budget.
    """
    return _fit_any(spec, data.X, data.y, data.bounds, dataset=data, warm_start=warm_start)


@dataclass(eq=False)
class CvEnsemble:
    """The master surrogate plus its n leave-one-out sub-models."""

    master: object
    sub_models: list
    dataset: Dataset

    @property
    def n(self) -> int:
        return self.dataset.n

    def _kriging_fast_path(self) -> bool:
        return (
            isinstance(self.master, KrigingModel)
            and all(isinstance(m, KrigingModel) for m in self.sub_models)
            and all(np.array_equal(m.lengthscales, self.master.lengthscales) for m in self.sub_models)
        )

    def sub_means(self, X: np.ndarray) -> np.ndarray:
        """Matrix of sub-model predictions at query points, shape (m, n).

        When sub-models share the master's kriging lengthscales, one cross
        correlation block against the full design serves every sub-model, so
        the cost per pool is a single matrix product.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self._kriging_fast_path():
            alpha_matrix, betas = self._stacked_weights()
            R_cross = matern52(
                self.master.bounds.scale(X), self.master.Xs, self.master.lengthscales
            )
            return R_cross @ alpha_matrix.T + betas
        return np.column_stack([np.atleast_1d(m.predict_mean(X)) for m in self.sub_models])

    def _stacked_weights(self) -> tuple[np.ndarray, np.ndarray]:
        cached = getattr(self, "_stacked", None)
        if cached is None:
            n = self.n
            alpha_matrix = np.zeros((n, n))
            betas = np.empty(n)
            idx = np.arange(n)
            for i, sub in enumerate(self.sub_models):
                alpha_matrix[i, idx != i] = sub.alpha
                betas[i] = sub.beta
            cached = (alpha_matrix, betas)
            self._stacked = cached
        return cached

    def loo_errors(self) -> np.ndarray:
        """Classical leave-one-out errors: sub-model i at its held-out point minus y_i."""
        preds = np.array(
            [m.predict_mean(self.dataset.X[i]) for i, m in enumerate(self.sub_models)]
        )
        return preds - self.dataset.y


def fit_loo_submodels(spec: SurrogateSpec, data: Dataset, master=None, warm_start=None) -> CvEnsemble:
    """Fit the master model and its n leave-one-out sub-models.

    Kriging sub-models reuse the master's lengthscales (Cholesky and trend
    refit only) unless ``spec.loo_refit`` asks for a full re-estimation.
    A sub-fit failure aborts with the offending index.
    """
    if data.n < 3:
        raise ValueError("leave-one-out sub-models need at least three observations")
    if master is None:
        master = fit(spec, data, warm_start=warm_start)
    subs = []
    for i in range(data.n):
        X_i, y_i = data.drop(i)
        try:
            if spec.family == "kriging" and spec.loo_refit:
                sub = _fit_kriging(spec, X_i, y_i, data.bounds, warm_start=master.lengthscales)
            else:
                sub = master.refit_frozen(X_i, y_i)
        except Exception as exc:
            raise RuntimeError(f"leave-one-out sub-fit failed at held-out index {i}: {exc}") from exc
        subs.append(sub)
    return CvEnsemble(master=master, sub_models=subs, dataset=data)
