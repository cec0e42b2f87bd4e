"""Sequential design loops and the inner criterion maximizer.

One iteration: resolve the smoothing length and exploration delta against the
current data, maximize the acquisition criterion over the box (seeded
candidate pool + derivative-free polish), evaluate the objective at the
winner, append, refit.  The loop is identical for refinement, optimization,
inversion, and the kriging-only baselines; only the criterion changes.

Runs are deterministic: every random draw derives from the run seed, so a
re-run with the same config reproduces the trace byte for byte.
"""

from __future__ import annotations

import csv
import json
import platform
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .core import DUPLICATE_TOL, Bounds, Dataset, min_dist
from .criteria import (
    INVERSION_KINDS,
    MASTER_ONLY_KINDS,
    CriterionSpec,
    ResolvedCriterion,
    evaluate_batch,
    needs_cv,
)
from .distribution import UpParams
from .doe import DoeConfig, lhs, lhs_unit
from .metrics import METRIC_KEYS, TestSet, evaluate_model
from .surrogate import CvEnsemble, KrigingModel, SurrogateSpec, fit, fit_loo_submodels

TRACE_SCHEMA_VERSION = 1


class ObjectiveEvaluationError(RuntimeError):
    """Objective returned a non-finite value or raised; carries the partial record."""

    def __init__(self, message: str, record: "ExperimentRecord | None" = None):
        super().__init__(message)
        self.record = record


class DesignSpaceExhaustedError(RuntimeError):
    """Every candidate the inner optimizer produced duplicates an existing point."""


@dataclass(frozen=True)
class InnerOptConfig:
    """Budget of the criterion maximizer: pool size scales with dimension."""

    pool_per_dim: int = 200
    polish_count: int = 5
    polish_maxiter: int = 60

    def __post_init__(self):
        if self.pool_per_dim < 1 or self.polish_count < 0 or self.polish_maxiter < 0:
            raise ValueError("inner optimizer sizes must be positive")

    def as_dict(self) -> dict:
        return {
            "pool_per_dim": self.pool_per_dim,
            "polish_count": self.polish_count,
            "polish_maxiter": self.polish_maxiter,
        }


@dataclass(frozen=True)
class RunConfig:
    """Everything one sequential run needs; see the campaign layer for file configs."""

    objective: Callable[[np.ndarray], float]
    bounds: Bounds
    criterion: CriterionSpec
    n0: int
    iterations: int
    seed: int = 0
    surrogate: SurrogateSpec = SurrogateSpec()
    up: UpParams = UpParams()
    inner: InnerOptConfig = InnerOptConfig()
    initial_design: np.ndarray | None = None
    test_set: TestSet | None = None
    doe_maximin_iters: int = 200
    stagnation_tol: float | None = None
    stagnation_patience: int = 5
    name: str = ""

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("need at least one iteration")
        min_n0 = 3 if needs_cv(self.criterion.kind) else 2
        n0 = self.n0 if self.initial_design is None else np.atleast_2d(self.initial_design).shape[0]
        if n0 < min_n0:
            raise ValueError(
                f"criterion {self.criterion.kind!r} needs an initial design of >= {min_n0} points"
            )


def propose_next(
    evaluate: Callable[[np.ndarray], np.ndarray],
    bounds: Bounds,
    X_scaled: np.ndarray,
    inner: InnerOptConfig,
    seed,
) -> tuple[np.ndarray, float]:
    """Maximize a criterion over the box and return a non-duplicate point.

    Seeded LHS pool, then Nelder-Mead polish (in scaled coordinates, bounded)
    from the best pool candidates.  Candidates are ranked by value with ties
    going to the earliest; anything within the duplicate tolerance of the
    existing design is skipped.
    """
    p = bounds.dim
    rng = np.random.default_rng(seed)
    pool_scaled = 2.0 * lhs_unit(inner.pool_per_dim * p, p, rng) - 1.0
    pool = bounds.unscale(pool_scaled)
    values = np.asarray(evaluate(pool), dtype=float)
    if not np.isfinite(values).all():
        raise ValueError("criterion returned non-finite values on the candidate pool")

    order = np.argsort(-values, kind="stable")
    cand_pts = [pool]
    cand_vals = [values]
    if inner.polish_count > 0 and inner.polish_maxiter > 0:
        for idx in order[: inner.polish_count]:
            res = minimize(
                lambda u: -float(evaluate(bounds.unscale(u)[None, :])[0]),
                pool_scaled[idx],
                method="Nelder-Mead",
                bounds=[(-1.0, 1.0)] * p,
                options={"maxiter": inner.polish_maxiter, "xatol": 1e-6, "fatol": 1e-12},
            )
            cand_pts.append(bounds.unscale(np.clip(res.x, -1.0, 1.0))[None, :])
            cand_vals.append(np.array([-res.fun]))

    all_pts = np.vstack(cand_pts)
    all_vals = np.concatenate(cand_vals)
    for idx in np.argsort(-all_vals, kind="stable"):
        pt = all_pts[idx]
        if min_dist(bounds.scale(pt), X_scaled) >= DUPLICATE_TOL:
            return pt, float(all_vals[idx])
    raise DesignSpaceExhaustedError(
        "every candidate duplicates an existing design point; the box is exhausted "
        "at the current duplicate tolerance"
    )


@dataclass
class ExperimentRecord:
    """Per-iteration trace of one sequential run plus its config echo."""

    name: str
    seed: int
    kind: str
    bounds: Bounds
    config_echo: dict
    initial_X: np.ndarray
    initial_y: np.ndarray
    initial_metrics: dict | None = None
    iterations: list[dict] = field(default_factory=list)
    status: str = "completed"
    failure: str | None = None

    @property
    def dim(self) -> int:
        return self.bounds.dim

    @property
    def best_y(self) -> float:
        ys = [it["y"] for it in self.iterations]
        return float(min(self.initial_y.min(), min(ys) if ys else np.inf))

    def design_matrix(self) -> np.ndarray:
        """All evaluated points, initial design first, in evaluation order."""
        pts = [self.initial_X] + [np.asarray(it["x"])[None, :] for it in self.iterations]
        return np.vstack(pts)

    # -- persistence --------------------------------------------------------

    def trace_rows(self) -> list[list]:
        rows = []
        for it in self.iterations:
            row = [it["iter"]]
            row += [repr(float(v)) for v in it["x"]]
            row += [repr(float(it["y"])), repr(float(it["best_y"])), repr(float(it["criterion_value"]))]
            metrics = it.get("metrics") or {}
            for key in METRIC_KEYS + ("band_accuracy",):
                v = metrics.get(key)
                row.append("" if v is None or (isinstance(v, float) and np.isnan(v)) else repr(float(v)))
            rows.append(row)
        return rows

    def trace_header(self) -> list[str]:
        return (
            ["iter"]
            + [f"x{j + 1}" for j in range(self.dim)]
            + ["y", "best_y", "criterion_value"]
            + list(METRIC_KEYS)
            + ["band_accuracy"]
        )

    def to_trace_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.trace_header())
            writer.writerows(self.trace_rows())

    def run_json_dict(self) -> dict:
        return {
            "schema_version": TRACE_SCHEMA_VERSION,
            "name": self.name,
            "seed": self.seed,
            "kind": self.kind,
            "status": self.status,
            "failure": self.failure,
            "config": self.config_echo,
            "initial_design": {
                "X": self.initial_X.tolist(),
                "y": self.initial_y.tolist(),
            },
            "initial_metrics": self.initial_metrics,
            "final_best_y": self.best_y if self.initial_y.size else None,
            "n_iterations": len(self.iterations),
            "iteration_details": [
                {
                    "iter": it["iter"],
                    "rho": it.get("rho"),
                    "delta": it.get("delta"),
                    "wall_ms": it.get("wall_ms"),
                }
                for it in self.iterations
            ],
            "environment": {
                "python": platform.python_version(),
                "platform": platform.platform(),
                "numpy": np.__version__,
            },
        }

    def write(self, run_dir: str | Path) -> None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        self.to_trace_csv(run_dir / "trace.csv")
        with open(run_dir / "run.json", "w") as fh:
            json.dump(self.run_json_dict(), fh, indent=2)
            fh.write("\n")


def _eval_objective(fn, x: np.ndarray, context: str, record=None) -> float:
    try:
        y = float(fn(np.asarray(x, dtype=float)))
    except ObjectiveEvaluationError:
        raise
    except Exception as exc:
        raise ObjectiveEvaluationError(f"objective raised during {context}: {exc}", record) from exc
    if not np.isfinite(y):
        raise ObjectiveEvaluationError(f"objective returned {y!r} during {context}", record)
    return y


def _band_accuracy(master, test: TestSet, threshold: float) -> float:
    pred = np.atleast_1d(master.predict_mean(test.X))
    return float(np.mean((pred >= threshold) == (test.y >= threshold)))


def run_sequential(cfg: RunConfig) -> ExperimentRecord:
    """Run one sequential design loop to its budget; see module docstring."""
    kind = cfg.criterion.kind
    use_cv = needs_cv(kind)
    if kind in MASTER_ONLY_KINDS and cfg.surrogate.family != "kriging":
        raise ValueError(f"criterion {kind!r} requires the kriging family")

    bounds = cfg.bounds
    if cfg.initial_design is not None:
        X0 = np.atleast_2d(np.asarray(cfg.initial_design, dtype=float))
    else:
        X0 = lhs(DoeConfig(cfg.n0, bounds.dim, seed=cfg.seed, maximin_iters=cfg.doe_maximin_iters), bounds)

    record = ExperimentRecord(
        name=cfg.name,
        seed=cfg.seed,
        kind=kind,
        bounds=bounds,
        config_echo=_config_echo(cfg),
        initial_X=X0,
        initial_y=np.zeros(0),
    )
    y0 = np.array([_eval_objective(cfg.objective, x, f"initial design point {i}", record)
                   for i, x in enumerate(X0)])
    record.initial_y = y0
    data = Dataset(X0, y0, bounds)

    warm = None
    master = fit(cfg.surrogate, data)
    if isinstance(master, KrigingModel):
        warm = master.lengthscales
    cv = fit_loo_submodels(cfg.surrogate, data, master=master) if use_cv else None

    if cfg.test_set is not None:
        record.initial_metrics = _snapshot_metrics(master, cfg, kind)

    best_streak = 0
    for m in range(1, cfg.iterations + 1):
        t0 = time.perf_counter()
        resolved = cfg.criterion.resolve(data.output_range, y_best=float(data.y.min()))
        rho = cfg.up.resolve(data.X_scaled) if use_cv else None

        def evaluate(Xq, _res=resolved, _cv=cv, _master=master, _rho=rho):
            return evaluate_batch(_res, Xq, cv=_cv, master=_master, rho=_rho)

        seed = np.random.SeedSequence([cfg.seed, 1000 + m])
        x_next, crit_value = propose_next(evaluate, bounds, data.X_scaled, cfg.inner, seed)
        y_next = _eval_objective(cfg.objective, x_next, f"iteration {m}", record)

        prev_best = float(data.y.min())
        data = data.append(x_next, y_next)
        master = fit(cfg.surrogate, data, warm_start=warm)
        if isinstance(master, KrigingModel):
            warm = master.lengthscales
        cv = fit_loo_submodels(cfg.surrogate, data, master=master) if use_cv else None

        entry = {
            "iter": m,
            "x": np.asarray(x_next, dtype=float),
            "y": y_next,
            "best_y": float(data.y.min()),
            "criterion_value": crit_value,
            "rho": rho,
            "delta": resolved.delta,
            "metrics": _snapshot_metrics(master, cfg, kind) if cfg.test_set is not None else None,
            "wall_ms": (time.perf_counter() - t0) * 1e3,
        }
        record.iterations.append(entry)

        if cfg.stagnation_tol is not None:
            improved = prev_best - float(data.y.min()) > cfg.stagnation_tol
            best_streak = 0 if improved else best_streak + 1
            if best_streak >= cfg.stagnation_patience:
                break

    return record


def _snapshot_metrics(master, cfg: RunConfig, kind: str) -> dict:
    out = evaluate_model(master, cfg.test_set)
    if kind in INVERSION_KINDS:
        out["band_accuracy"] = _band_accuracy(master, cfg.test_set, cfg.criterion.threshold)
    return out


def _config_echo(cfg: RunConfig) -> dict:
    return {
        "criterion": cfg.criterion.as_dict(),
        "surrogate": cfg.surrogate.as_dict(),
        "up": cfg.up.as_dict(),
        "inner_opt": cfg.inner.as_dict(),
        "bounds": cfg.bounds.as_dict(),
        "n0": int(cfg.n0),
        "iterations": int(cfg.iterations),
        "seed": int(cfg.seed),
        "doe_maximin_iters": int(cfg.doe_maximin_iters),
        "stagnation": {
            "tol": cfg.stagnation_tol,
            "patience": cfg.stagnation_patience,
        },
        "duplicate_tol": DUPLICATE_TOL,
    }


def _expect_kind(cfg: RunConfig, allowed, what: str) -> None:
    if cfg.criterion.kind not in allowed:
        raise ValueError(f"{what} expects a criterion in {tuple(allowed)}, got {cfg.criterion.kind!r}")


def run_up_smart(cfg: RunConfig) -> ExperimentRecord:
    """Global refinement driven by the prediction-distribution variance."""
    _expect_kind(cfg, {"up_smart"}, "run_up_smart")
    return run_sequential(cfg)


def run_up_ego(cfg: RunConfig) -> ExperimentRecord:
    """Optimization driven by the penalized empirical expected improvement."""
    _expect_kind(cfg, {"up_ei"}, "run_up_ego")
    return run_sequential(cfg)


def run_inversion(cfg: RunConfig) -> ExperimentRecord:
    """Contour / excursion-set refinement with one of the inversion criteria."""
    _expect_kind(cfg, INVERSION_KINDS, "run_inversion")
    return run_sequential(cfg)


def run_baseline(cfg: RunConfig) -> ExperimentRecord:
    """Kriging-variance refinement or Gaussian expected-improvement optimization."""
    _expect_kind(cfg, MASTER_ONLY_KINDS, "run_baseline")
    return run_sequential(cfg)
