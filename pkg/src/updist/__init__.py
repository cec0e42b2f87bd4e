"""Surrogate-model-agnostic prediction uncertainty from cross-validation.

The package builds an empirical distribution of leave-one-out sub-model
predictions at any query point, weights it so that uncertainty vanishes at
design points, and drives three sequential-design engines with it: global
refinement (UP-SMART), optimization (UP-EGO), and contour/excursion-set
inversion.  Works with any fit/predict surrogate; kriging, polynomial, RBF,
and a CV-weighted ensemble are built in.
"""

from .benchfns import Benchmark, benchmark_names, get_benchmark
from .core import Bounds, Dataset, dbar, min_dist, min_pairwise_dist, scale_to_unit, unscale_from_unit
from .criteria import (
    CriterionSpec,
    bichon,
    empirical_ei,
    gaussian_ei,
    gaussian_ei_at,
    ranjan,
    tmse,
    tmse_regularized,
    up_ei,
    up_smart_criterion,
)
from .distribution import (
    UpDistribution,
    UpParams,
    up_at,
    up_mean,
    up_moments_batch,
    up_variance,
    weights_binary,
    weights_smooth,
)
from .doe import DoeConfig, full_grid, lhs
from .engine import (
    ExperimentRecord,
    InnerOptConfig,
    RunConfig,
    propose_next,
    run_baseline,
    run_inversion,
    run_sequential,
    run_up_ego,
    run_up_smart,
)
from .metrics import TestSet, evaluate_model, evaluate_predictions, q2, raae, rmse_paper, rmse_sqrt, rrmse
from .surrogate import (
    CvEnsemble,
    Prediction,
    SurrogateSpec,
    fit,
    fit_loo_submodels,
)

__version__ = "0.1.0"

__all__ = [
    "Benchmark",
    "Bounds",
    "CriterionSpec",
    "CvEnsemble",
    "Dataset",
    "DoeConfig",
    "ExperimentRecord",
    "InnerOptConfig",
    "Prediction",
    "RunConfig",
    "SurrogateSpec",
    "TestSet",
    "UpDistribution",
    "UpParams",
    "benchmark_names",
    "bichon",
    "dbar",
    "empirical_ei",
    "evaluate_model",
    "evaluate_predictions",
    "fit",
    "fit_loo_submodels",
    "full_grid",
    "gaussian_ei",
    "gaussian_ei_at",
    "get_benchmark",
    "lhs",
    "min_dist",
    "min_pairwise_dist",
    "propose_next",
    "q2",
    "raae",
    "ranjan",
    "rmse_paper",
    "rmse_sqrt",
    "rrmse",
    "run_baseline",
    "run_inversion",
    "run_sequential",
    "run_up_ego",
    "run_up_smart",
    "scale_to_unit",
    "tmse",
    "tmse_regularized",
    "unscale_from_unit",
    "up_at",
    "up_ei",
    "up_mean",
    "up_moments_batch",
    "up_smart_criterion",
    "up_variance",
    "weights_binary",
    "weights_smooth",
]
