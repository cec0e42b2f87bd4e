"""Space-filling initial designs and test grids.

The Latin hypercube here is the randomized kind (one jittered point per axis
stratum) followed by a fixed budget of random within-column swaps that are
kept only when they increase the minimum pairwise distance.  Everything is
deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Bounds, min_pairwise_dist

MAX_GRID_POINTS = 10_000_000


@dataclass(frozen=True)
class DoeConfig:
    """Latin hypercube request: ``n`` points in ``dim`` dimensions."""

    n: int
    dim: int
    seed: int
    maximin_iters: int = 200

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("a design needs at least two points")
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        if self.maximin_iters < 0:
            raise ValueError("maximin_iters must be nonnegative")


def lhs_unit(n: int, dim: int, rng: np.random.Generator, maximin_iters: int = 0) -> np.ndarray:
    """Latin hypercube on ``[0, 1]^dim`` with optional maximin swap improvement.

    Each column holds exactly one point per stratum ``[k/n, (k+1)/n)``.  A swap
    exchanges two entries within one column, which preserves that marginal
    property; swaps are accepted only when the design's minimum pairwise
    distance strictly improves, so the returned design is never worse than
    the initial one.
    """
    strata = np.argsort(rng.random((n, dim)), axis=0)
    design = (strata + rng.random((n, dim))) / n
    if maximin_iters > 0 and n > 2:
        best = min_pairwise_dist(design)
        for _ in range(maximin_iters):
            col = int(rng.integers(dim))
            i, j = rng.choice(n, size=2, replace=False)
            design[[i, j], col] = design[[j, i], col]
            trial = min_pairwise_dist(design)
            if trial > best:
                best = trial
            else:
                design[[i, j], col] = design[[j, i], col]
    return design


def lhs(cfg: DoeConfig, bounds: Bounds) -> np.ndarray:
    """Latin hypercube design mapped into ``bounds`` (points in original units)."""
    if bounds.dim != cfg.dim:
        raise ValueError(f"config dimension {cfg.dim} does not match bounds dimension {bounds.dim}")
    rng = np.random.default_rng(cfg.seed)
    unit = lhs_unit(cfg.n, cfg.dim, rng, cfg.maximin_iters)
    return bounds.lower + unit * bounds.span


def full_grid(n_per_axis: int, bounds: Bounds) -> np.ndarray:
    """Tensor grid of ``n_per_axis**p`` points including the box corners."""
    if n_per_axis < 2:
        raise ValueError("n_per_axis must be at least 2")
    total = n_per_axis ** bounds.dim
    if total > MAX_GRID_POINTS:
        raise ValueError(
            f"grid of {n_per_axis}^{bounds.dim} = {total} points exceeds the "
            f"{MAX_GRID_POINTS} guard; use an LHS test set instead"
        )
    axes = [np.linspace(bounds.lower[j], bounds.upper[j], n_per_axis) for j in range(bounds.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)
