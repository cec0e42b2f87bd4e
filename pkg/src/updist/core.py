"""Input-space geometry: box bounds, affine scaling, datasets, and design-distance utilities.

Every distance-based quantity in this package (weights, smoothing lengths,
exploration penalties, duplicate detection) is computed on coordinates scaled
to the hypercube ``[-1, 1]^p``.  :class:`Bounds` owns that affine map and
:class:`Dataset` caches the scaled view of its points.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

# Scaled-space distance below which two points are treated as the same point.
# Leave-one-out sub-models and kriging Cholesky factors degrade quickly with
# coincident rows, so Dataset construction rejects anything closer than this.
DUPLICATE_TOL = 1e-9


def _as_2d(x: np.ndarray, dim: int) -> tuple[np.ndarray, bool]:
    """Coerce a single point or a stack of points to shape (m, dim)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        if arr.shape[0] != dim:
            raise ValueError(f"expected a point of dimension {dim}, got shape {arr.shape}")
        return arr[None, :], True
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {arr.shape}")
    return arr, False


@dataclass(frozen=True, eq=False)
class Bounds:
    """Axis-aligned box defining the input space.

    Parameters
    ----------
    lower, upper : array_like, shape (p,)
        Box edges with ``lower[j] < upper[j]`` for every axis.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("lower and upper must be 1-D and of equal length")
        if lo.size < 1:
            raise ValueError("bounds need at least one dimension")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("bounds must be finite")
        if not (lo < hi).all():
            raise ValueError("every lower bound must be strictly below its upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def span(self) -> np.ndarray:
        return self.upper - self.lower

    @classmethod
    def unit(cls, dim: int) -> "Bounds":
        """The scaled space itself, ``[-1, 1]^dim``."""
        return cls(-np.ones(dim), np.ones(dim))

    def contains(self, x: np.ndarray, rtol: float = 1e-9) -> bool:
        """True if every point lies inside the box (up to a relative slack)."""
        pts, _ = _as_2d(x, self.dim)
        slack = rtol * self.span
        return bool(((pts >= self.lower - slack) & (pts <= self.upper + slack)).all())

    def scale(self, x: np.ndarray) -> np.ndarray:
        """Map points from the box to ``[-1, 1]^p`` (affine, invertible)."""
        pts, single = _as_2d(x, self.dim)
        out = 2.0 * (pts - self.lower) / self.span - 1.0
        return out[0] if single else out

    def unscale(self, u: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`scale`."""
        pts, single = _as_2d(u, self.dim)
        out = self.lower + 0.5 * (pts + 1.0) * self.span
        return out[0] if single else out

    def as_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Bounds":
        return cls(np.asarray(d["lower"], dtype=float), np.asarray(d["upper"], dtype=float))


def scale_to_unit(x: np.ndarray, bounds: Bounds) -> np.ndarray:
    """Affinely map ``x`` from ``bounds`` to the hypercube ``[-1, 1]^p``."""
    return bounds.scale(x)


def unscale_from_unit(u: np.ndarray, bounds: Bounds) -> np.ndarray:
    """Inverse of :func:`scale_to_unit`."""
    return bounds.unscale(u)


def min_dist(x: np.ndarray, points: np.ndarray) -> float | np.ndarray:
    """Euclidean distance from ``x`` to the nearest row of ``points``.

    ``x`` may be a single point (returns a float) or a stack of query points
    (returns a vector).  Zero exactly when ``x`` coincides with a row.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("points must be a nonempty (m, p) array")
    q, single = _as_2d(x, pts.shape[1])
    d = cdist(q, pts).min(axis=1)
    return float(d[0]) if single else d


def nearest_index(x: np.ndarray, points: np.ndarray) -> int:
    """Index of the row of ``points`` nearest to ``x``; ties go to the lowest index."""
    pts = np.asarray(points, dtype=float)
    q, _ = _as_2d(x, pts.shape[1])
    return int(cdist(q, pts)[0].argmin())


def _nn_dists(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two points")
    d = cdist(pts, pts)
    np.fill_diagonal(d, np.inf)
    return d.min(axis=1)


def dbar(points: np.ndarray) -> float:
    """Largest nearest-neighbor distance within a point set.

    This is the default smoothing length for the prediction-weight formula:
    it is the radius of the biggest "hole" around any design point.
    """
    return float(_nn_dists(points).max())


def min_pairwise_dist(points: np.ndarray) -> float:
    """Smallest distance between any two distinct points of the set."""
    return float(_nn_dists(points).min())


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observations ``(X, y)`` together with the box they live in.

    Invariants enforced at construction: at least two points, matching
    lengths, finite values, all points inside ``bounds``, and no two points
    within :data:`DUPLICATE_TOL` of each other in scaled coordinates.
    """

    X: np.ndarray
    y: np.ndarray
    bounds: Bounds

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} points but {y.shape[0]} values")
        if X.shape[0] < 2:
            raise ValueError("a dataset needs at least two observations")
        if X.shape[1] != self.bounds.dim:
            raise ValueError(f"points have dimension {X.shape[1]}, bounds have {self.bounds.dim}")
        if not np.isfinite(X).all():
            raise ValueError("non-finite coordinates in X")
        if not np.isfinite(y).all():
            raise ValueError("non-finite observation values")
        if not self.bounds.contains(X):
            raise ValueError("some points fall outside the stated bounds")
        Xs = self.bounds.scale(X)
        if min_pairwise_dist(Xs) < DUPLICATE_TOL:
            raise ValueError(
                f"dataset contains duplicate points (scaled distance < {DUPLICATE_TOL:g})"
            )
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @cached_property
    def X_scaled(self) -> np.ndarray:
        """Design points mapped to ``[-1, 1]^p``; cached, do not mutate."""
        return self.bounds.scale(self.X)

    @property
    def output_range(self) -> float:
        return float(self.y.max() - self.y.min())

    def append(self, x: np.ndarray, value: float) -> "Dataset":
        """New dataset with one more observation (originals are immutable)."""
        x = np.asarray(x, dtype=float).reshape(1, -1)
        return Dataset(np.vstack([self.X, x]), np.append(self.y, value), self.bounds)

    def drop(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        """Leave-one-out view: ``(X, y)`` without row ``index`` (no copy of bounds)."""
        mask = np.arange(self.n) != index
        return self.X[mask], self.y[mask]

    # -- CSV round trip: header x1..xp,y; bounds travel in the run config ----

    def to_csv(self, path: str | Path) -> None:
        write_points_csv(path, self.X, self.y)

    @classmethod
    def from_csv(cls, path: str | Path, bounds: Bounds) -> "Dataset":
        X, y = read_points_csv(path)
        if y is None:
            raise ValueError(f"{path}: missing y column")
        return cls(X, y, bounds)


def write_points_csv(path: str | Path, X: np.ndarray, y: np.ndarray | None = None) -> None:
    """Write points (and optionally values) as ``x1,...,xp[,y]`` with full float precision."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    header = [f"x{j + 1}" for j in range(X.shape[1])]
    if y is not None:
        header.append("y")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(X.shape[0]):
            row = [repr(float(v)) for v in X[i]]
            if y is not None:
                row.append(repr(float(y[i])))
            writer.writerow(row)


def read_points_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray | None]:
    """Read a ``x1..xp[,y]`` CSV back into arrays; returns ``(X, y-or-None)``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    has_y = header[-1].strip().lower() == "y"
    data = np.asarray(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"{path}: malformed CSV")
    if has_y:
        return data[:, :-1], data[:, -1]
    return data, None
