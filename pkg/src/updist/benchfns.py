"""Analytic benchmark functions with their domains and reference optima.

All evaluators accept a single point ``(p,)`` or a stack ``(m, p)`` and are
finite and deterministic on their stated domains.  Reference minima are the
standard literature values; the test suite re-derives each one with a dense
grid + local polish oracle before anything else relies on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import Bounds


def _eval_2d(x: np.ndarray, fn2: Callable[[np.ndarray, np.ndarray], np.ndarray]):
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    pts = np.atleast_2d(arr)
    out = fn2(pts[:, 0], pts[:, 1])
    return float(out[0]) if single else out


def viana(x: np.ndarray):
    """1-D oscillatory test function ``(10 cos(2x) + 15 - 5x + x^2) / 50`` on [-3, 3]."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 0 or arr.shape == (1,)
    v = arr.reshape(-1)
    out = (10.0 * np.cos(2.0 * v) + 15.0 - 5.0 * v + v**2) / 50.0
    return float(out[0]) if single else out


def branin(x: np.ndarray):
    """Branin function on [-5, 10] x [0, 15]; three global minima at 0.397887."""

    def f(x1, x2):
        a = x2 - 5.1 / (4.0 * np.pi**2) * x1**2 + 5.0 / np.pi * x1 - 6.0
        return a**2 + 10.0 * (1.0 - 1.0 / (8.0 * np.pi)) * np.cos(x1) + 10.0

    return _eval_2d(x, f)


def camel(x: np.ndarray):
    """Six-hump camel on [-3, 3] x [-2, 2]; two global minima at -1.0316."""

    def f(x1, x2):
        return (4.0 - 2.1 * x1**2 + x1**4 / 3.0) * x1**2 + x1 * x2 + x2**2 * (4.0 * x2**2 - 4.0)

    return _eval_2d(x, f)


# Hartmann 4x6 constants (Dixon & Szego), cross-checked in the test suite by
# reproducing the known minimum with a multistart local-search oracle.
_H6_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_H6_A = np.array(
    [
        [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
        [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
        [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
        [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
    ]
)
_H6_P = 1e-4 * np.array(
    [
        [1312.0, 1696.0, 5569.0, 124.0, 8283.0, 5886.0],
        [2329.0, 4135.0, 8307.0, 3736.0, 1004.0, 9991.0],
        [2348.0, 1451.0, 3522.0, 2883.0, 3047.0, 6650.0],
        [4047.0, 8828.0, 8732.0, 5743.0, 1091.0, 381.0],
    ]
)


def hartmann6(x: np.ndarray):
    """Hartmann 6-D function on [0, 1]^6; global minimum about -3.32237."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    pts = np.atleast_2d(arr)  # (m, 6)
    # inner[k, i] = sum_j A[i, j] * (x[k, j] - P[i, j])^2
    diff = pts[:, None, :] - _H6_P[None, :, :]
    inner = np.einsum("ij,kij->ki", _H6_A, diff**2)
    out = -(np.exp(-inner) @ _H6_ALPHA)
    return float(out[0]) if single else out


def ackley(x: np.ndarray, a: float = 20.0, b: float = 0.2, c: float = 2.0 * np.pi):
    """Ackley function on [-5, 5]^2 with the usual (20, 0.2, 2*pi) parameters."""

    def f(x1, x2):
        sq = 0.5 * (x1**2 + x2**2)
        cs = 0.5 * (np.cos(c * x1) + np.cos(c * x2))
        return -a * np.exp(-b * np.sqrt(sq)) - np.exp(cs) + a + np.e

    return _eval_2d(x, f)


@dataclass(frozen=True)
class Benchmark:
    """A named objective with its domain and any established minima."""

    name: str
    dim: int
    bounds: Bounds
    fn: Callable[[np.ndarray], float | np.ndarray]
    minimizers: np.ndarray | None = None
    fmin: float | None = None

    def __call__(self, x: np.ndarray):
        return self.fn(x)


_BENCHMARKS = {
    "viana": Benchmark("viana", 1, Bounds([-3.0], [3.0]), viana),
    "branin": Benchmark(
        "branin",
        2,
        Bounds([-5.0, 0.0], [10.0, 15.0]),
        branin,
        minimizers=np.array([[-np.pi, 12.275], [np.pi, 2.275], [9.42478, 2.475]]),
        fmin=0.397887,
    ),
    "camel": Benchmark(
        "camel",
        2,
        Bounds([-3.0, -2.0], [3.0, 2.0]),
        camel,
        minimizers=np.array([[0.0898, -0.7126], [-0.0898, 0.7126]]),
        fmin=-1.0316,
    ),
    "hartmann6": Benchmark(
        "hartmann6",
        6,
        Bounds(np.zeros(6), np.ones(6)),
        hartmann6,
        minimizers=np.array([[0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573]]),
        fmin=-3.32237,
    ),
    "ackley": Benchmark(
        "ackley",
        2,
        Bounds([-5.0, -5.0], [5.0, 5.0]),
        ackley,
        minimizers=np.array([[0.0, 0.0]]),
        fmin=0.0,
    ),
}


def benchmark_names() -> list[str]:
    return sorted(_BENCHMARKS)


def get_benchmark(name: str) -> Benchmark:
    try:
        return _BENCHMARKS[name.lower()]
    except KeyError:
        raise KeyError(f"unknown benchmark {name!r}; available: {', '.join(benchmark_names())}")
