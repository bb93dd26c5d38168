"""Brute-force references for the analytic paths.

Nothing here calls the gradient, drift, or transport code it is used to
check: first variations come from differencing U on mixed measures,
gradients from coordinate differences, batch expectations from full
enumeration, and W2 from trying every permutation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FdSpec",
    "fd_first_variation",
    "fd_grad",
    "enumerate_batches",
    "exact_w2_enum",
    "ENUM_LIMIT",
]

ENUM_LIMIT = 10**6


@dataclass(frozen=True)
class FdSpec:
    """Central-difference step ``h = base * (1 + scale)``."""

    base: float = 1e-5

    def __post_init__(self):
        if self.base <= 0:
            raise ValueError("finite-difference step must be positive")

    def step(self, scale: float = 0.0) -> float:
        return self.base * (1.0 + scale)


def fd_first_variation(model, X, x, h: float = 1e-5) -> float:
    """d/de U((1 - e) mu_X + e delta_x) at e = 0 by central differences.

    Equals the first variation at x minus its mean over the particles.
    Needs the model's weighted-measure hook ``u_value_weighted``.
    """
    hook = getattr(model, "u_value_weighted", None)
    if hook is None:
        raise TypeError(f"{type(model).__name__} has no weighted-measure evaluation")
    X = np.asarray(getattr(X, "positions", X), dtype=np.float64)
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    N = X.shape[0]
    pts = np.vstack([X, x])

    def U(eps):
        w = np.full(N + 1, (1.0 - eps) / N)
        w[-1] = eps
        return hook(pts, w)

    return (U(h) - U(-h)) / (2.0 * h)


def fd_grad(f, x, h: float | None = None) -> np.ndarray:
    """Coordinatewise central differences of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    if h is None:
        h = FdSpec().step(float(np.linalg.norm(x)))
    g = np.empty_like(x)
    for a in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.flat[a] += h
        xm.flat[a] -= h
        g.flat[a] = (float(f(xp)) - float(f(xm))) / (2.0 * h)
    return g


def enumerate_batches(n: int, B: int, mode: str) -> list[tuple[tuple[int, ...], float]]:
    """Every batch outcome with its probability.

    ``with_replacement``: the n^B ordered draws, each 1 / n^B.
    ``without_replacement``: the C(n, B) subsets, each 1 / C(n, B).
    """
    if mode == "with_replacement":
        count = n**B
        if count > ENUM_LIMIT:
            raise ValueError(f"{count} outcomes exceeds the enumeration limit")
        p = 1.0 / count
        return [(t, p) for t in itertools.product(range(n), repeat=B)]
    if mode == "without_replacement":
        if B > n:
            raise ValueError("batch larger than population")
        count = math.comb(n, B)
        if count > ENUM_LIMIT:
            raise ValueError(f"{count} outcomes exceeds the enumeration limit")
        p = 1.0 / count
        return [(t, p) for t in itertools.combinations(range(n), B)]
    raise ValueError(f"unknown batch mode {mode!r}")


def exact_w2_enum(cloud_a, cloud_b) -> float:
    """W2 between equal-size clouds by minimising over all N! pairings."""
    A = np.asarray(getattr(cloud_a, "positions", cloud_a), dtype=np.float64)
    B = np.asarray(getattr(cloud_b, "positions", cloud_b), dtype=np.float64)
    if A.shape != B.shape:
        raise ValueError("cloud shapes differ")
    N = A.shape[0]
    if N > 8:
        raise ValueError("exhaustive W2 is limited to N <= 8")
    best = math.inf
    for perm in itertools.permutations(range(N)):
        cost = 0.0
        for i, j in enumerate(perm):
            diff = A[i] - B[j]
            cost += float(diff @ diff)
        best = min(best, cost)
    return math.sqrt(best / N)
