"""The mean-field functional contract, the quadratic regularizer, and
sampled checks of the boundedness/smoothness constants."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .ensemble import ParticleEnsemble, check_finite

__all__ = [
    "Regularizer",
    "RegBounds",
    "ModelConstants",
    "MeanFieldModel",
    "AssumptionReport",
    "as_points",
    "positions_of",
    "reg_grad",
    "full_drift",
    "effective_bounds",
    "check_assumptions",
]


def as_points(x) -> tuple[np.ndarray, bool]:
    """Promote a single point to a 1 x d batch; report whether to squeeze back."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


def positions_of(e) -> np.ndarray:
    return e.positions if isinstance(e, ParticleEnsemble) else np.asarray(e, dtype=np.float64)


class RegBounds(NamedTuple):
    lam1: float
    lam2: float
    c_r: float = 0.0


@dataclass(frozen=True)
class Regularizer:
    """r(x) = weight * ||x||^2."""

    weight: float = 0.0

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("regularizer weight must be nonnegative")

    @property
    def bounds(self) -> RegBounds:
        return RegBounds(2.0 * self.weight, 2.0 * self.weight, 0.0)

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return self.weight * np.sum(x * x, axis=-1)

    def grad(self, x) -> np.ndarray:
        return 2.0 * self.weight * np.asarray(x, dtype=np.float64)


def reg_grad(reg: Regularizer, x) -> np.ndarray:
    return reg.grad(x)


@dataclass(frozen=True)
class ModelConstants:
    """Constants of the boundedness/smoothness assumption for one model.

    ``R`` bounds the first-variation gradient, ``L`` its Lipschitz modulus in
    ``(W2(mu, mu') + ||x - x'||)``, ``c_L`` the second-variation growth.
    ``value_bound`` is a sup bound on the first variation itself (None when
    unbounded). ``curvature`` is a ``(low, high)`` Hessian bound for a
    quadratic part of U that the theory folds into the regularizer.
    """

    R: float
    L: float
    c_L: float = 0.0
    value_bound: float | None = None
    curvature: tuple[float, float] | None = None
    notes: str = ""


class MeanFieldModel(ABC):
    """A functional U(mu) evaluated on empirical measures of particles.

    Positions ``X`` are N x d arrays; query points ``x`` are d-vectors or
    M x d batches. First variations are returned without the zero-mean
    normalisation (gradients do not see constant shifts).
    """

    name: str = "model"
    dim: int

    @abstractmethod
    def u_value(self, X) -> float: ...

    @abstractmethod
    def u_value_weighted(self, points: np.ndarray, weights: np.ndarray) -> float:
        """U of the signed measure sum_i weights[i] * delta_{points[i]}."""

    @abstractmethod
    def first_variation(self, X, x): ...

    @abstractmethod
    def grad_first_variation(self, X, x): ...

    @abstractmethod
    def constants(self) -> ModelConstants: ...

    def n_data(self) -> int:
        return 1

    def per_datum_grad(self, X, x, j: int):
        if j != 0:
            raise IndexError(f"{self.name} has a single term; got datum {j}")
        return self.grad_first_variation(X, x)

    def batch_grad(self, X, x, batch) -> np.ndarray:
        """Mean of per_datum_grad over ``batch`` (repeats counted)."""
        batch = np.asarray(batch, dtype=np.int64)
        acc = None
        for j in batch:
            g = self.per_datum_grad(X, x, int(j))
            acc = g if acc is None else acc + g
        return acc / len(batch)

    def folded_grad(self, x):
        """Gradient of the quadratic part counted in ``constants().curvature``."""
        return np.zeros_like(np.asarray(x, dtype=np.float64))

    def metric(self, X) -> float:
        """Model-specific scalar recorded in traces."""
        return self.u_value(X)


def effective_bounds(model: MeanFieldModel, reg: Regularizer) -> RegBounds:
    """Strong-convexity bounds of r plus any quadratic part folded out of U."""
    b = reg.bounds
    curv = model.constants().curvature
    if curv is None:
        return b
    return RegBounds(b.lam1 + curv[0], b.lam2 + curv[1], b.c_r)


def full_drift(model: MeanFieldModel, reg: Regularizer, e, i=None) -> np.ndarray:
    """grad dF/dmu at particle(s) ``i`` (all particles when None)."""
    X = positions_of(e)
    x = X if i is None else X[i]
    v = model.grad_first_variation(X, x) + reg.grad(x)
    check_finite(v, "full drift", step=getattr(e, "step", None))
    return v


@dataclass
class AssumptionReport:
    conforming: bool
    max_grad_ratio: float
    max_lipschitz_ratio: float
    probes: int
    violations: list[str] = field(default_factory=list)


def check_assumptions(
    model: MeanFieldModel,
    reg: Regularizer | None = None,
    probes: int = 1000,
    seed: int = 0,
    scale: float = 2.0,
    max_particles: int = 6,
    constants: ModelConstants | None = None,
) -> AssumptionReport:
    """Monte-Carlo probe of ||grad dU/dmu|| <= R and the Lipschitz bound L.

    Ratios are reported relative to the constants (1.0 = at the bound).
    Infinite constants are reported as conforming with ratio 0. Any
    quadratic part the model folds into the regularizer bounds is removed
    from the gradient before probing.
    """
    from .diagnostics import wasserstein2_small

    c = constants or model.constants()
    rng = np.random.default_rng(seed)
    d = model.dim
    max_g = 0.0
    max_l = 0.0
    violations = []
    for t in range(probes):
        N = int(rng.integers(1, max_particles + 1))
        X = scale * rng.standard_normal((N, d))
        x = scale * rng.standard_normal(d)
        g = model.grad_first_variation(X, x) - model.folded_grad(x)
        gn = float(np.linalg.norm(g))
        if np.isfinite(c.R):
            ratio = gn / c.R if c.R > 0 else (np.inf if gn > 0 else 0.0)
            max_g = max(max_g, ratio)
        step = 10.0 ** rng.uniform(-3, 0)
        X2 = X + step * rng.standard_normal((N, d)) * (rng.random((N, 1)) < 0.5)
        x2 = x + step * rng.standard_normal(d)
        g2 = model.grad_first_variation(X2, x2) - model.folded_grad(x2)
        denom = wasserstein2_small(X, X2) + float(np.linalg.norm(x - x2))
        if denom > 0 and np.isfinite(c.L):
            num = float(np.linalg.norm(g - g2))
            lratio = num / c.L if c.L > 0 else (np.inf if num > 1e-12 else 0.0)
            max_l = max(max_l, float(lratio / denom))
    if max_g > 1.0 + 1e-6:
        violations.append(f"gradient bound R={c.R:g} exceeded (max ratio {max_g:.6g})")
    if max_l > 1.0 + 1e-3:
        violations.append(f"Lipschitz bound L={c.L:g} exceeded (max ratio {max_l:.6g})")
    return AssumptionReport(not violations, max_g, max_l, probes, violations)
