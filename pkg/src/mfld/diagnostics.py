"""Closed-form convergence constants and empirical measurement utilities.

All bounds here are upper envelopes built from lower bounds on the
log-Sobolev constant; they are sanity references, not predictions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree
from scipy.special import digamma, gammaln

from .ensemble import NoiseSource, Stream
from .estimators import xi_factor
from .functionals import MeanFieldModel, ModelConstants, RegBounds, Regularizer, effective_bounds, positions_of

__all__ = [
    "LsiBounds",
    "TheoryConstants",
    "lsi_bounded",
    "lsi_lipschitz",
    "lsi_bounds",
    "theory_constants",
    "moment_bound",
    "entropy_estimate",
    "wasserstein2_small",
    "prediction_error",
    "proximal_gibbs_logdensity",
]

W2_MAX_PARTICLES = 512


def lsi_bounded(lam1: float, lam: float, R: float) -> float:
    """LSI lower bound when the first variation itself is bounded by R."""
    if lam1 <= 0 or lam <= 0:
        raise ValueError("lam1 and lambda must be positive")
    if R < 0:
        raise ValueError("R must be nonnegative")
    return lam1 / lam * math.exp(-4.0 * R / lam)


def lsi_lipschitz(lam1: float, lam2: float, lam: float, R: float, d: int) -> float:
    """LSI lower bound for an R-Lipschitz first variation (max of two criteria)."""
    if lam1 <= 0 or lam <= 0:
        raise ValueError("lam1 and lambda must be positive")
    if lam2 < lam1:
        raise ValueError("need lam2 >= lam1")
    if R < 0:
        raise ValueError("R must be nonnegative")
    ratio = R * R / (lam1 * lam)
    # Miclo's trick: Lipschitz perturbation of the strongly log-concave exp(-r/lambda)
    miclo = lam1 / (2.0 * lam) * math.exp(-4.0 * ratio * math.sqrt(2.0 * d / math.pi))
    # perturbation bound; exp overflow just means the bound is ~0
    try:
        growth = math.exp(ratio / 2.0)
    except OverflowError:
        return miclo
    amp = (R / lam1 + math.sqrt(2.0 * lam / lam1)) ** 2
    bracket = 2.0 + d + 0.5 * d * math.log(lam2 / lam1) + 4.0 * ratio
    perturb = 1.0 / (4.0 * lam / lam1 + growth * amp * bracket)
    return max(miclo, perturb)


@dataclass(frozen=True)
class LsiBounds:
    alpha_lipschitz: float
    alpha_bounded: float | None
    lam1: float
    lam2: float
    lam: float
    R: float
    d: int

    @property
    def alpha(self) -> float:
        """Largest valid lower bound (0 when none applies)."""
        cands = [a for a in (self.alpha_lipschitz, self.alpha_bounded) if a is not None]
        return max(cands) if cands else 0.0


def lsi_bounds(model: MeanFieldModel, reg: Regularizer, lam: float, constants: ModelConstants | None = None) -> LsiBounds:
    c = constants or model.constants()
    b = effective_bounds(model, reg)
    d = model.dim
    if not np.isfinite(c.R) or b.lam1 <= 0:
        return LsiBounds(0.0, None, b.lam1, b.lam2, lam, c.R, d)
    a_lip = lsi_lipschitz(b.lam1, b.lam2, lam, c.R, d)
    a_bdd = lsi_bounded(b.lam1, lam, c.value_bound) if c.value_bound is not None else None
    return LsiBounds(a_lip, a_bdd, b.lam1, b.lam2, lam, c.R, d)


def moment_bound(init_second_moment: float, lam1: float, lam2: float, c_r: float, R: float, lam: float, d: int) -> float:
    """Uniform-in-time bound on E||X_k||^2 (valid for eta <= lam1 / (4 lam2))."""
    if lam1 <= 0 or lam2 <= 0:
        raise ValueError("lam1, lam2 must be positive")
    inner = (lam1 / (8.0 * lam2) + 1.0 / (2.0 * lam1)) * (R * R + lam2 * c_r) + lam * d
    return init_second_moment + 2.0 / lam1 * inner


@dataclass(frozen=True)
class TheoryConstants:
    Rbar_sq: float
    Lbar: float
    C1: float
    delta_eta: float
    C_lambda: float
    alpha: float
    lam: float
    eta: float
    R: float
    L: float
    lam1: float
    lam2: float
    c_r: float
    c_L: float
    d: int
    estimator: str = "full"
    batch_size: int | None = None
    n_data: int | None = None
    refresh_period: int | None = None

    @property
    def upsilon_bar(self) -> float:
        """Variance term without the second-order smoothness assumption."""
        if self.estimator == "sgd":
            return self.R**2 / self.batch_size * self.eta
        if self.estimator == "svrg":
            xi = xi_factor(self.n_data, self.batch_size)
            return self.C1 * xi * self.L**2 * self.refresh_period * self.eta**2 * (self.eta + self.lam)
        return 0.0

    def plateau(self, N: int | None = None) -> float:
        la = self.lam * self.alpha
        if la <= 0:
            return math.inf
        out = 4.0 / la * self.Lbar**2 * self.C1 * (self.lam * self.eta + self.eta**2)
        out += 4.0 / (la * self.eta) * self.upsilon_bar
        if N is not None:
            out += 4.0 * self.C_lambda / (la * N)
        return out

    def theorem42_rhs(self, k: int, delta0: float, N: int | None = None) -> float:
        """Objective-gap envelope after k steps from initial gap ``delta0``."""
        return math.exp(-self.lam * self.alpha * self.eta * k / 2.0) * delta0 + self.plateau(N)

    def as_dict(self) -> dict:
        return {
            "Rbar_sq": self.Rbar_sq,
            "Lbar": self.Lbar,
            "C1": self.C1,
            "delta_eta": self.delta_eta,
            "C_lambda": self.C_lambda,
            "alpha": self.alpha,
            "upsilon_bar": self.upsilon_bar,
            "plateau_no_N": self.plateau(),
            "inputs.R": self.R,
            "inputs.L": self.L,
            "inputs.c_L": self.c_L,
            "inputs.lam1": self.lam1,
            "inputs.lam2": self.lam2,
            "inputs.c_r": self.c_r,
            "inputs.lambda": self.lam,
            "inputs.eta": self.eta,
            "inputs.d": self.d,
        }


def theory_constants(
    model_consts: ModelConstants,
    reg: Regularizer | RegBounds,
    lam: float,
    eta: float,
    d: int,
    init_second_moment: float,
    alpha: float | None = None,
    estimator: str = "full",
    batch_size: int | None = None,
    n_data: int | None = None,
    refresh_period: int | None = None,
) -> TheoryConstants:
    b = reg.bounds if isinstance(reg, Regularizer) else RegBounds(*reg)
    lam1, lam2, c_r = b
    R, L, c_L = model_consts.R, model_consts.L, model_consts.c_L
    if lam1 > 0 and lam2 > 0:
        Rbar_sq = init_second_moment + ((lam1 / (4 * lam2) + 1.0 / lam1) * (R * R + lam2 * c_r) + lam * d) / lam1
    else:
        Rbar_sq = math.inf
    Lbar = L + lam2
    C1 = 8.0 * (R * R + lam2 * (c_r + Rbar_sq) + d)
    delta_eta = C1 * Lbar**2 * (eta**2 + lam * eta) if Lbar > 0 else 0.0
    if alpha is None:
        alpha = 0.0
        if lam1 > 0 and np.isfinite(R):
            alpha = lsi_lipschitz(lam1, max(lam2, lam1), lam, R, d)
            if model_consts.value_bound is not None:
                alpha = max(alpha, lsi_bounded(lam1, lam, model_consts.value_bound))
    C_lambda = 2 * lam * L * alpha * (1 + 2 * c_L * Rbar_sq) + 2 * lam**2 * L**2 * Rbar_sq if L > 0 else 0.0
    return TheoryConstants(
        Rbar_sq, Lbar, C1, delta_eta, C_lambda, alpha, lam, eta, R, L, lam1, lam2, c_r, c_L, d,
        estimator, batch_size, n_data, refresh_period,
    )


def entropy_estimate(e, jitter_seed: int = 0) -> float:
    """Kozachenko-Leonenko (1-NN) differential entropy of the particle cloud.

    H = psi(N) - psi(1) + log V_d + (d / N) sum_i log eps_i with eps_i the
    nearest-neighbour distance and V_d the unit-ball volume. Exact duplicates
    are separated by a 1e-12 deterministic jitter.
    """
    X = positions_of(e)
    N, d = X.shape
    if N < d + 2:
        raise ValueError(f"entropy estimate needs N >= d + 2 particles (N={N}, d={d})")
    dist = cKDTree(X).query(X, k=2)[0][:, 1]
    if np.any(dist <= 0):
        X = X + 1e-12 * NoiseSource(jitter_seed).normals(0, N, d, Stream.JITTER)
        dist = cKDTree(X).query(X, k=2)[0][:, 1]
        dist = np.maximum(dist, 1e-300)
    log_vd = 0.5 * d * math.log(math.pi) - gammaln(0.5 * d + 1.0)
    return float(digamma(N) - digamma(1) + log_vd + d * np.mean(np.log(dist)))


def wasserstein2_small(cloud_a, cloud_b) -> float:
    """Exact W2 between two equal-size empirical measures (optimal assignment)."""
    A = positions_of(cloud_a)
    B = positions_of(cloud_b)
    if A.shape != B.shape:
        raise ValueError(f"cloud shapes differ: {A.shape} vs {B.shape}")
    N = A.shape[0]
    if N > W2_MAX_PARTICLES:
        raise ValueError(f"wasserstein2_small handles at most {W2_MAX_PARTICLES} points, got {N}")
    diff = A[:, None, :] - B[None, :, :]
    cost = np.sum(diff * diff, axis=-1)
    r, c = linear_sum_assignment(cost)
    return math.sqrt(max(float(cost[r, c].sum()) / N, 0.0))


def prediction_error(model, e, reference, z) -> float:
    """Mean over inputs z of (f_ensemble(z) - f_ref(z))^2.

    ``reference`` is an ensemble/position array or a callable z -> values.
    """
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    f = model.predict(e, z)
    if callable(reference):
        fr = np.asarray(reference(z), dtype=np.float64).reshape(-1)
    else:
        fr = model.predict(reference, z)
    return float(np.mean((f - fr) ** 2))


def proximal_gibbs_logdensity(model: MeanFieldModel, reg: Regularizer, e, lam: float, x):
    """Unnormalised log density -(dU/dmu(x) + r(x)) / lambda."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    X = positions_of(e)
    return -(model.first_variation(X, x) + reg.value(x)) / lam
