"""Oracle suite: analytic derivatives and estimators against brute force.

Run with ``mfld verify``. Each check prints one line and the command exits
nonzero if any fails.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .datasets import finite_sum_quadratic, two_gaussians
from .estimators import EstimatorConfig, refresh_anchor, sgd_drift, svrg_drift
from .functionals import Regularizer, full_drift
from .models import GaussianTarget, KsdModel, LinearModel, MmdModel, TwoLayerNetModel
from .models.ksd import GaussianMixtureTarget
from .models.network import xor_dataset
from .oracle import enumerate_batches, fd_first_variation, fd_grad

GRAD_TOL = 1e-6
FV_TOL = 1e-5
ENUM_TOL = 1e-12


@dataclass
class CheckResult:
    name: str
    ok: bool
    worst: float
    tol: float

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'}  {self.name:<52s} worst={self.worst:.3e} tol={self.tol:.0e}"


def oracle_models(seed: int = 0) -> dict:
    """One model per preset family plus variants that exercise other code paths."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((2, 2))
    centers, curv = finite_sum_quadratic(16, 2, seed + 1)
    Z, y = xor_dataset(0.5)
    Zr = rng.standard_normal((5, 2))
    yr = np.sign(rng.standard_normal(5))
    return {
        "linear_quadratic": LinearModel.quadratic(A @ A.T + np.eye(2), rng.standard_normal(2)),
        "linear_finite_sum": LinearModel.finite_sum(centers, curv),
        "two_layer_net/tanh_dot/squared": TwoLayerNetModel(Z, y, "tanh_dot", "squared"),
        "two_layer_net/bounded_amp/logistic": TwoLayerNetModel(Zr, yr, "bounded_amp", "logistic"),
        "mmd/dirac": MmdModel(two_gaussians(32, seed + 2), 1.0, "dirac"),
        "mmd/gaussian_mixture": MmdModel(two_gaussians(16, seed + 3, dim=2), 0.8, "gaussian_mixture", 0.4),
        "ksd/gaussian": KsdModel(GaussianTarget(0.0, 1.0, 1), 1.0),
        "ksd/mixture": KsdModel(GaussianMixtureTarget([[-1.0, 0.0], [1.5, 0.5]], [0.7, 1.2], [0.4, 0.6]), 1.2),
    }


def _rel(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), 1e-8)
    return float(np.linalg.norm(a - b)) / scale


def check_gradients(model, instances: int = 20, seed: int = 0) -> tuple[float, float]:
    """Worst relative errors (gradient vs differences, first variation vs mixing)."""
    rng = np.random.default_rng(seed)
    d = model.dim
    worst_g = worst_f = 0.0
    for _ in range(instances):
        N = int(rng.integers(3, 9))
        X = rng.standard_normal((N, d))
        x = rng.standard_normal(d)
        g = model.grad_first_variation(X, x)
        g_fd = fd_grad(lambda z: model.first_variation(X, z), x)
        worst_g = max(worst_g, _rel(g, g_fd))
        fv = model.first_variation(X, x) - np.mean(model.first_variation(X, X))
        worst_f = max(worst_f, _rel(fv, fd_first_variation(model, X, x)))
    return worst_g, worst_f


def check_unbiased(model, reg, kind: str, B: int, X: np.ndarray, anchor: np.ndarray | None = None) -> float:
    """Relative gap between the enumerated mean drift and the full drift."""
    cfg = EstimatorConfig(kind, B, 1)
    n = model.n_data()
    exact = full_drift(model, reg, X)
    state = refresh_anchor(model, anchor if anchor is not None else X)
    mean = np.zeros_like(exact)
    for batch, p in enumerate_batches(n, B, cfg.batch_mode):
        if kind == "sgd":
            v = sgd_drift(model, reg, X, None, np.array(batch))
        else:
            v = svrg_drift(model, reg, X, None, np.array(batch), state)
        mean += p * v
    return _rel(mean, exact)


def run_suite(instances: int = 20, seed: int = 0, echo=None) -> list[CheckResult]:
    results = []

    def add(r: CheckResult):
        results.append(r)
        if echo is not None:
            echo(r.line())

    for name, model in oracle_models(seed).items():
        g, f = check_gradients(model, instances, seed)
        add(CheckResult(f"grad {name}", g < GRAD_TOL, g, GRAD_TOL))
        add(CheckResult(f"first variation {name}", f < FV_TOL, f, FV_TOL))

    rng = np.random.default_rng(seed + 7)
    reg = Regularizer(0.05)
    centers, curv = finite_sum_quadratic(6, 2, seed + 8)
    small = {
        "linear_finite_sum": LinearModel.finite_sum(centers, curv),
        "two_layer_net": TwoLayerNetModel(rng.standard_normal((5, 2)), rng.standard_normal(5)),
        "mmd": MmdModel(rng.standard_normal((6, 1)), 1.0),
    }
    for name, model in small.items():
        X = rng.standard_normal((4, model.dim))
        anchor = X + 0.3 * rng.standard_normal(X.shape)
        for B in (1, 2, 3):
            if B > model.n_data():
                continue
            w = check_unbiased(model, reg, "sgd", B, X)
            add(CheckResult(f"unbiased sgd {name} B={B}", w < ENUM_TOL, w, ENUM_TOL))
            w = check_unbiased(model, reg, "svrg", B, X, anchor)
            add(CheckResult(f"unbiased svrg {name} B={B}", w < ENUM_TOL, w, ENUM_TOL))
        # at the anchor every batch gives exactly the full drift
        state = refresh_anchor(model, X)
        exact = full_drift(model, reg, X)
        spread = 0.0
        for batch, _ in enumerate_batches(model.n_data(), 2, "without_replacement"):
            v = svrg_drift(model, reg, X, None, np.array(batch), state)
            spread = max(spread, float(np.max(np.abs(v - exact))))
        add(CheckResult(f"svrg zero variance at anchor {name}", spread < 1e-12, spread, 1e-12))
    return results


def main(echo=print) -> int:
    t0 = time.perf_counter()
    results = run_suite(echo=echo)
    bad = sum(not r.ok for r in results)
    echo(f"{len(results) - bad}/{len(results)} checks passed in {time.perf_counter() - t0:.1f} s")
    return 1 if bad else 0
