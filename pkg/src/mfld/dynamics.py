"""Discrete mean-field Langevin update and the run loop.

X_{k+1}^i = X_k^i - eta_k v_k^i + sqrt(2 lambda eta_k) xi_k^i, with all
drifts evaluated against the pre-step ensemble (synchronous update).
"""

from __future__ import annotations

import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .ensemble import NoiseSource, ParticleEnsemble, Stream, check_finite, second_moment
from .estimators import Estimator, EstimatorConfig, variance_probe
from .functionals import MeanFieldModel, Regularizer, effective_bounds

__all__ = [
    "DynamicsParams",
    "DiagnosticsSet",
    "TraceRecord",
    "StepSizeWarning",
    "schedule_eta",
    "step",
    "run",
    "resolve_threads",
    "TRACE_COLUMNS",
]


class StepSizeWarning(UserWarning):
    pass


@dataclass
class DynamicsParams:
    """Temperature, step sizes and horizon.

    ``eta`` is either a float (constant schedule) or a sequence of per-step
    values. ``deterministic=True`` is the only way to run with lambda = 0.
    """

    lam: float
    eta: float | list = 0.01
    max_steps: int = 1000
    seed: int = 0
    deterministic: bool = False
    # step-size safety bounds; set by run() from the model/regularizer
    lam1: float | None = None
    lam2: float | None = None
    alpha: float | None = None
    warned: bool = field(default=False, compare=False)

    def __post_init__(self):
        if self.lam < 0 or (self.lam == 0 and not self.deterministic):
            raise ValueError("lambda must be > 0 (lambda = 0 only in deterministic mode)")
        etas = self.eta if isinstance(self.eta, (list, tuple, np.ndarray)) else [self.eta]
        if any(not (e > 0) for e in etas):
            raise ValueError("step sizes must be positive")
        if self.max_steps < 0:
            raise ValueError("max_steps must be nonnegative")


def schedule_eta(params: DynamicsParams, k: int) -> float:
    """Step size at step k; warns once if a theory step-size bound is exceeded."""
    if isinstance(params.eta, (list, tuple, np.ndarray)):
        if k >= len(params.eta):
            raise IndexError(f"step-size sequence exhausted at step {k} (length {len(params.eta)})")
        eta = float(params.eta[k])
    else:
        eta = float(params.eta)
    if not params.warned:
        msgs = []
        if params.lam1 is not None and params.lam2:
            cap = params.lam1 / (4.0 * params.lam2)
            if eta > cap:
                msgs.append(f"eta={eta:g} exceeds lam1/(4 lam2)={cap:g}")
        if params.alpha is not None and params.lam * params.alpha * eta > 0.25:
            msgs.append(f"lambda*alpha*eta={params.lam * params.alpha * eta:g} exceeds 1/4")
        if msgs:
            params.warned = True
            warnings.warn("; ".join(msgs), StepSizeWarning, stacklevel=2)
    return eta


def resolve_threads(threads) -> int:
    """'auto'/None -> MFLD_THREADS or the logical core count."""
    if threads in (None, "auto", 0):
        env = os.environ.get("MFLD_THREADS")
        if env and env != "auto":
            return max(1, int(env))
        return os.cpu_count() or 1
    return max(1, int(threads))


def _drifts(estimator: Estimator, X: np.ndarray, threads: int, pool=None) -> np.ndarray:
    N = X.shape[0]
    if threads <= 1 or N < 2 * threads:
        return estimator.drift(X)
    bounds = np.linspace(0, N, threads + 1).astype(int)
    chunks = [np.arange(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if pool is None:
        with ThreadPoolExecutor(threads) as p:
            parts = list(p.map(lambda r: estimator.drift(X, r), chunks))
    else:
        parts = list(pool.map(lambda r: estimator.drift(X, r), chunks))
    return np.vstack(parts)


def step(
    e: ParticleEnsemble,
    model: MeanFieldModel,
    reg: Regularizer,
    estimator: Estimator,
    params: DynamicsParams,
    k: int | None = None,
    noise: np.ndarray | None = None,
    threads: int = 1,
    pool=None,
) -> ParticleEnsemble:
    """One synchronous MFLD step; returns a new ensemble at step k + 1.

    ``noise`` overrides the Gaussian draws (tests); otherwise they come from
    the counter-based source keyed by ``params.seed``.
    """
    k = e.step if k is None else k
    if e.step != k:
        raise ValueError(f"ensemble is at step {e.step}, asked to advance step {k}")
    X = e.positions
    eta = schedule_eta(params, k)
    estimator.prepare(X, k)
    v = _drifts(estimator, X, threads, pool)
    check_finite(v, "drift", step=k)
    new = X - eta * v
    if params.lam > 0:
        if noise is None:
            noise = NoiseSource(params.seed).normals(k, X.shape[0], X.shape[1], Stream.NOISE)
        new = new + math.sqrt(2.0 * params.lam * eta) * noise
    check_finite(new, "positions", step=k + 1)
    return ParticleEnsemble(new, k + 1)


TRACE_COLUMNS = (
    "step",
    "wall_time",
    "energy",
    "entropy_estimate",
    "objective_estimate",
    "mean_grad_norm",
    "second_moment",
    "sigma_v_probe",
    "model_metric",
)


@dataclass
class TraceRecord:
    step: int
    wall_time: float | None
    energy: float
    entropy_estimate: float | None
    objective_estimate: float | None
    mean_grad_norm: float
    second_moment: float
    sigma_v_probe: float | None
    model_metric: float

    def as_row(self) -> list:
        return [getattr(self, f.name) for f in fields(self)]


@dataclass
class DiagnosticsSet:
    """Which optional trace columns to compute."""

    entropy: bool = True
    sigma_v_probe: bool = False
    probe_trials: int = 8
    wall_time: bool = False


def energy(model: MeanFieldModel, reg: Regularizer, X: np.ndarray) -> float:
    """F(mu_X) = U(mu_X) + mean r(X^i)."""
    return model.u_value(X) + float(np.mean(reg.value(X)))


def _record(e, model, reg, params, estimator, diag, t0) -> TraceRecord:
    from .diagnostics import entropy_estimate

    X = e.positions
    en = energy(model, reg, X)
    full = model.grad_first_variation(X, X) + reg.grad(X)
    gnorm = float(np.mean(np.linalg.norm(full, axis=1)))
    ent = obj = None
    N, d = X.shape
    if diag.entropy and N >= d + 2:
        ent = entropy_estimate(X)
        # the objective carries lambda times the negative entropy
        obj = en - params.lam * ent
    probe = None
    if diag.sigma_v_probe:
        cfg = estimator.config
        state = estimator.state
        if cfg.kind == "svrg" and state is None:
            probe = 0.0
        else:
            probe = variance_probe(
                model, reg, e, None, cfg, diag.probe_trials, state=state, source=NoiseSource(params.seed), k=e.step
            )
    wall = time.perf_counter() - t0 if diag.wall_time else None
    return TraceRecord(e.step, wall, en, ent, obj, gnorm, second_moment(X), probe, model.metric(X))


def run(
    e0: ParticleEnsemble,
    model: MeanFieldModel,
    reg: Regularizer,
    estimator: EstimatorConfig | Estimator,
    params: DynamicsParams,
    log_every: int = 100,
    diagnostics: DiagnosticsSet | None = None,
    threads=1,
    callback=None,
) -> tuple[list[TraceRecord], ParticleEnsemble]:
    """Run ``params.max_steps`` steps, logging at multiples of ``log_every`` and at the end."""
    from .diagnostics import lsi_bounds

    if log_every < 1:
        raise ValueError("log_every must be >= 1")
    diag = diagnostics or DiagnosticsSet()
    if isinstance(estimator, EstimatorConfig):
        estimator = Estimator(estimator, model, reg, NoiseSource(params.seed))
    if params.lam1 is None:
        b = effective_bounds(model, reg)
        params.lam1, params.lam2 = b.lam1, b.lam2
        if b.lam1 > 0 and params.lam > 0:
            params.alpha = lsi_bounds(model, reg, params.lam).alpha
    threads = resolve_threads(threads)
    t0 = time.perf_counter()
    e = e0
    trace = [_record(e, model, reg, params, estimator, diag, t0)]
    K = params.max_steps
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        for k in range(e0.step, e0.step + K):
            e = step(e, model, reg, estimator, params, k, threads=threads, pool=pool)
            done = e.step - e0.step
            if done % log_every == 0 or done == K:
                trace.append(_record(e, model, reg, params, estimator, diag, t0))
                if callback is not None:
                    callback(trace[-1])
    finally:
        if pool is not None:
            pool.shutdown()
    return trace, e
