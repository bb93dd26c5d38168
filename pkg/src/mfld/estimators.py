"""Drift estimators: full gradient, mini-batch SGD, and SVRG.

One batch is drawn per step and shared by every particle. Batch draws use
their own noise stream so switching estimators never changes the Gaussian
noise sequence of a run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import NoiseSource, Stream, check_finite
from .functionals import MeanFieldModel, Regularizer, positions_of

__all__ = [
    "EstimatorConfig",
    "SvrgState",
    "Estimator",
    "draw_batch",
    "sgd_drift",
    "svrg_drift",
    "refresh_anchor",
    "variance_probe",
    "xi_factor",
]

KINDS = ("full", "sgd", "svrg")
WITH_REPLACEMENT = "with_replacement"
WITHOUT_REPLACEMENT = "without_replacement"


@dataclass(frozen=True)
class EstimatorConfig:
    kind: str = "full"
    batch_size: int = 1
    refresh_period: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown estimator {self.kind!r}; choose from {KINDS}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.refresh_period < 1:
            raise ValueError("refresh_period must be >= 1")

    @property
    def batch_mode(self) -> str:
        return WITHOUT_REPLACEMENT if self.kind == "svrg" else WITH_REPLACEMENT

    def validate_for(self, model: MeanFieldModel) -> None:
        n = model.n_data()
        if self.kind != "full" and n < 1:
            raise ValueError(f"{self.kind} needs a model with per-datum gradients")
        if self.kind == "svrg" and self.batch_size > n:
            raise ValueError(f"svrg samples without duplication: batch_size {self.batch_size} > n = {n}")


@dataclass
class SvrgState:
    """Anchor snapshot: positions and the loss part of the full drift there."""

    anchor_positions: np.ndarray
    anchor_full_grads: np.ndarray
    anchor_step: int


def xi_factor(n: int, B: int) -> float:
    """(n - B) / (B (n - 1)); zero when the batch is the whole dataset."""
    if n == 1:
        return 0.0
    return (n - B) / (B * (n - 1))


def draw_batch(source: NoiseSource, k: int, B: int, n: int, mode: str = WITH_REPLACEMENT, sub: int = 0, stream: int = Stream.BATCH) -> np.ndarray:
    """Batch indices for step ``k``; ``sub`` separates repeated draws at one step."""
    if mode == WITH_REPLACEMENT:
        u = source.uniforms(k, B, sub=sub, stream=stream)
        return np.minimum((u * n).astype(np.int64), n - 1)
    if mode != WITHOUT_REPLACEMENT:
        raise ValueError(f"unknown batch mode {mode!r}")
    if B > n:
        raise ValueError(f"cannot draw {B} distinct indices from {n}")
    # partial Fisher-Yates
    u = source.uniforms(k, B, sub=sub, stream=stream)
    perm = np.arange(n, dtype=np.int64)
    for t in range(B):
        j = t + min(int(u[t] * (n - t)), n - t - 1)
        perm[t], perm[j] = perm[j], perm[t]
    return perm[:B].copy()


def _rows(X, i):
    return X if i is None else X[i]


def sgd_drift(model: MeanFieldModel, reg: Regularizer, e, i, batch) -> np.ndarray:
    """Batch mean of per-datum gradients plus the regularizer gradient."""
    X = positions_of(e)
    batch = np.asarray(batch, dtype=np.int64)
    n = model.n_data()
    if batch.size == 0 or batch.min() < 0 or batch.max() >= n:
        raise IndexError(f"batch indices must lie in [0, {n})")
    x = _rows(X, i)
    v = model.batch_grad(X, x, batch) + reg.grad(x)
    check_finite(v, "sgd drift", step=getattr(e, "step", None))
    return v


def refresh_anchor(model: MeanFieldModel, e, step: int | None = None) -> SvrgState:
    X = positions_of(e).copy()
    step = getattr(e, "step", 0) if step is None else step
    return SvrgState(X, model.grad_first_variation(X, X), step)


def svrg_drift(model: MeanFieldModel, reg: Regularizer, e, i, batch, state: SvrgState | None) -> np.ndarray:
    """Control-variate drift around the anchor.

    (1/B) sum_j [g_j(current measure, X^i) - g_j(anchor measure, anchor X^i)]
    + full anchor gradient at anchor X^i + grad r(X^i).
    """
    if state is None:
        raise ValueError("svrg drift needs an initialised anchor (call refresh_anchor first)")
    X = positions_of(e)
    step = getattr(e, "step", None)
    if state.anchor_positions.shape != X.shape:
        raise ValueError("svrg anchor does not match the ensemble shape")
    if step is not None and state.anchor_step > step:
        raise ValueError(f"svrg anchor from step {state.anchor_step} is ahead of step {step}")
    batch = np.asarray(batch, dtype=np.int64)
    A = state.anchor_positions
    x = _rows(X, i)
    xa = _rows(A, i)
    v = (
        model.batch_grad(X, x, batch)
        - model.batch_grad(A, xa, batch)
        + _rows(state.anchor_full_grads, i)
        + reg.grad(x)
    )
    check_finite(v, "svrg drift", step=step)
    return v


class Estimator:
    """Stateful per-run drift producer.

    ``prepare(X, k)`` draws the shared batch (and refreshes the SVRG anchor
    when k is a multiple of the refresh period); ``drift(X, rows)`` then
    evaluates any subset of particles against that step's batch.
    """

    def __init__(self, config: EstimatorConfig, model: MeanFieldModel, reg: Regularizer, source: NoiseSource):
        config.validate_for(model)
        self.config = config
        self.model = model
        self.reg = reg
        self.source = source
        self.state: SvrgState | None = None
        self._batch = None
        self._k = None

    def prepare(self, X: np.ndarray, k: int) -> None:
        cfg = self.config
        self._k = k
        self._batch = None
        if cfg.kind == "full":
            return
        if cfg.kind == "svrg" and k % cfg.refresh_period == 0:
            self.state = SvrgState(X.copy(), self.model.grad_first_variation(X, X), k)
            return
        self._batch = draw_batch(self.source, k, cfg.batch_size, self.model.n_data(), cfg.batch_mode)

    @property
    def batch(self):
        return self._batch

    def drift(self, X: np.ndarray, rows=None) -> np.ndarray:
        model, reg = self.model, self.reg
        x = _rows(X, rows)
        if self._batch is None:
            if self.config.kind == "svrg":
                # refresh step: exact drift from the stored anchor gradients
                return _rows(self.state.anchor_full_grads, rows) + reg.grad(x)
            return model.grad_first_variation(X, x) + reg.grad(x)
        if self.config.kind == "sgd":
            return model.batch_grad(X, x, self._batch) + reg.grad(x)
        A = self.state.anchor_positions
        return (
            model.batch_grad(X, x, self._batch)
            - model.batch_grad(A, _rows(A, rows), self._batch)
            + _rows(self.state.anchor_full_grads, rows)
            + reg.grad(x)
        )


def variance_probe(
    model: MeanFieldModel,
    reg: Regularizer,
    e,
    i,
    config: EstimatorConfig,
    trials: int,
    state: SvrgState | None = None,
    source: NoiseSource | None = None,
    k: int | None = None,
) -> float:
    """Mean of ||v - full drift||^2 over ``trials`` independent batch draws.

    With ``i=None`` the squared error is also averaged over particles.
    Draws come from the probe stream, never from the run's batch stream.
    """
    if trials < 2:
        raise ValueError("variance probe needs at least 2 trials")
    if config.kind == "full":
        return 0.0
    X = positions_of(e)
    k = getattr(e, "step", 0) if k is None else k
    source = source or NoiseSource(0)
    x = _rows(X, i)
    exact = model.grad_first_variation(X, x) + reg.grad(x)
    n = model.n_data()
    total = 0.0
    for t in range(trials):
        batch = draw_batch(source, k, config.batch_size, n, config.batch_mode, sub=t, stream=Stream.PROBE)
        if config.kind == "sgd":
            v = sgd_drift(model, reg, e, i, batch)
        else:
            v = svrg_drift(model, reg, e, i, batch, state)
        diff = np.atleast_2d(v - exact)
        total += float(np.mean(np.sum(diff * diff, axis=1)))
    return total / trials
