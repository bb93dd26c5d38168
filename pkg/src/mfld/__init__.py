"""Mean-field Langevin dynamics with full, stochastic and variance-reduced drifts."""

from .diagnostics import (
    entropy_estimate,
    lsi_bounded,
    lsi_lipschitz,
    moment_bound,
    theory_constants,
    wasserstein2_small,
)
from .dynamics import DiagnosticsSet, DynamicsParams, TraceRecord, run, step
from .ensemble import GaussianInit, NoiseSource, ParticleEnsemble, PointCloudInit, init_ensemble, second_moment
from .estimators import Estimator, EstimatorConfig
from .functionals import ModelConstants, Regularizer, full_drift
from .models import GaussianTarget, KsdModel, LinearModel, MmdModel, TwoLayerNetModel

__version__ = "0.1.0"

__all__ = [
    "DiagnosticsSet",
    "DynamicsParams",
    "Estimator",
    "EstimatorConfig",
    "GaussianInit",
    "GaussianTarget",
    "KsdModel",
    "LinearModel",
    "MmdModel",
    "ModelConstants",
    "NoiseSource",
    "ParticleEnsemble",
    "PointCloudInit",
    "Regularizer",
    "TraceRecord",
    "TwoLayerNetModel",
    "entropy_estimate",
    "full_drift",
    "init_ensemble",
    "lsi_bounded",
    "lsi_lipschitz",
    "moment_bound",
    "run",
    "second_moment",
    "step",
    "theory_constants",
    "wasserstein2_small",
]
