"""Concrete mean-field functionals."""

import numpy as np

from .ksd import GaussianMixtureTarget, GaussianTarget, KsdModel
from .linear import LinearModel
from .mmd import MmdModel, rbf
from .network import TwoLayerNetModel, xor_dataset

__all__ = [
    "LinearModel",
    "TwoLayerNetModel",
    "MmdModel",
    "KsdModel",
    "GaussianTarget",
    "GaussianMixtureTarget",
    "xor_dataset",
    "rbf",
    "linear_grad",
    "nn_predict",
    "nn_grad_first_variation",
    "mmd_objective",
    "mmd_grad_first_variation",
    "stein_kernel",
    "ksd_objective",
    "ksd_grad_first_variation",
]


def linear_grad(m: LinearModel, x):
    return m.grad_first_variation(None, x)


def nn_predict(m: TwoLayerNetModel, e, z) -> float:
    return float(m.predict(e, np.atleast_2d(z))[0])


def nn_grad_first_variation(m: TwoLayerNetModel, e, x):
    return m.grad_first_variation(e, x)


def mmd_objective(m: MmdModel, e) -> float:
    return m.u_value(e)


def mmd_grad_first_variation(m: MmdModel, e, x):
    return m.grad_first_variation(e, x)


def stein_kernel(m: KsdModel, z, zp) -> float:
    return m.stein_kernel(z, zp)


def ksd_objective(m: KsdModel, e) -> float:
    return m.u_value(e)


def ksd_grad_first_variation(m: KsdModel, e, x):
    return m.grad_first_variation(e, x)
