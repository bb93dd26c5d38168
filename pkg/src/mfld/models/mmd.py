"""Density fitting by MMD with a Gaussian RBF kernel."""

from __future__ import annotations

import numpy as np

from ..functionals import MeanFieldModel, ModelConstants, as_points, positions_of

PARAMETERIZATIONS = ("dirac", "gaussian_mixture")


def rbf(x, y, bw2: float, amp: float = 1.0) -> np.ndarray:
    """amp * exp(-||x - y||^2 / (2 bw2)) for all row pairs; shape M x K."""
    diff = x[:, None, :] - y[None, :, :]
    return amp * np.exp(-np.sum(diff * diff, axis=-1) / (2.0 * bw2))


def rbf_grad_mean(x, y, bw2: float, amp: float = 1.0, weights=None) -> np.ndarray:
    """Weighted mean over rows y of grad_x k(x, y); shape M x d."""
    diff = x[:, None, :] - y[None, :, :]
    k = amp * np.exp(-np.sum(diff * diff, axis=-1) / (2.0 * bw2))
    g = -(diff / bw2) * k[:, :, None]
    if weights is None:
        return np.mean(g, axis=1)
    return np.sum(g * weights[None, :, None], axis=1)


class MmdModel(MeanFieldModel):
    """U(mu) = MMD^2(f_mu, data) minus the data-data constant.

    With ``dirac`` particles the kernel is used directly. With
    ``gaussian_mixture`` each particle is N(x, mixture_std^2 I) and the
    smoothed kernels are RBFs with bandwidth^2 inflated by mixture_std^2 per
    convolution and amplitude (bw^2 / inflated bw^2)^(d/2).
    """

    name = "mmd"

    def __init__(self, data, bandwidth: float = 1.0, parameterization: str = "dirac", mixture_std: float = 0.0):
        if bandwidth <= 0:
            raise ValueError("kernel bandwidth must be positive")
        if parameterization not in PARAMETERIZATIONS:
            raise ValueError(f"unknown parameterization {parameterization!r}")
        if parameterization == "gaussian_mixture" and mixture_std <= 0:
            raise ValueError("gaussian_mixture needs mixture_std > 0")
        self.data = np.atleast_2d(np.asarray(data, dtype=np.float64))
        if self.data.shape[0] == 1 and np.ndim(data) == 1:
            self.data = self.data.T
        self.dim = self.data.shape[1]
        self.bandwidth = float(bandwidth)
        self.parameterization = parameterization
        sg2 = mixture_std**2 if parameterization == "gaussian_mixture" else 0.0
        self.mixture_std = float(mixture_std) if sg2 else 0.0
        bw2 = self.bandwidth**2
        d = self.dim
        self.bw2_data = bw2
        self.bw2_cross = bw2 + sg2  # particle vs datum: one convolution
        self.bw2_self = bw2 + 2 * sg2  # particle vs particle: two convolutions
        self.amp_cross = (bw2 / self.bw2_cross) ** (d / 2)
        self.amp_self = (bw2 / self.bw2_self) ** (d / 2)
        self._data_const = None

    def n_data(self) -> int:
        return self.data.shape[0]

    def data_constant(self) -> float:
        """(1/n^2) sum_ij k(z_i, z_j), the term omitted from the objective."""
        if self._data_const is None:
            self._data_const = float(np.mean(rbf(self.data, self.data, self.bw2_data)))
        return self._data_const

    def u_value(self, X) -> float:
        X = positions_of(X)
        self_term = np.mean(rbf(X, X, self.bw2_self, self.amp_self))
        cross = np.mean(rbf(X, self.data, self.bw2_cross, self.amp_cross))
        return float(self_term - 2.0 * cross)

    def u_value_weighted(self, points, weights) -> float:
        w = np.asarray(weights, dtype=np.float64)
        self_term = w @ rbf(points, points, self.bw2_self, self.amp_self) @ w
        cross = w @ np.mean(rbf(points, self.data, self.bw2_cross, self.amp_cross), axis=1)
        return float(self_term - 2.0 * cross)

    def mmd_squared(self, X) -> float:
        """Full MMD^2 including the data-data term."""
        return self.u_value(X) + self.data_constant()

    def metric(self, X) -> float:
        return self.mmd_squared(X)

    def first_variation(self, X, x):
        X = positions_of(X)
        x, single = as_points(x)
        v = 2.0 * np.mean(rbf(x, X, self.bw2_self, self.amp_self), axis=1) - 2.0 * np.mean(
            rbf(x, self.data, self.bw2_cross, self.amp_cross), axis=1
        )
        return v[0] if single else v

    def _particle_grad(self, X, x):
        return 2.0 * rbf_grad_mean(x, positions_of(X), self.bw2_self, self.amp_self)

    def grad_first_variation(self, X, x):
        x, single = as_points(x)
        g = self._particle_grad(X, x) - 2.0 * rbf_grad_mean(x, self.data, self.bw2_cross, self.amp_cross)
        return g[0] if single else g

    def per_datum_grad(self, X, x, j: int):
        x, single = as_points(x)
        g = self._particle_grad(X, x) - 2.0 * rbf_grad_mean(x, self.data[j : j + 1], self.bw2_cross, self.amp_cross)
        return g[0] if single else g

    def batch_grad(self, X, x, batch):
        x, single = as_points(x)
        batch = np.asarray(batch, dtype=np.int64)
        w = np.bincount(batch, minlength=self.n_data()) / batch.size
        used = np.nonzero(w)[0]
        g = self._particle_grad(X, x) - 2.0 * rbf_grad_mean(
            x, self.data[used], self.bw2_cross, self.amp_cross, weights=w[used]
        )
        return g[0] if single else g

    def constants(self) -> ModelConstants:
        # sup_r (r / s^2) exp(-r^2 / 2 s^2) = exp(-1/2) / s ; ||hess k|| <= amp / s^2
        e = np.exp(-0.5)
        s_self, s_cross = np.sqrt(self.bw2_self), np.sqrt(self.bw2_cross)
        R = 2 * self.amp_self * e / s_self + 2 * self.amp_cross * e / s_cross
        L = 2 * self.amp_self / self.bw2_self + 2 * self.amp_cross / self.bw2_cross
        value_bound = 2 * self.amp_self + 2 * self.amp_cross
        return ModelConstants(
            R=float(R),
            L=float(L),
            c_L=0.0,
            value_bound=float(value_bound),
            notes="RBF bounds: sup||grad k|| = amp e^{-1/2}/s, ||hess k|| <= amp/s^2",
        )
