"""Kernel Stein discrepancy to a target known through its score."""

from __future__ import annotations

import numpy as np

from ..functionals import MeanFieldModel, ModelConstants, as_points, positions_of


class GaussianTarget:
    """Isotropic N(mean, std^2 I); score(z) = -(z - mean) / std^2."""

    def __init__(self, mean, std: float = 1.0, dim: int | None = None):
        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        if dim is not None and mean.size == 1:
            mean = np.full(dim, mean[0])
        self.mean = mean
        self.std = float(std)
        self.dim = mean.size

    def score(self, z):
        return -(z - self.mean) / self.std**2

    def score_jacobian(self, z):
        d = self.dim
        return np.broadcast_to(-np.eye(d) / self.std**2, (z.shape[0], d, d))

    def sample(self, noise: np.ndarray) -> np.ndarray:
        return self.mean + self.std * noise


class GaussianMixtureTarget:
    """sum_c w_c N(m_c, s_c^2 I) with analytic score and score Jacobian."""

    def __init__(self, means, stds, weights=None):
        self.means = np.atleast_2d(np.asarray(means, dtype=np.float64))
        if self.means.shape[0] == 1 and np.ndim(means) == 1:
            self.means = self.means.T
        C, d = self.means.shape
        self.stds = np.broadcast_to(np.asarray(stds, dtype=np.float64), (C,)).copy()
        w = np.ones(C) if weights is None else np.asarray(weights, dtype=np.float64)
        self.weights = w / w.sum()
        self.dim = d

    def _resp(self, z):
        diff = z[:, None, :] - self.means[None, :, :]  # M x C x d
        s2 = self.stds**2
        logp = (
            np.log(self.weights)[None, :]
            - 0.5 * np.sum(diff * diff, axis=-1) / s2[None, :]
            - 0.5 * self.dim * np.log(2 * np.pi * s2)[None, :]
        )
        logp -= logp.max(axis=1, keepdims=True)
        p = np.exp(logp)
        return p / p.sum(axis=1, keepdims=True), diff, s2

    def score(self, z):
        resp, diff, s2 = self._resp(z)
        comp = -diff / s2[None, :, None]
        return np.sum(resp[:, :, None] * comp, axis=1)

    def score_jacobian(self, z):
        # grad s = sum_c r_c (grad s_c) + sum_c r_c s_c s_c^T - s s^T
        resp, diff, s2 = self._resp(z)
        comp = -diff / s2[None, :, None]
        s = np.sum(resp[:, :, None] * comp, axis=1)
        d = self.dim
        hess_c = -np.einsum("mc,c->m", resp, 1.0 / s2)[:, None, None] * np.eye(d)[None]
        outer = np.einsum("mc,mca,mcb->mab", resp, comp, comp)
        return hess_c + outer - s[:, :, None] * s[:, None, :]


class KsdModel(MeanFieldModel):
    """U(mu) = int int W(z, z') dmu dmu with the Stein kernel W of an RBF kernel.

    With u = z - z', h = bandwidth^2 and s = score:
    W = k(z,z') [s(z).s(z') + (s(z) - s(z')).u / h + d / h - ||u||^2 / h^2].
    """

    name = "ksd"

    def __init__(self, target, bandwidth: float = 1.0):
        if bandwidth <= 0:
            raise ValueError("kernel bandwidth must be positive")
        self.target = target
        self.dim = target.dim
        self.bandwidth = float(bandwidth)
        self.h = self.bandwidth**2

    def _parts(self, z, zp):
        u = z[:, None, :] - zp[None, :, :]
        sq = np.sum(u * u, axis=-1)
        k = np.exp(-sq / (2.0 * self.h))
        s = self.target.score(z)
        sp = self.target.score(zp)
        return u, sq, k, s, sp

    def stein_matrix(self, z, zp) -> np.ndarray:
        z, zp = np.atleast_2d(z), np.atleast_2d(zp)
        u, sq, k, s, sp = self._parts(z, zp)
        h, d = self.h, self.dim
        ss = np.sum(s[:, None, :] * sp[None, :, :], axis=-1)
        cross = np.sum((s[:, None, :] - sp[None, :, :]) * u, axis=-1) / h
        return k * (ss + cross + d / h - sq / h**2)

    def stein_kernel(self, z, zp) -> float:
        return float(self.stein_matrix(np.atleast_1d(z)[None, :], np.atleast_1d(zp)[None, :])[0, 0])

    def stein_grad_mean(self, z, zp) -> np.ndarray:
        """Mean over rows of zp of grad_z W(z, z'); shape M x d."""
        u, sq, k, s, sp = self._parts(z, zp)
        h, d = self.h, self.dim
        J = self.target.score_jacobian(z)  # M x d x d, J[a, b] = ds_a / dz_b
        ss = np.sum(s[:, None, :] * sp[None, :, :], axis=-1)
        ds = s[:, None, :] - sp[None, :, :]
        g = ss + np.sum(ds * u, axis=-1) / h + d / h - sq / h**2
        JT_sp = np.einsum("mab,nb->mna", np.swapaxes(J, 1, 2), sp)
        JT_u = np.einsum("mba,mnb->mna", J, u)
        dg = JT_sp + (JT_u + ds) / h - 2.0 * u / h**2
        grad = k[:, :, None] * (-(u / h) * g[:, :, None] + dg)
        return np.mean(grad, axis=1)

    def u_value(self, X) -> float:
        X = positions_of(X)
        return float(np.mean(self.stein_matrix(X, X)))

    def u_value_weighted(self, points, weights) -> float:
        w = np.asarray(weights, dtype=np.float64)
        return float(w @ self.stein_matrix(points, points) @ w)

    def first_variation(self, X, x):
        x, single = as_points(x)
        v = 2.0 * np.mean(self.stein_matrix(x, positions_of(X)), axis=1)
        return v[0] if single else v

    def grad_first_variation(self, X, x):
        x, single = as_points(x)
        g = 2.0 * self.stein_grad_mean(x, positions_of(X))
        return g[0] if single else g

    def constants(self) -> ModelConstants:
        # Gaussian scores grow linearly, so grad W is unbounded on R^d.
        return ModelConstants(
            R=np.inf,
            L=np.inf,
            c_L=0.0,
            value_bound=None,
            notes="Stein kernel of an RBF with a linearly growing score is unbounded; theory constants undefined",
        )
