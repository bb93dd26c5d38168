"""Two-layer network in the mean-field parameterisation.

f_mu(z) = (1/N) sum_i h_{X^i}(z) and U(mu) = (1/n) sum_j loss(f_mu(z_j), y_j).
"""

from __future__ import annotations

import numpy as np

from ..functionals import MeanFieldModel, ModelConstants, as_points, positions_of

NEURONS = ("tanh_dot", "bounded_amp")
LOSSES = ("squared", "logistic")

_DLOSS_CLAMP = 1e12
# max |d/dt sech^2 t| = max |2 sech^2 t tanh t| = 4 / (3 sqrt 3)
_SECH2_LIP = 4.0 / (3.0 * np.sqrt(3.0))


def _sech2(t):
    c = np.cosh(np.clip(t, -350.0, 350.0))
    return 1.0 / (c * c)


class TwoLayerNetModel(MeanFieldModel):
    name = "two_layer_net"

    def __init__(self, inputs, labels, neuron: str = "tanh_dot", loss: str = "squared"):
        if neuron not in NEURONS:
            raise ValueError(f"unknown neuron {neuron!r}; choose from {NEURONS}")
        if loss not in LOSSES:
            raise ValueError(f"unknown loss {loss!r}; choose from {LOSSES}")
        self.Z = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        self.y = np.asarray(labels, dtype=np.float64).reshape(-1)
        if self.Z.shape[0] != self.y.shape[0] or self.y.shape[0] < 1:
            raise ValueError("need n >= 1 inputs with one label each")
        self.neuron = neuron
        self.loss = loss
        p = self.Z.shape[1]
        self.dim = p if neuron == "tanh_dot" else p + 1

    # neurons -------------------------------------------------------------

    def _pre(self, x, Z):
        # explicit broadcast-sum instead of matmul keeps each row's result
        # independent of how many rows are evaluated together
        w = x if self.neuron == "tanh_dot" else x[:, 1:]
        return np.sum(w[:, None, :] * Z[None, :, :], axis=-1)

    def neuron_values(self, x, Z=None) -> np.ndarray:
        """h_x(z) for each row of x (M x d) and input of Z; shape M x n."""
        Z = self.Z if Z is None else np.atleast_2d(Z)
        t = np.tanh(self._pre(x, Z))
        if self.neuron == "tanh_dot":
            return t
        return np.tanh(x[:, :1]) * t

    def neuron_grads(self, x, Z=None) -> np.ndarray:
        """grad_x h_x(z); shape M x n x d."""
        Z = self.Z if Z is None else np.atleast_2d(Z)
        pre = self._pre(x, Z)
        s2 = _sech2(pre)
        if self.neuron == "tanh_dot":
            return s2[:, :, None] * Z[None, :, :]
        amp = np.tanh(x[:, :1])  # M x 1
        g_r = _sech2(x[:, :1]) * np.tanh(pre)  # M x n
        g_w = (amp * s2)[:, :, None] * Z[None, :, :]
        return np.concatenate([g_r[:, :, None], g_w], axis=2)

    def predict(self, X, Z=None) -> np.ndarray:
        """f_mu(z) at each input (defaults to the training inputs)."""
        X = positions_of(X)
        return np.mean(self.neuron_values(X, Z), axis=0)

    def predict_weighted(self, points, weights, Z=None) -> np.ndarray:
        return np.asarray(weights) @ self.neuron_values(np.atleast_2d(points), Z)

    # loss ---------------------------------------------------------------

    def _loss(self, f):
        if self.loss == "squared":
            return (f - self.y) ** 2
        return np.logaddexp(0.0, -self.y * f)

    def _dloss(self, f):
        if self.loss == "squared":
            g = 2.0 * (f - self.y)
        else:
            # d/df log(1 + exp(-y f)) = -y * sigmoid(-y f)
            g = -self.y * 0.5 * (1.0 - np.tanh(0.5 * self.y * f))
        return np.clip(g, -_DLOSS_CLAMP, _DLOSS_CLAMP)

    # contract -----------------------------------------------------------

    def n_data(self) -> int:
        return self.y.shape[0]

    def u_value(self, X) -> float:
        return float(np.mean(self._loss(self.predict(X))))

    def u_value_weighted(self, points, weights) -> float:
        return float(np.mean(self._loss(self.predict_weighted(points, weights))))

    def first_variation(self, X, x):
        x, single = as_points(x)
        dl = self._dloss(self.predict(X))
        v = np.mean(self.neuron_values(x) * dl[None, :], axis=1)
        return v[0] if single else v

    def grad_first_variation(self, X, x):
        x, single = as_points(x)
        dl = self._dloss(self.predict(X))
        g = np.mean(self.neuron_grads(x) * dl[None, :, None], axis=1)
        return g[0] if single else g

    def per_datum_grad(self, X, x, j: int):
        x, single = as_points(x)
        dl = self._dloss(self.predict(X))[j]
        g = dl * self.neuron_grads(x, self.Z[j : j + 1])[:, 0, :]
        return g[0] if single else g

    def batch_grad(self, X, x, batch):
        x, single = as_points(x)
        batch = np.asarray(batch, dtype=np.int64)
        w = np.bincount(batch, minlength=self.n_data()) / batch.size
        used = np.nonzero(w)[0]
        dl = self._dloss(self.predict(X))[used] * w[used]
        g = np.sum(self.neuron_grads(x, self.Z[used]) * dl[None, :, None], axis=1)
        return g[0] if single else g

    def training_loss(self, X) -> float:
        return self.u_value(X)

    def constants(self) -> ModelConstants:
        zmax = float(np.max(np.linalg.norm(self.Z, axis=1)))
        ymax = float(np.max(np.abs(self.y)))
        if self.loss == "squared":
            dl_max, d2l_max = 2.0 * (1.0 + ymax), 2.0
        else:
            dl_max, d2l_max = ymax, 0.25 * ymax**2
        if self.neuron == "tanh_dot":
            grad_h = zmax
            hess_h = _SECH2_LIP * zmax**2
        else:
            grad_h = float(np.sqrt(1.0 + zmax**2))
            hess_h = float(np.sqrt(2 * _SECH2_LIP**2 * max(1.0, zmax**4) + 2 * zmax**2))
        R = dl_max * grad_h
        # x-direction: dl_max * ||hess h||; measure direction: loss curvature
        # times (Lipschitz of f in W1 <= grad_h) times grad_h
        L = dl_max * hess_h + d2l_max * grad_h**2
        return ModelConstants(
            R=R,
            L=L,
            c_L=d2l_max,
            value_bound=dl_max,
            notes="R = max|dloss| * max||grad h||; L = max|dloss| * max||hess h|| + max|d2loss| * max||grad h||^2",
        )


def xor_dataset(label_scale: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """The four XOR corners with a bias input; labels +-label_scale."""
    corners = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
    Z = np.hstack([corners, np.ones((4, 1))])
    y = label_scale * corners[:, 0] * corners[:, 1]
    return Z, y
