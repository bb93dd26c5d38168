"""Linear functionals U(mu) = E_mu[V]; MFLD reduces to plain Langevin."""

from __future__ import annotations

import numpy as np

from ..functionals import MeanFieldModel, ModelConstants, as_points, positions_of


class LinearModel(MeanFieldModel):
    """V(x) = (1/n) sum_j V_j(x) with quadratic terms.

    Two forms: ``quadratic(A, b)`` is a single term 1/2 x^T A x + b^T x;
    ``finite_sum(centers, curvatures)`` has V_j(x) = 1/2 a_j ||x - c_j||^2.
    """

    name = "linear"

    def __init__(self, A=None, b=None, centers=None, curvatures=None):
        if centers is not None:
            self.centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
            n, d = self.centers.shape
            if curvatures is None:
                curvatures = np.ones(n)
            self.curvatures = np.asarray(curvatures, dtype=np.float64).reshape(n)
            self.A = None
            self.b = None
            self.dim = d
        else:
            A = np.atleast_2d(np.asarray(A, dtype=np.float64))
            self.A = 0.5 * (A + A.T)
            self.dim = self.A.shape[0]
            self.b = np.zeros(self.dim) if b is None else np.asarray(b, dtype=np.float64).reshape(self.dim)
            self.centers = None
            self.curvatures = None

    @classmethod
    def quadratic(cls, A, b=None) -> "LinearModel":
        return cls(A=A, b=b)

    @classmethod
    def isotropic(cls, dim: int, curvature: float = 1.0, shift=None) -> "LinearModel":
        return cls(A=curvature * np.eye(dim), b=shift)

    @classmethod
    def finite_sum(cls, centers, curvatures=None) -> "LinearModel":
        return cls(centers=centers, curvatures=curvatures)

    @property
    def is_finite_sum(self) -> bool:
        return self.centers is not None

    def potential(self, x):
        x, single = as_points(x)
        if self.is_finite_sum:
            diff = x[:, None, :] - self.centers[None, :, :]
            v = 0.5 * np.mean(self.curvatures[None, :] * np.sum(diff * diff, axis=-1), axis=1)
        else:
            v = 0.5 * np.sum((x @ self.A.T) * x, axis=1) + x @ self.b
        return v[0] if single else v

    def n_data(self) -> int:
        return self.centers.shape[0] if self.is_finite_sum else 1

    def u_value(self, X) -> float:
        return float(np.mean(self.potential(positions_of(X))))

    def u_value_weighted(self, points, weights) -> float:
        return float(np.dot(weights, self.potential(points)))

    def first_variation(self, X, x):
        return self.potential(x)

    def grad_first_variation(self, X, x):
        x, single = as_points(x)
        if self.is_finite_sum:
            a = self.curvatures
            # mean_j a_j (x - c_j) = mean(a) x - mean(a_j c_j)
            g = np.mean(a) * x - np.mean(a[:, None] * self.centers, axis=0)
        else:
            g = x @ self.A.T + self.b
        return g[0] if single else g

    def folded_grad(self, x):
        x, single = as_points(x)
        g = np.mean(self.curvatures) * x if self.is_finite_sum else x @ self.A
        return g[0] if single else g

    def per_datum_grad(self, X, x, j: int):
        if not self.is_finite_sum:
            return super().per_datum_grad(X, x, j)
        x, single = as_points(x)
        g = self.curvatures[j] * (x - self.centers[j])
        return g[0] if single else g

    def batch_grad(self, X, x, batch):
        if not self.is_finite_sum:
            return super().batch_grad(X, x, batch)
        x, single = as_points(x)
        batch = np.asarray(batch, dtype=np.int64)
        a = self.curvatures[batch]
        g = np.mean(a) * x - np.mean(a[:, None] * self.centers[batch], axis=0)
        return g[0] if single else g

    def constants(self) -> ModelConstants:
        # The quadratic part is handed to the regularizer bounds; what is left
        # of the gradient is the constant vector below.
        if self.is_finite_sum:
            abar = float(np.mean(self.curvatures))
            rest = np.mean(self.curvatures[:, None] * self.centers, axis=0)
            curv = (abar, abar)
        else:
            eig = np.linalg.eigvalsh(self.A)
            curv = (float(eig[0]), float(eig[-1]))
            rest = self.b
        R = float(np.linalg.norm(rest))
        return ModelConstants(
            R=R,
            L=0.0,
            c_L=0.0,
            value_bound=None,
            curvature=curv,
            notes="quadratic part folded into regularizer bounds; R = norm of the residual constant gradient",
        )

    def per_datum_constants(self) -> ModelConstants:
        """Per-term constants; the residual gradients are unbounded, so R = inf."""
        if not self.is_finite_sum:
            return self.constants()
        return ModelConstants(R=np.inf, L=float(np.max(self.curvatures)))
