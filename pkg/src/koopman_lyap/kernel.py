"""Gaussian kernel and its closed-form derivative stack.

k(x, y) = exp(-||x - y||^2 / (2 sigma^2))

With u = x - y:

    grad_y k         =  (u / sigma^2) k
    grad_x k         = -(u / sigma^2) k
    d2k / dx dy^T    =  (I / sigma^2 - u u^T / sigma^4) k

The cross Hessian is what second-order functional evaluations of the kernel
need; for the Gaussian it is symmetric in its two slots. Matrix variants
evaluate whole blocks at once and are the hot path of Gram assembly; the
scalar variants are convenience wrappers with the same formulas. All methods
are pure, so concurrent use is safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["GaussianKernel", "make_kernel"]


@dataclass(frozen=True)
class GaussianKernel:
    sigma: float
    dim: int

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.dim < 1:
            raise ValueError("dim must be at least 1")

    # -- scalar interface ---------------------------------------------------

    def value(self, x, y) -> float:
        x, y = self._pair(x, y)
        u = x - y
        return float(np.exp(-(u @ u) / (2.0 * self.sigma**2)))

    def grad_y(self, x, y) -> np.ndarray:
        x, y = self._pair(x, y)
        u = x - y
        return (u / self.sigma**2) * self.value(x, y)

    def grad_x(self, x, y) -> np.ndarray:
        return -self.grad_y(x, y)

    def cross_hessian(self, x, y) -> np.ndarray:
        """Matrix of d^2 k / dx_i dy_j, shape (d, d)."""
        x, y = self._pair(x, y)
        u = x - y
        s2 = self.sigma**2
        return (np.eye(self.dim) / s2 - np.outer(u, u) / s2**2) * self.value(x, y)

    # -- block interface ----------------------------------------------------

    def value_matrix(self, X, Y) -> np.ndarray:
        """k(x_i, y_j) for X (m, d), Y (n, d); returns (m, n)."""
        X, Y = self._blocks(X, Y)
        sq = np.sum((X[:, None, :] - Y[None, :, :]) ** 2, axis=-1)
        return np.exp(-sq / (2.0 * self.sigma**2))

    def grad_y_matrix(self, X, Y) -> np.ndarray:
        """(m, n, d) tensor of grad_y k(x_i, y_j)."""
        X, Y = self._blocks(X, Y)
        diff = X[:, None, :] - Y[None, :, :]
        K = np.exp(-np.sum(diff**2, axis=-1) / (2.0 * self.sigma**2))
        return diff / self.sigma**2 * K[:, :, None]

    def grad_x_matrix(self, X, Y) -> np.ndarray:
        return -self.grad_y_matrix(X, Y)

    def cross_hessian_matrix(self, X, Y) -> np.ndarray:
        """(m, n, d, d) tensor of cross Hessians."""
        X, Y = self._blocks(X, Y)
        s2 = self.sigma**2
        diff = X[:, None, :] - Y[None, :, :]
        K = np.exp(-np.sum(diff**2, axis=-1) / (2.0 * s2))
        outer = diff[:, :, :, None] * diff[:, :, None, :]
        eye = np.eye(self.dim)
        return (eye[None, None] / s2 - outer / s2**2) * K[:, :, None, None]

    def gram(self, X) -> np.ndarray:
        """Plain kernel Gram matrix of point evaluations (PSD)."""
        return self.value_matrix(X, X)

    # -- validation helpers ---------------------------------------------------

    def _pair(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape != (self.dim,) or y.shape != (self.dim,):
            raise ValueError(f"points must have shape ({self.dim},)")
        return x, y

    def _blocks(self, X, Y):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if X.shape[1] != self.dim or Y.shape[1] != self.dim:
            raise ValueError(f"point blocks must have {self.dim} columns")
        return X, Y


def make_kernel(family: str, sigma: float, dim: int) -> GaussianKernel:
    """Kernel factory; the only supported family is 'gaussian'."""
    if family.lower() != "gaussian":
        raise ValueError(f"unknown kernel family {family!r}")
    return GaussianKernel(sigma=float(sigma), dim=int(dim))
