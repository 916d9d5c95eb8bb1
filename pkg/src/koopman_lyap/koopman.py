"""Principal Koopman eigenfunctions: linear part plus collocated nonlinear part.

An eigenfunction for eigenvalue lambda_i is phi_i(x) = w_i . x + h_i(x) with
w_i the matching left eigenvector and h_i the collocation solution. An
independent numerical route to the same object is the path integral

    phi_i(x) = w_i . x + integral_0^inf exp(-lambda_i t) w_i . G(s_t(x)) dt

along the flow s_t, valid when -lambda_i + 2 max_j lambda_j < 0. The two
routes share no code beyond the flow integrator, which makes the integral a
useful cross-check of the collocated surrogate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .box import Box
from .collocation import CollocationProblem, CollocationSolution
from .collocation import solve as solve_collocation
from .dynamics import DynamicsError, Linearization, nonlinear_part, rk4_step
from .expr import VectorField
from .kernel import GaussianKernel

__all__ = [
    "ConvergenceConditionError",
    "Eigenfunction",
    "EigenfunctionSet",
    "build_eigenfunctions",
    "path_integral_phi",
]

# Truncation rule for the path integral: stop once the integrand has stayed
# below this floor for this many consecutive steps.
_TAIL_FLOOR = 1e-12
_TAIL_STEPS = 100


class ConvergenceConditionError(DynamicsError):
    """The path integral does not converge for this eigenvalue."""


@dataclass(frozen=True)
class Eigenfunction:
    """phi(x) = w . x + h(x). h only needs evaluate/gradient (plus the _many
    batch forms for grids), so closed-form substitutes slot in for testing."""

    lam: float
    w: np.ndarray
    h: CollocationSolution

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(self.w @ x + self.h.evaluate(x))

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.w + self.h.gradient(x)

    def value_many(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return X @ self.w + self.h.evaluate_many(X)

    def gradient_many(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return self.w[None, :] + self.h.gradient_many(X)


@dataclass(frozen=True)
class EigenfunctionSet:
    """One eigenfunction per eigenvalue of the linearization, same order."""

    eigenfunctions: tuple

    def __post_init__(self):
        eigs = tuple(self.eigenfunctions)
        if not eigs:
            raise ValueError("need at least one eigenfunction")
        d = eigs[0].w.shape[0]
        if len(eigs) != d:
            raise ValueError(f"expected {d} eigenfunctions, got {len(eigs)}")
        lams = np.array([e.lam for e in eigs])
        if np.min(np.abs(np.subtract.outer(lams, lams) + np.eye(d))) == 0.0:
            raise ValueError("eigenvalues must be pairwise distinct")
        object.__setattr__(self, "eigenfunctions", eigs)

    def __iter__(self):
        return iter(self.eigenfunctions)

    def __len__(self):
        return len(self.eigenfunctions)

    def __getitem__(self, i):
        return self.eigenfunctions[i]

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([e.lam for e in self.eigenfunctions])


def build_eigenfunctions(
    fld: VectorField,
    lin: Linearization,
    kern: GaussianKernel,
    centers: np.ndarray,
    domain: Box,
    eta: float | None = None,
) -> EigenfunctionSet:
    """Solve one collocation problem per eigenvalue of the linearization."""
    eigs = []
    for lam, w in zip(lin.eigenvalues, lin.left_eigenvectors):
        problem = CollocationProblem(
            kernel=kern,
            fld=fld,
            lin=lin,
            lam=float(lam),
            w=w,
            centers=centers,
            domain=domain,
            eta=eta,
        )
        eigs.append(Eigenfunction(lam=float(lam), w=w, h=solve_collocation(problem)))
    return EigenfunctionSet(tuple(eigs))


def path_integral_phi(
    fld: VectorField,
    lin: Linearization,
    lam: float,
    w: np.ndarray,
    x,
    t_max: float = 20.0,
    dt: float = 1e-3,
) -> float:
    """Eigenfunction value by quadrature along the trajectory through x.

    Trapezoidal rule on a fixed RK4 time grid, truncated at t_max or earlier
    once the integrand stays below 1e-12 for 100 consecutive steps. Requires
    the convergence condition -lambda + 2 max_j lambda_j < 0.
    """
    lam = float(lam)
    lam_max = float(np.max(lin.eigenvalues))
    margin = -lam + 2.0 * lam_max
    if margin >= 0.0:
        raise ConvergenceConditionError(
            f"path integral diverges for lambda = {lam:.6g}: "
            f"-lambda + 2 max(Re spectrum) = {margin:.6g} >= 0"
        )
    if t_max <= 0 or dt <= 0:
        raise DynamicsError("t_max and dt must be positive")

    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    n_steps = max(1, int(round(t_max / dt)))
    h = t_max / n_steps

    def integrand(t, state):
        return float(np.exp(-lam * t) * (w @ nonlinear_part(fld, lin, state)))

    total = 0.0
    state = x
    g_prev = integrand(0.0, state)
    quiet = 0
    for k in range(n_steps):
        t_next = (k + 1) * h
        state = rk4_step(fld, state, h)
        if not np.all(np.isfinite(state)):
            from .dynamics import BlowUpError

            raise BlowUpError(t_next)
        g_next = integrand(t_next, state)
        total += 0.5 * h * (g_prev + g_next)
        g_prev = g_next
        quiet = quiet + 1 if abs(g_next) < _TAIL_FLOOR else 0
        if quiet >= _TAIL_STEPS:
            break
    return float(w @ x + total)
