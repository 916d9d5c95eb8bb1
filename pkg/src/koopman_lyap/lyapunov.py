"""Lyapunov candidates assembled from Koopman eigenfunctions.

With Lambda = diag(lambda_1..lambda_d) Hurwitz, P solves the Lyapunov
equation Lambda^T P + P Lambda = -I, which for a real diagonal spectrum is
simply P = diag(1 / (2 |lambda_i|)). The candidate and its orbital
derivative are the quadratic forms

    V(x)    = sum_ij P_ij phi_i(x) phi_j(x)
    Vdot(x) = sum_ij P_ij ((grad phi_i . f) phi_j + phi_i (grad phi_j . f))

evaluated with the collocated eigenfunctions. For exact eigenfunctions
grad phi_i . f = lambda_i phi_i, so Vdot collapses to
sum_ij P_ij (lambda_i + lambda_j) phi_i phi_j; with the approximate ones we
keep the chain-rule form above.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .box import Box
from .expr import VectorField
from .koopman import EigenfunctionSet

__all__ = [
    "LyapunovError",
    "solve_p",
    "LyapunovModel",
    "DiagnosticsReport",
    "diagnostics",
    "SurfaceGrid",
    "grid_eval",
]


class LyapunovError(ValueError):
    pass


def solve_p(eigenvalues) -> np.ndarray:
    """P = diag(1 / (2 |lambda_i|)) for a real, negative, distinct spectrum.

    Solves Lambda^T P + P Lambda = -I; the residual is checked to 1e-12 * d.
    """
    lams = np.asarray(eigenvalues, dtype=float).reshape(-1)
    d = lams.size
    if d == 0:
        raise LyapunovError("empty spectrum")
    if np.max(lams) >= 0.0:
        raise LyapunovError(f"spectrum must be strictly negative: {lams}")
    if d > 1 and np.min(np.abs(np.subtract.outer(lams, lams)[~np.eye(d, dtype=bool)])) == 0.0:
        raise LyapunovError("eigenvalues must be pairwise distinct")
    P = np.diag(1.0 / (2.0 * np.abs(lams)))
    L = np.diag(lams)
    resid = np.max(np.abs(L.T @ P + P @ L + np.eye(d)))
    if resid > 1e-12 * d:
        raise LyapunovError(f"Lyapunov equation residual {resid:.3e} too large")
    return P


@dataclass(frozen=True)
class LyapunovModel:
    """Quadratic Lyapunov candidate over an eigenfunction set."""

    eigenfunctions: EigenfunctionSet
    P: np.ndarray

    def __post_init__(self):
        d = len(self.eigenfunctions)
        P = np.asarray(self.P, dtype=float)
        if P.shape != (d, d):
            raise LyapunovError(f"P must be {d}x{d}")
        if np.max(np.abs(P - P.T)) > 1e-12 * max(1.0, np.max(np.abs(P))):
            raise LyapunovError("P must be symmetric")
        P.setflags(write=False)
        object.__setattr__(self, "P", P)

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.eigenfunctions.eigenvalues

    def _phi_matrix(self, X: np.ndarray) -> np.ndarray:
        return np.stack([e.value_many(X) for e in self.eigenfunctions], axis=1)

    def value_many(self, X: np.ndarray) -> np.ndarray:
        """V at a batch of points (m, d) -> (m,)."""
        Phi = self._phi_matrix(np.asarray(X, dtype=float))
        return np.einsum("mi,ij,mj->m", Phi, self.P, Phi)

    def value(self, x) -> float:
        return float(self.value_many(np.asarray(x, dtype=float)[None, :])[0])

    def orbital_derivative_many(self, fld: VectorField, X: np.ndarray) -> np.ndarray:
        """Vdot along the field at a batch of points (m, d) -> (m,)."""
        X = np.asarray(X, dtype=float)
        Phi = self._phi_matrix(X)
        fX = fld.evaluate_at(X)
        dPhi = np.stack(
            [np.sum(e.gradient_many(X) * fX, axis=1) for e in self.eigenfunctions],
            axis=1,
        )
        return np.einsum("mi,ij,mj->m", dPhi, self.P, Phi) + np.einsum(
            "mi,ij,mj->m", Phi, self.P, dPhi
        )

    def orbital_derivative(self, fld: VectorField, x) -> float:
        return float(
            self.orbital_derivative_many(fld, np.asarray(x, dtype=float)[None, :])[0]
        )


@dataclass(frozen=True)
class DiagnosticsReport:
    """Scale factors that enter the a-priori error bound, reported as-is.

    The Frobenius bound ||P||_F <= 1 / (2 alpha) holds for a diagonalizable
    spectrum with unit transformation norm; for d > 1 the computed ||P||_F
    can exceed it, so the flag is reported and never asserted.
    """

    fill_dist: float
    lambda_bar: float
    alpha: float
    p_frobenius: float
    p_frobenius_bound: float
    bound_holds: bool
    sup_phi: np.ndarray
    domain: Box
    resolution: int

    def format_text(self) -> str:
        lines = [
            "diagnostics",
            f"  fill distance (probe estimate): {self.fill_dist:.12g}",
            f"  lambda_bar (max eigenvalue):    {self.lambda_bar:.12g}",
            f"  alpha (min |eigenvalue|):       {self.alpha:.12g}",
            f"  ||P||_F:                        {self.p_frobenius:.12g}",
            f"  1 / (2 alpha):                  {self.p_frobenius_bound:.12g}",
            f"  ||P||_F <= 1 / (2 alpha):       {self.bound_holds}",
        ]
        for i, s in enumerate(self.sup_phi, start=1):
            lines.append(f"  sup |phi_{i}| on probe grid:     {s:.12g}")
        return "\n".join(lines) + "\n"


def diagnostics(
    model: LyapunovModel, fill_dist: float, domain: Box, resolution: int = 41
) -> DiagnosticsReport:
    """Report bound ingredients on a probe grid; nothing here raises on a
    violated inequality, values are for inspection."""
    lams = model.eigenvalues
    probes = domain.grid(resolution)
    sup_phi = np.array(
        [float(np.max(np.abs(e.value_many(probes)))) for e in model.eigenfunctions]
    )
    p_fro = float(np.linalg.norm(model.P, "fro"))
    alpha = float(np.min(np.abs(lams)))
    bound = 1.0 / (2.0 * alpha)
    return DiagnosticsReport(
        fill_dist=float(fill_dist),
        lambda_bar=float(np.max(lams)),
        alpha=alpha,
        p_frobenius=p_fro,
        p_frobenius_bound=bound,
        bound_holds=bool(p_fro <= bound),
        sup_phi=sup_phi,
        domain=domain,
        resolution=int(resolution),
    )


@dataclass(frozen=True)
class SurfaceGrid:
    """Scalar samples over a uniform 2-D grid, row-major in the first axis."""

    domain: Box
    resolution: tuple
    quantity: str
    values: np.ndarray  # shape (nx, ny)

    def to_csv(self, path) -> None:
        """CSV with one comment header line and rows x1,x2,value."""
        nx, ny = self.resolution
        xs, ys = self.domain.axes((nx, ny))
        lo1, lo2 = self.domain.lower
        hi1, hi2 = self.domain.upper
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(
                f"# domain {lo1:.17g} {hi1:.17g} {lo2:.17g} {hi2:.17g}; "
                f"resolution {nx} {ny}; quantity {self.quantity}\n"
            )
            for i in range(nx):
                for j in range(ny):
                    fh.write(
                        f"{xs[i]:.17g},{ys[j]:.17g},{self.values[i, j]:.17g}\n"
                    )


def grid_eval(
    model: LyapunovModel,
    fld: VectorField,
    domain: Box,
    resolution,
    quantity: str,
) -> SurfaceGrid:
    """Sample V or Vdot over a uniform grid of the (2-D) domain."""
    if domain.dim != 2:
        raise LyapunovError("surface grids are 2-D only")
    if quantity not in ("V", "Vdot"):
        raise LyapunovError(f"unknown quantity {quantity!r} (use 'V' or 'Vdot')")
    res = domain._resolution_tuple(resolution)
    pts = domain.grid(res)
    if quantity == "V":
        vals = model.value_many(pts)
    else:
        vals = model.orbital_derivative_many(fld, pts)
    return SurfaceGrid(
        domain=domain,
        resolution=res,
        quantity=quantity,
        values=vals.reshape(res),
    )
