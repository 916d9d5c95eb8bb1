"""Symmetric kernel collocation for the nonlinear part of an eigenfunction.

For an eigenvalue lambda with left eigenvector w of the Jacobian E at the
origin, the nonlinear part h of the eigenfunction w.x + h(x) solves the
linear first-order PDE

    grad h(x) . f(x) - lambda h(x) = -w . G(x),      G(x) = f(x) - E x,

subject to h(0) = 0 and grad h(0) = 0. We impose the PDE at n collocation
centers z_1..z_n and the origin conditions exactly, and take the minimum-norm
interpolant in the RKHS of a chosen kernel. With the functionals

    L_j   u = grad u(z_j) . f(z_j) - lambda u(z_j)      j = 1..n
    L_n+1 u = u(0)
    L_n+1+l u = d u / dx_l (0)                          l = 1..d

the solution is h(x) = sum_a alpha_a (L_a^y k)(x, .), where alpha solves the
symmetric Gram system A alpha = b with A[a, b] = L_a^x L_b^y k and
b = (-w.G(z_1), .., -w.G(z_n), 0, .., 0). The coefficient layout is therefore

    alpha[0:n]       PDE functionals at the centers
    alpha[n]         value at the origin
    alpha[n+1:n+1+d] partial derivatives at the origin

A is PSD up to roundoff; an optional ridge eta is added to the diagonal
before solving. Assembly and evaluation are chunked so memory stays flat in
the number of evaluation points; entries are pure kernel algebra, so chunks
could be computed concurrently.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.linalg import ldl, solve_triangular
from scipy.spatial import cKDTree

from .box import Box
from .dynamics import Linearization, nonlinear_part
from .expr import VectorField
from .kernel import GaussianKernel

__all__ = [
    "CollocationError",
    "SingularSystemError",
    "IllConditionedWarning",
    "CollocationProblem",
    "CollocationSolution",
    "uniform_centers",
    "fill_distance",
    "pde_kernel",
    "assemble_system",
    "solve",
    "dump_system",
]

_CHUNK = 512


class CollocationError(ValueError):
    pass


class SingularSystemError(np.linalg.LinAlgError):
    """Gram system unsolvable even by least squares."""


class IllConditionedWarning(UserWarning):
    """Condition estimate of the Gram system exceeds 1e12."""


@dataclass(frozen=True)
class CollocationProblem:
    """Immutable description of one collocation solve.

    eta is the ridge added to the Gram diagonal: None requests the automatic
    relative default 1e-10 * trace(A) / m, 0 disables regularization, and a
    positive value is used verbatim.
    """

    kernel: GaussianKernel
    fld: VectorField
    lin: Linearization
    lam: float
    w: np.ndarray
    centers: np.ndarray
    domain: Box
    eta: float | None = None

    def __post_init__(self):
        d = self.fld.dim
        if self.kernel.dim != d or self.lin.dim != d:
            raise CollocationError("kernel, field, and linearization disagree on dimension")

        centers = np.asarray(self.centers, dtype=float).reshape(-1, d)
        n = centers.shape[0]
        if n and not np.all(self.domain.contains(centers, atol=1e-9)):
            raise CollocationError("collocation centers must lie inside the domain")
        if n and np.min(np.linalg.norm(centers, axis=1)) <= 1e-12:
            raise CollocationError("the origin may not be a collocation center")
        if n > 1:
            dist, _ = cKDTree(centers).query(centers, k=2)
            if np.min(dist[:, 1]) <= 1e-12:
                raise CollocationError("collocation centers must be pairwise distinct")

        lam = float(self.lam)
        if np.min(np.abs(self.lin.eigenvalues - lam)) > 1e-9 * max(1.0, abs(lam)):
            raise CollocationError(
                f"lambda = {lam:.6g} is not an eigenvalue of the linearization"
            )
        w = np.asarray(self.w, dtype=float).reshape(d)
        scale = max(1.0, float(np.linalg.norm(self.lin.E)))
        if np.max(np.abs(w @ self.lin.E - lam * w)) > 1e-8 * scale:
            raise CollocationError("w is not a left eigenvector for lambda")
        if self.eta is not None and self.eta < 0:
            raise CollocationError("eta must be nonnegative")

        centers.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "w", w)

    @property
    def n_centers(self) -> int:
        return self.centers.shape[0]

    @property
    def size(self) -> int:
        """Number of functionals, n + 1 + d."""
        return self.n_centers + 1 + self.fld.dim


def uniform_centers(domain: Box, n_per_axis: int) -> np.ndarray:
    """Uniform grid of n_per_axis points per axis, endpoints included.

    A grid point landing on the origin is moved by half a cell diagonal so
    the origin itself is never a center.
    """
    if n_per_axis < 2:
        raise CollocationError("n_per_axis must be at least 2")
    pts = domain.grid(n_per_axis)
    half_cell = domain.widths / (n_per_axis - 1) / 2.0
    hits = np.linalg.norm(pts, axis=1) <= 1e-12
    pts[hits] = half_cell
    return pts


def fill_distance(centers: np.ndarray, domain: Box, probe_resolution: int = 201) -> float:
    """Largest distance from a probe-grid point of the domain to the centers.

    A lower bound on the true fill distance of the continuum, converging as
    the probe grid refines.
    """
    centers = np.asarray(centers, dtype=float)
    if centers.ndim != 2 or centers.shape[0] == 0:
        raise CollocationError("need at least one center")
    probes = domain.grid(probe_resolution)
    dist, _ = cKDTree(centers).query(probes)
    return float(np.max(dist))


def pde_kernel(problem: CollocationProblem, x, center) -> float:
    """The PDE functional applied to the second kernel slot:
    grad_y k(x, z) . f(z) - lambda k(x, z)."""
    k = problem.kernel
    z = np.asarray(center, dtype=float)
    fz = problem.fld.evaluate(z)
    return float(k.grad_y(x, z) @ fz - problem.lam * k.value(x, z))


def _assemble_raw(problem: CollocationProblem):
    k = problem.kernel
    Z = problem.centers
    n, d = Z.shape[0], problem.fld.dim
    m = n + 1 + d
    lam = problem.lam
    origin = np.zeros((1, d))

    F = problem.fld.evaluate_at(Z) if n else np.zeros((0, d))
    A = np.empty((m, m))

    for s in range(0, n, _CHUNK):
        rows = slice(s, min(s + _CHUNK, n))
        Xa, Fa = Z[rows], F[rows]

        K = k.value_matrix(Xa, Z)
        Gx = k.grad_x_matrix(Xa, Z)
        Gy = k.grad_y_matrix(Xa, Z)
        H = k.cross_hessian_matrix(Xa, Z)
        A[rows, :n] = (
            np.einsum("ad,abde,be->ab", Fa, H, F, optimize=True)
            - lam * np.einsum("abd,ad->ab", Gx, Fa)
            - lam * np.einsum("abd,bd->ab", Gy, F)
            + lam**2 * K
        )

        K0 = k.value_matrix(Xa, origin)[:, 0]
        Gx0 = k.grad_x_matrix(Xa, origin)[:, 0]
        Gy0 = k.grad_y_matrix(Xa, origin)[:, 0]
        H0 = k.cross_hessian_matrix(Xa, origin)[:, 0]
        A[rows, n] = np.einsum("ad,ad->a", Gx0, Fa) - lam * K0
        A[rows, n + 1 :] = np.einsum("aij,ai->aj", H0, Fa) - lam * Gy0

    A[n:, :n] = A[:n, n:].T
    o = np.zeros(d)
    A[n, n] = k.value(o, o)
    A[n, n + 1 :] = k.grad_y(o, o)
    A[n + 1 :, n] = A[n, n + 1 :]
    A[n + 1 :, n + 1 :] = k.cross_hessian(o, o)
    A = 0.5 * (A + A.T)

    b = np.zeros(m)
    if n:
        G = nonlinear_part(problem.fld, problem.lin, Z.T).T
        b[:n] = -(G @ problem.w)
    return A, b


def _resolve_eta(problem: CollocationProblem, A: np.ndarray) -> float:
    if problem.eta is None:
        return 1e-10 * float(np.trace(A)) / A.shape[0]
    return float(problem.eta)


def assemble_system(problem: CollocationProblem):
    """Gram matrix (ridge included) and right-hand side of the collocation
    system. A is symmetric of order n + 1 + d."""
    A, b = _assemble_raw(problem)
    eta = _resolve_eta(problem, A)
    if eta:
        A[np.diag_indices_from(A)] += eta
    return A, b


def _ldl_solver(A: np.ndarray):
    """Factor once, solve many. Returns a solver closure for the symmetric
    indefinite factorization P L D L^T P^T of A."""
    lu, dmat, perm = ldl(A, lower=True)
    L = lu[perm]
    m = A.shape[0]
    sub = np.r_[np.diag(dmat, -1), 0.0] if m > 1 else np.zeros(1)

    blocks = []
    i = 0
    while i < m:
        if i + 1 < m and sub[i] != 0.0:
            blocks.append((i, 2))
            i += 2
        else:
            blocks.append((i, 1))
            i += 1

    for i, size in blocks:
        if size == 1 and dmat[i, i] == 0.0:
            raise np.linalg.LinAlgError("singular diagonal block")
        if size == 2:
            det = dmat[i, i] * dmat[i + 1, i + 1] - dmat[i, i + 1] * dmat[i + 1, i]
            if det == 0.0:
                raise np.linalg.LinAlgError("singular diagonal block")

    def solve_with_factors(b):
        y = solve_triangular(L, b[perm], lower=True, unit_diagonal=True)
        wvec = np.empty_like(y)
        for i, size in blocks:
            if size == 1:
                wvec[i] = y[i] / dmat[i, i]
            else:
                a11, a12 = dmat[i, i], dmat[i, i + 1]
                a21, a22 = dmat[i + 1, i], dmat[i + 1, i + 1]
                det = a11 * a22 - a12 * a21
                wvec[i] = (a22 * y[i] - a12 * y[i + 1]) / det
                wvec[i + 1] = (-a21 * y[i] + a11 * y[i + 1]) / det
        v = solve_triangular(L.T, wvec, lower=False, unit_diagonal=True)
        x = np.empty_like(v)
        x[perm] = v
        return x

    return solve_with_factors


def _invnorm1_estimate(solve_fn, m: int, iters: int = 5) -> float:
    """Hager's deterministic 1-norm estimate of the inverse (symmetric A)."""
    x = np.full(m, 1.0 / m)
    best = 0.0
    for _ in range(iters):
        y = solve_fn(x)
        est = float(np.abs(y).sum())
        best = max(best, est)
        xi = np.sign(y)
        xi[xi == 0.0] = 1.0
        z = solve_fn(xi)
        j = int(np.argmax(np.abs(z)))
        if np.max(np.abs(z)) <= float(z @ x):
            break
        x = np.zeros(m)
        x[j] = 1.0
    return best


@dataclass
class CollocationSolution:
    """Solved coefficients plus everything needed to evaluate h and grad h."""

    problem: CollocationProblem
    alpha: np.ndarray
    eta_used: float
    condition_estimate: float
    method: str
    center_field_values: np.ndarray = dc_field(repr=False, default=None)

    def __post_init__(self):
        if self.center_field_values is None:
            Z = self.problem.centers
            vals = (
                self.problem.fld.evaluate_at(Z)
                if Z.shape[0]
                else np.zeros((0, self.problem.fld.dim))
            )
            self.center_field_values = vals

    # -- evaluation ----------------------------------------------------------

    def evaluate_many(self, X: np.ndarray) -> np.ndarray:
        """h at a batch of points, shape (m, d) -> (m,)."""
        prob = self.problem
        k, Z, lam = prob.kernel, prob.centers, prob.lam
        n, d = Z.shape[0], prob.fld.dim
        X = np.asarray(X, dtype=float).reshape(-1, d)
        origin = np.zeros((1, d))
        a_pde, a_val, a_grad = self.alpha[:n], self.alpha[n], self.alpha[n + 1 :]

        out = np.empty(X.shape[0])
        for s in range(0, X.shape[0], _CHUNK):
            rows = slice(s, min(s + _CHUNK, X.shape[0]))
            Xc = X[rows]
            acc = np.zeros(Xc.shape[0])
            if n:
                K = k.value_matrix(Xc, Z)
                Gy = k.grad_y_matrix(Xc, Z)
                k_pde = np.einsum("ajd,jd->aj", Gy, self.center_field_values) - lam * K
                acc += k_pde @ a_pde
            acc += a_val * k.value_matrix(Xc, origin)[:, 0]
            acc += k.grad_y_matrix(Xc, origin)[:, 0] @ a_grad
            out[rows] = acc
        return out

    def evaluate(self, x) -> float:
        return float(self.evaluate_many(np.asarray(x, dtype=float)[None, :])[0])

    def gradient_many(self, X: np.ndarray) -> np.ndarray:
        """grad h at a batch of points, shape (m, d) -> (m, d)."""
        prob = self.problem
        k, Z, lam = prob.kernel, prob.centers, prob.lam
        n, d = Z.shape[0], prob.fld.dim
        X = np.asarray(X, dtype=float).reshape(-1, d)
        origin = np.zeros((1, d))
        a_pde, a_val, a_grad = self.alpha[:n], self.alpha[n], self.alpha[n + 1 :]

        out = np.empty_like(X)
        for s in range(0, X.shape[0], _CHUNK):
            rows = slice(s, min(s + _CHUNK, X.shape[0]))
            Xc = X[rows]
            acc = np.zeros_like(Xc)
            if n:
                H = k.cross_hessian_matrix(Xc, Z)
                Gx = k.grad_x_matrix(Xc, Z)
                T = (
                    np.einsum("ajde,je->ajd", H, self.center_field_values)
                    - lam * Gx
                )
                acc += np.einsum("ajd,j->ad", T, a_pde)
            acc += a_val * k.grad_x_matrix(Xc, origin)[:, 0]
            H0 = k.cross_hessian_matrix(Xc, origin)[:, 0]
            acc += H0 @ a_grad
            out[rows] = acc
        return out

    def gradient(self, x) -> np.ndarray:
        return self.gradient_many(np.asarray(x, dtype=float)[None, :])[0]


def solve(problem: CollocationProblem) -> CollocationSolution:
    """Assemble and solve the Gram system.

    Symmetric indefinite factorization with pivoting first; least squares on
    factorization failure or a bad residual. Warns (never raises) when the
    1-norm condition estimate exceeds 1e12.
    """
    A_raw, b = _assemble_raw(problem)
    eta = _resolve_eta(problem, A_raw)
    A = A_raw
    if eta:
        A = A_raw.copy()
        A[np.diag_indices_from(A)] += eta
    m = A.shape[0]

    alpha = None
    cond = np.inf
    method = "ldl"
    try:
        solver = _ldl_solver(A)
        alpha = solver(b)
        cond = float(np.abs(A).sum(axis=0).max() * _invnorm1_estimate(solver, m))
        scale = float(
            np.abs(A).sum(axis=1).max() * np.max(np.abs(alpha), initial=0.0)
            + np.max(np.abs(b), initial=0.0)
        )
        resid = float(np.max(np.abs(A @ alpha - b)))
        if not np.all(np.isfinite(alpha)) or resid > 1e-8 * max(scale, 1e-300):
            alpha = None
    except np.linalg.LinAlgError:
        alpha = None

    if alpha is None:
        method = "lstsq"
        try:
            alpha, _, _, sing = np.linalg.lstsq(A, b, rcond=None)
        except np.linalg.LinAlgError as exc:
            raise SingularSystemError(str(exc)) from exc
        if not np.all(np.isfinite(alpha)):
            raise SingularSystemError("least-squares solution is not finite")
        cond = float(sing[0] / sing[-1]) if sing[-1] > 0 else np.inf

    if cond > 1e12:
        warnings.warn(
            f"Gram system condition estimate {cond:.3e} exceeds 1e12; "
            "results may lose accuracy",
            IllConditionedWarning,
            stacklevel=2,
        )

    return CollocationSolution(
        problem=problem,
        alpha=alpha,
        eta_used=eta,
        condition_estimate=cond,
        method=method,
    )


def dump_system(A: np.ndarray, b: np.ndarray, alpha: np.ndarray, directory) -> None:
    """Write A.csv, b.csv, alpha.csv (headerless, row-major) for debugging."""
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.savetxt(directory / "A.csv", np.atleast_2d(A), fmt="%.17g", delimiter=",")
    np.savetxt(directory / "b.csv", np.atleast_1d(b), fmt="%.17g", delimiter=",")
    np.savetxt(directory / "alpha.csv", np.atleast_1d(alpha), fmt="%.17g", delimiter=",")
