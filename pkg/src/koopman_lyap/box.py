"""Axis-aligned boxes used as computational domains."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Box:
    """Closed box [lower_1, upper_1] x ... x [lower_d, upper_d].

    Immutable; safe to share between threads.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("box bounds must be 1-D arrays of equal length")
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise ValueError("box bounds must be finite")
        if not np.all(hi > lo):
            raise ValueError("box must satisfy upper > lower on every axis")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, points, atol: float = 1e-12):
        """True where points lie inside the box (within atol).

        Accepts a single point of shape (d,) or a batch of shape (m, d).
        """
        p = np.asarray(points, dtype=float)
        inside = np.all(
            (p >= self.lower - atol) & (p <= self.upper + atol), axis=-1
        )
        return bool(inside) if p.ndim == 1 else inside

    def axes(self, resolution) -> list[np.ndarray]:
        """Per-axis uniform nodes including both endpoints.

        resolution is a single int or one int per axis, each >= 2.
        """
        res = self._resolution_tuple(resolution)
        return [
            np.linspace(self.lower[i], self.upper[i], res[i])
            for i in range(self.dim)
        ]

    def grid(self, resolution) -> np.ndarray:
        """Uniform grid as an (m, d) array, first axis varying slowest."""
        mesh = np.meshgrid(*self.axes(resolution), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def _resolution_tuple(self, resolution) -> tuple[int, ...]:
        if np.isscalar(resolution):
            res = (int(resolution),) * self.dim
        else:
            res = tuple(int(r) for r in resolution)
            if len(res) != self.dim:
                raise ValueError("resolution must be scalar or one per axis")
        if any(r < 2 for r in res):
            raise ValueError("grid resolution must be at least 2 per axis")
        return res
