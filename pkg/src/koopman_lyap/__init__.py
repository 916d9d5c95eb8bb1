"""Lyapunov functions for nonlinear ODE systems via kernel-collocated
Koopman eigenfunctions, certified by continuous piecewise affine
verification on a triangulated domain."""

import importlib

__version__ = "0.1.0"

_SUBMODULES = (
    "box",
    "expr",
    "dynamics",
    "kernel",
    "collocation",
    "koopman",
    "lyapunov",
    "cpa",
    "config",
    "pipeline",
    "cli",
)

__all__ = list(_SUBMODULES)


def __getattr__(name):
    # Lazy so that the CLI can cap BLAS threads before numpy loads.
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
