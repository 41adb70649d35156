"""Penalized-HUM null control of an age-, space- and sex-structured population model.

Modules: ``core`` (data, grid, validation, discrete operators), ``forward`` and
``adjoint`` (time marching), ``hum`` (control synthesis), ``fixpoint``
(nonlinear coupling), ``obslab`` (observability diagnostics) and ``harness``
(configs, runs, CLI).
"""
from .backend import NAME as BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
