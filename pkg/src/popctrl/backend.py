"""Kernel backend selection.

The compiled extension is used when it imports; ``POPCTRL_BACKEND=python``
forces the NumPy fallback and ``POPCTRL_BACKEND=cython`` makes a missing
extension an error.
"""
import importlib
import os

_choice = os.environ.get("POPCTRL_BACKEND", "").strip().lower()


def load(name: str):
    """Return the kernel module named ``"cython"`` or ``"python"``."""
    if name == "cython":
        return importlib.import_module("popctrl._ckernels")
    if name == "python":
        return importlib.import_module("popctrl._pykernels")
    raise ValueError(f"unknown backend {name!r}")


if _choice == "python":
    kernels = load("python")
    NAME = "python"
else:
    try:
        kernels = load("cython")
        NAME = "cython"
    except ImportError:
        if _choice == "cython":
            raise
        kernels = load("python")
        NAME = "python"
