"""Kernel backend selection.

The hot kernels (conv2d, transposed conv, maxpool) exist twice: a numba
@njit implementation and a pure-numpy im2col fallback. CMWNET_BACKEND
selects one ("numba" | "numpy"); default is numba when importable.
`python -m cmwnet.bench` compares the two.
"""

import os

from . import kernels_numpy
from .errors import ConfigurationError

try:
    from . import kernels_numba
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    kernels_numba = None
    _HAVE_NUMBA = False

_VALID = ("numba", "numpy")


def _from_env():
    name = os.environ.get("CMWNET_BACKEND", "").strip().lower()
    if not name:
        return "numba" if _HAVE_NUMBA else "numpy"
    if name not in _VALID:
        raise ConfigurationError(
            f"CMWNET_BACKEND={name!r} is not one of {_VALID}")
    if name == "numba" and not _HAVE_NUMBA:
        raise ConfigurationError("CMWNET_BACKEND=numba but numba is not importable")
    return name

_active = _from_env()


def active_backend():
    return _active


def set_backend(name):
    """Select the kernel backend at runtime; returns the previous name."""
    global _active
    if name not in _VALID:
        raise ConfigurationError(f"unknown backend {name!r}; expected one of {_VALID}")
    if name == "numba" and not _HAVE_NUMBA:
        raise ConfigurationError("numba backend requested but numba is not importable")
    prev = _active
    _active = name
    return prev


def kernels():
    return kernels_numba if _active == "numba" else kernels_numpy


def have_numba():
    return _HAVE_NUMBA
