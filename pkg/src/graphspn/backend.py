"""Kernel backend selection.

The hot evaluation kernels exist twice: a numba-jitted version
(:mod:`graphspn.kernels_numba`) and a pure-numpy fallback
(:mod:`graphspn.kernels_numpy`). Both expose the same functions and are
numerically interchangeable. The active backend is chosen once at import
time from the ``GSPN_BACKEND`` environment variable (``numba`` or
``numpy``); without it, numba is used when importable.

``benchmarks/bench_backends.py`` compares the two.
"""

import os
import warnings

from . import kernels_numpy

_VALID = ("numba", "numpy")
_active_name = None
_active_module = None


def _default_backend():
    requested = os.environ.get("GSPN_BACKEND", "").strip().lower()
    if requested:
        if requested not in _VALID:
            raise ValueError(
                f"GSPN_BACKEND={requested!r} is not one of {_VALID}"
            )
        return requested
    try:
        import numba  # noqa: F401
    except ImportError:
        return "numpy"
    return "numba"


def set_backend(name):
    """Select the kernel backend programmatically (overrides the env flag)."""
    global _active_name, _active_module
    if name not in _VALID:
        raise ValueError(f"backend {name!r} is not one of {_VALID}")
    if name == "numba":
        try:
            from . import kernels_numba
        except ImportError as exc:
            warnings.warn(
                f"numba backend unavailable ({exc}); falling back to numpy",
                RuntimeWarning,
            )
            _active_name, _active_module = "numpy", kernels_numpy
            return
        _active_name, _active_module = "numba", kernels_numba
    else:
        _active_name, _active_module = "numpy", kernels_numpy


def active():
    """Return the active kernel module, initialising it on first use."""
    if _active_module is None:
        set_backend(_default_backend())
    return _active_module


def active_name():
    active()
    return _active_name
