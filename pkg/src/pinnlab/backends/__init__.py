"""Tape execution backends.

Two interchangeable executors exist: numba-jitted kernels (default)
and a pure-numpy interpreter.  Selection is by the environment variable
``PINNLAB_BACKEND`` (``numba`` or ``numpy``); when numba is requested
but unavailable the numpy path is used and a warning emitted once.
Within one backend, results are deterministic run to run; across
backends they agree to floating-point reassociation (~1e-12 relative).
"""

import os
import warnings

_modules = {}
_warned = False


def _load(name):
    mod = _modules.get(name)
    if mod is None:
        if name == "numba":
            from . import numba_backend as mod
        else:
            from . import numpy_backend as mod
        _modules[name] = mod
    return mod


def requested_name() -> str:
    name = os.environ.get("PINNLAB_BACKEND", "numba").strip().lower()
    if name not in ("numba", "numpy"):
        raise ValueError(
            f"PINNLAB_BACKEND must be 'numba' or 'numpy', got {name!r}")
    return name


def active_name() -> str:
    """Name of the backend that active() will return."""
    name = requested_name()
    if name == "numba":
        try:
            _load("numba")
        except ImportError:
            return "numpy"
    return name


def active():
    global _warned
    name = requested_name()
    if name == "numba":
        try:
            return _load("numba")
        except ImportError:
            if not _warned:
                warnings.warn("numba unavailable, falling back to numpy backend")
                _warned = True
            return _load("numpy")
    return _load("numpy")
