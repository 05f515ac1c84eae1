"""Projection-kernel backend selection.

The hot projector loops exist twice: numba ``@njit`` kernels and a pure-numpy
fallback.  Selection order: an explicit :func:`set_backend` call, then the
``TOMOGCV_BACKEND`` environment variable (``numba``, ``numpy`` or ``auto``),
then auto (numba when importable, numpy otherwise).
"""

from __future__ import annotations

import os
import warnings

ENV_VAR = "TOMOGCV_BACKEND"

_forced: str | None = None
_resolved = None


def set_backend(name: str | None) -> None:
    """Force a backend (``'numba'`` / ``'numpy'``) or reset to env/auto with None."""
    global _forced, _resolved
    if name is not None and name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    _forced = name
    _resolved = None


def _load(name: str):
    if name == "numpy":
        from . import _projector_numpy as mod
    else:
        from . import _projector_numba as mod
    return mod


def get_backend():
    """Return the active kernel module (attributes: NAME, forward, backproject)."""
    global _resolved
    if _resolved is not None:
        return _resolved
    choice = _forced or os.environ.get(ENV_VAR, "auto").strip().lower()
    if choice in ("", "auto"):
        try:
            _resolved = _load("numba")
        except ImportError:
            warnings.warn("numba unavailable, falling back to numpy projection kernels")
            _resolved = _load("numpy")
    elif choice in ("numba", "numpy"):
        _resolved = _load(choice)
    else:
        raise ValueError(f"{ENV_VAR}={choice!r} not understood (use numba/numpy/auto)")
    return _resolved


def active_backend() -> str:
    return get_backend().NAME
