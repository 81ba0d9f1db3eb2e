"""Kernel backend selection.

The compiled extension is used when it was built and ``PROOFGAMES_PURE_PYTHON`` is
unset; otherwise the pure-Python twins are used.  ``BACKEND`` names the active one.
"""
from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("PROOFGAMES_PURE_PYTHON"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

wl_distinguishing_round = _impl.wl_distinguishing_round
response_layer = _impl.response_layer


def backends() -> dict:
    """Every importable backend, keyed by name (used by tests and the benchmark)."""
    found = {"python": _kernels_py}
    try:
        from . import _kernels  # type: ignore[attr-defined]
        found["cython"] = _kernels
    except ImportError:
        pass
    return found
