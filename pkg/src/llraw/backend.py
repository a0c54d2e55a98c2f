"""Kernel backend selection.

The compiled Cython kernels are preferred when the extension imported
cleanly; otherwise the numpy implementations take over. Both expose the
same module-level functions, so callers hold a module reference.

``LLRAW_BACKEND=python`` or ``LLRAW_BACKEND=cython`` forces a backend
(the latter fails loudly if the extension is missing).
"""

from __future__ import annotations

import os

from llraw import _kernels_py
from llraw.errors import ParameterError

try:
    from llraw import _kernels as _kernels_cy
except ImportError:
    _kernels_cy = None

_BACKENDS = {"python": _kernels_py}
if _kernels_cy is not None:
    _BACKENDS["cython"] = _kernels_cy


def _select():
    forced = os.environ.get("LLRAW_BACKEND", "").strip().lower()
    if not forced:
        return _BACKENDS.get("cython", _kernels_py)
    if forced not in ("python", "cython"):
        raise ParameterError(f"LLRAW_BACKEND must be 'python' or 'cython', got {forced!r}")
    if forced not in _BACKENDS:
        raise ParameterError("LLRAW_BACKEND=cython but the compiled extension is not installed")
    return _BACKENDS[forced]


_active = _select()


def kernels():
    """The active kernel module."""
    return _active


def backend_name() -> str:
    return _active.BACKEND_NAME


def available_backends() -> dict:
    """Name -> kernel module, for backend-equivalence tests and benchmarks."""
    return dict(_BACKENDS)
