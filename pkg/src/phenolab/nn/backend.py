"""Compute backend selection.

The compiled kernels (phenolab.nn._speedups) are preferred when the
extension built; the numpy kernels are the fallback and the reference.
``auto`` picks per architecture: compiled for the dense nets (small matmuls,
where loop fusion wins), numpy for the LSTM whose large gate matmuls favor
BLAS. PHENOLAB_BACKEND=python|cython forces one backend for everything.
"""

from __future__ import annotations

import os

from . import numpy_backend

try:
    from . import _speedups
except ImportError:  # extension not built; pure-python install
    _speedups = None

AUTO = "auto"

_BY_NAME = {"python": numpy_backend}
if _speedups is not None:
    _BY_NAME["cython"] = _speedups


def _env_choice() -> str:
    forced = os.environ.get("PHENOLAB_BACKEND", AUTO).strip().lower()
    if forced == "":
        forced = AUTO
    if forced != AUTO and forced not in _BY_NAME:
        available = ", ".join(sorted(_BY_NAME))
        raise ImportError(
            f"PHENOLAB_BACKEND={forced!r} is not available (have: {available})"
        )
    return forced


_choice = _env_choice()


def get_backend(name: str | None = None):
    """A backend module by name; default is the active choice for dense nets."""
    if name is None:
        return get_backend_for(is_lstm=False)
    if name not in _BY_NAME:
        raise KeyError(f"backend {name!r} not available (have: {sorted(_BY_NAME)})")
    return _BY_NAME[name]


def get_backend_for(is_lstm: bool):
    if _choice != AUTO:
        return _BY_NAME[_choice]
    if is_lstm or "cython" not in _BY_NAME:
        return numpy_backend
    return _BY_NAME["cython"]


def backend_name(is_lstm: bool = False) -> str:
    return get_backend_for(is_lstm).NAME


def selection() -> str:
    """The configured choice: 'auto', 'python' or 'cython'."""
    return _choice


def available_backends() -> list[str]:
    return sorted(_BY_NAME)


def set_backend(name: str) -> None:
    """Pin a backend (tests and benchmarks); 'auto' restores per-arch choice."""
    global _choice
    if name != AUTO and name not in _BY_NAME:
        raise KeyError(f"backend {name!r} not available (have: {sorted(_BY_NAME)})")
    _choice = name
