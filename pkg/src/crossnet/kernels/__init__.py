"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The backend is chosen once at import from the CROSSNET_BACKEND environment
variable: "numba", "numpy", or unset/"auto" (numba when importable, numpy
otherwise). `get_backend(name)` returns a specific backend module regardless
of the active default; the benchmark uses it to compare the two.
"""

from __future__ import annotations

import os
from types import ModuleType

_ENV_VAR = "CROSSNET_BACKEND"


def _load_numba_backend() -> ModuleType:
    from . import numba_backend

    return numba_backend


def _load_numpy_backend() -> ModuleType:
    from . import numpy_backend

    return numpy_backend


def get_backend(name: str) -> ModuleType:
    name = name.lower()
    if name == "numba":
        return _load_numba_backend()
    if name == "numpy":
        return _load_numpy_backend()
    raise ValueError(f"unknown kernel backend {name!r} (use 'numba' or 'numpy')")


def _resolve_default() -> ModuleType:
    choice = os.environ.get(_ENV_VAR, "auto").lower()
    if choice in ("", "auto"):
        try:
            return _load_numba_backend()
        except ImportError:
            return _load_numpy_backend()
    if choice in ("numba", "numpy"):
        return get_backend(choice)
    raise ValueError(
        f"{_ENV_VAR}={choice!r} is not a valid backend (use 'numba', 'numpy', or 'auto')"
    )


_active = _resolve_default()

BACKEND = _active.NAME
lstm_seq_forward = _active.lstm_seq_forward
lstm_seq_backward = _active.lstm_seq_backward


def use_backend(name: str) -> str:
    """Swap the active backend at runtime; returns the previous name.

    Exists for the benchmark and backend-parity tests; normal use selects
    the backend once via the environment variable.
    """
    global _active, BACKEND, lstm_seq_forward, lstm_seq_backward
    prev = BACKEND
    _active = get_backend(name)
    BACKEND = _active.NAME
    lstm_seq_forward = _active.lstm_seq_forward
    lstm_seq_backward = _active.lstm_seq_backward
    return prev


__all__ = [
    "BACKEND",
    "get_backend",
    "lstm_seq_forward",
    "lstm_seq_backward",
    "use_backend",
]
