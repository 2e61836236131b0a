"""Numba-jitted kernel backend: same source as the numpy path, compiled.

fastmath stays off so both backends agree to the last few ulps and results
are reproducible run to run.
"""

from numba import njit

from . import _impl

NAME = "numba"

lstm_seq_forward = njit(cache=True, fastmath=False)(_impl.lstm_seq_forward)
lstm_seq_backward = njit(cache=True, fastmath=False)(_impl.lstm_seq_backward)

__all__ = ["NAME", "lstm_seq_forward", "lstm_seq_backward"]
