"""Pure-numpy kernel backend: the reference/fallback path."""

from ._impl import lstm_seq_backward, lstm_seq_forward

NAME = "numpy"

__all__ = ["NAME", "lstm_seq_forward", "lstm_seq_backward"]
