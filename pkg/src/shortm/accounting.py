"""Thinking-compute and time-to-answer accounting shared by every method.

All k streams decode in parallel at the same speed. When the race halts at
cut ``L`` every stream has been charged ``min(length, L)`` thinking tokens,
and the answer is available when the stream that set the cut finishes.
Without a cut (majority voting) every stream runs to completion.

Time is reported in recorded seconds when per-stream durations exist and
in thinking tokens at unit decode rate otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

TOKEN_TIME_UNIT = "think_tokens"
SECONDS_TIME_UNIT = "seconds"


def compute_with_cut(lengths: Sequence[int], cut: int | None) -> int:
    if cut is None:
        return int(sum(lengths))
    if cut < 0:
        raise ValueError(f"cut must be non-negative, got {cut}")
    return int(sum(min(length, cut) for length in lengths))


def order_statistic_index(lengths: Sequence[int], m: int) -> int:
    """Position of the m-th shortest stream (1-based m), ties broken by position."""
    if not 1 <= m <= len(lengths):
        raise ValueError(f"m must be in [1, {len(lengths)}], got {m}")
    order = sorted(range(len(lengths)), key=lambda i: (lengths[i], i))
    return order[m - 1]


def time_with_cut(
    lengths: Sequence[int],
    durations: Sequence[float] | None = None,
    cut_index: int | None = None,
) -> float:
    """Time until the answer is available.

    ``cut_index`` is the position of the stream whose think-close ends the
    race; ``None`` waits for all streams.
    """
    if durations is not None and len(durations) != len(lengths):
        raise ValueError(
            f"durations has {len(durations)} entries but there are {len(lengths)} streams"
        )
    if cut_index is not None and not 0 <= cut_index < len(lengths):
        raise ValueError(f"cut_index {cut_index} out of range for {len(lengths)} streams")
    series = lengths if durations is None else durations
    if cut_index is None:
        return float(max(series))
    return float(series[cut_index])


@dataclass(frozen=True)
class CostCut:
    """Halt point for one race: ``cut_index`` is None when nothing is cancelled."""

    lengths: tuple[int, ...]
    cut_index: int | None = None
    durations: tuple[float, ...] | None = None

    @property
    def cut_tokens(self) -> int | None:
        return None if self.cut_index is None else self.lengths[self.cut_index]

    @property
    def time_unit(self) -> str:
        return TOKEN_TIME_UNIT if self.durations is None else SECONDS_TIME_UNIT

    def compute(self) -> int:
        return compute_with_cut(self.lengths, self.cut_tokens)

    def time(self) -> float:
        return time_with_cut(self.lengths, self.durations, self.cut_index)
