"""Block schedules: fixed sequential blocks and the dynamic sliding block.

Both schedules expose the decode loop's active window as a half-open
absolute-index interval [start, end).  The fixed (naive) schedule partitions
the response into consecutive blocks and only moves on when the current block
is fully decoded.  The sliding schedule moves its left boundary to the first
remaining mask after every step and grows its right boundary with the decoded
count, optionally capped at a maximum width.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Set, Union

from .configstr import reject_unknown, split_spec, take_int
from .state import SequenceState


@dataclass(frozen=True)
class NaiveBlock:
    """Fixed partition into consecutive blocks of ``block_size`` positions."""

    block_size: int = 32

    def __post_init__(self) -> None:
        if self.block_size < 1:
            raise ValueError(f"block size must be >= 1, got {self.block_size}")


@dataclass(frozen=True)
class SlidingBlock:
    """Sliding window starting at ``init_size`` wide.

    ``max_size=None`` removes the width cap entirely (the greedy variant);
    ``max_size == init_size`` slides at constant width.
    """

    init_size: int = 32
    max_size: Optional[int] = None

    def __post_init__(self) -> None:
        if self.init_size < 1:
            raise ValueError(f"init size must be >= 1, got {self.init_size}")
        if self.max_size is not None and self.max_size < self.init_size:
            raise ValueError(
                f"max size {self.max_size} smaller than init size {self.init_size}"
            )


SchedulerKind = Union[NaiveBlock, SlidingBlock]


@dataclass(frozen=True)
class BlockWindow:
    """Active block [start, end) plus the schedule parameters that grew it.

    ``start`` and ``end`` are absolute indices and never decrease over the
    course of one decode.
    """

    start: int
    end: int
    init_size: int
    max_size: Optional[int]

    @property
    def width(self) -> int:
        return self.end - self.start


def init_window(kind: SchedulerKind, prompt_len: int, gen_len: int) -> BlockWindow:
    """First active block: [prompt_len, prompt_len + initial width)."""
    if prompt_len < 0 or gen_len < 1:
        raise ValueError("prompt_len must be >= 0 and gen_len >= 1")
    limit = prompt_len + gen_len
    if isinstance(kind, NaiveBlock):
        end = min(prompt_len + kind.block_size, limit)
        return BlockWindow(prompt_len, end, kind.block_size, kind.block_size)
    end = min(prompt_len + kind.init_size, limit)
    return BlockWindow(prompt_len, end, kind.init_size, kind.max_size)


def eligible_set(window: BlockWindow, state: SequenceState) -> Set[int]:
    """Masked absolute positions inside the active block."""
    lp = state.prompt_len
    lo = max(window.start, lp) - lp
    hi = max(window.end, lp) - lp
    return {lp + i for i in state.masked_positions(lo, hi)}


def advance_naive(window: BlockWindow, state: SequenceState) -> BlockWindow:
    """Move to the next fixed block once the current one is fully decoded."""
    if eligible_set(window, state):
        return window
    limit = state.prompt_len + state.gen_len
    start = window.end
    end = min(start + window.init_size, limit)
    return replace(window, start=start, end=end)


def advance_sliding(
    window: BlockWindow, state: SequenceState, *, trail_left_of_mask: bool = False
) -> BlockWindow:
    """Post-step boundary update for the sliding schedule.

    The left boundary becomes the first masked position of the old window, or
    the old right boundary when the window is clear.  The right boundary is
    min(prompt_len + init_size + decoded_count, start + max_size), clamped to
    the end of the response buffer.

    ``trail_left_of_mask`` is a debug knob that places the left boundary one
    slot before the first mask instead of on it, for comparing the two
    plausible slide rules; it is never used by the engine.
    """
    lp = state.prompt_len
    limit = lp + state.gen_len
    remaining = eligible_set(window, state)
    if remaining:
        start = min(remaining)
        if trail_left_of_mask:
            start = max(window.start, start - 1)
    else:
        start = window.end
    end = lp + window.init_size + state.decoded_count
    if window.max_size is not None:
        end = min(end, start + window.max_size)
    end = min(end, limit)
    return replace(window, start=start, end=max(start, end))


def advance(kind: SchedulerKind, window: BlockWindow, state: SequenceState) -> BlockWindow:
    if isinstance(kind, NaiveBlock):
        return advance_naive(window, state)
    return advance_sliding(window, state)


def parse_scheduler(spec: str) -> SchedulerKind:
    """Parse `naive:B=32`, `dsb:init=32,max=32` or `dsb:init=32,max=unbounded`."""
    name, params = split_spec(spec)
    if name == "naive":
        size = take_int(params, "B", spec)
        reject_unknown(params, spec)
        return NaiveBlock(size)
    if name == "dsb":
        init = take_int(params, "init", spec)
        raw_max = params.pop("max", None)
        reject_unknown(params, spec)
        if raw_max is None or raw_max == str(init):
            max_size: Optional[int] = init
        elif raw_max == "unbounded":
            max_size = None
        else:
            try:
                max_size = int(raw_max)
            except ValueError:
                raise ValueError(f"bad max value {raw_max!r} in {spec!r}") from None
        return SlidingBlock(init, max_size)
    raise ValueError(f"unknown scheduler {name!r} in {spec!r}")


def format_scheduler(kind: SchedulerKind) -> str:
    if isinstance(kind, NaiveBlock):
        return f"naive:B={kind.block_size}"
    max_part = "unbounded" if kind.max_size is None else str(kind.max_size)
    return f"dsb:init={kind.init_size},max={max_part}"
