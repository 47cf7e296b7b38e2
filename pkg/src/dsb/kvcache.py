"""Cache policies: which positions get recomputed each step vs served stale.

Three policies:

* ``NoCache`` recomputes everything every step.
* ``DualCache`` recomputes only the active block, resynchronizing with a full
  pass whenever the block start has advanced by at least the initial block
  width since the last full pass (block completion, generalized to sliding
  windows).
* ``DSBCache`` recomputes the active block plus a prefix window of length
  max(prefix_min, slide distance) immediately before it (and optionally a
  fixed suffix window after it), with a full global refresh after every
  ``init_size`` committed tokens.

The recompute set always covers the active block, so samplers never consume
logits derived from stale query positions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .configstr import reject_unknown, split_spec, take_int
from .schedulers import BlockWindow
from .state import EVENT_NONE, EVENT_PARTIAL, EVENT_REFRESH


@dataclass(frozen=True)
class NoCache:
    """Full recomputation every step; no KV state is ever reused."""


@dataclass(frozen=True)
class DualCache:
    """Reuse KV for everything outside the block; resync at block completion."""


@dataclass(frozen=True)
class DSBCache:
    """Prefix-window refresh plus periodic global refresh, made for sliding blocks."""

    prefix_min: int = 24
    suffix_len: int = 0

    def __post_init__(self) -> None:
        if self.prefix_min < 1:
            raise ValueError(f"prefix_min must be >= 1, got {self.prefix_min}")
        if self.suffix_len < 0:
            raise ValueError(f"suffix_len must be >= 0, got {self.suffix_len}")


CachePolicy = Union[NoCache, DualCache, DSBCache]


@dataclass
class CacheSchedule:
    """Per-decode cache bookkeeping.

    ``tokens_since_refresh`` counts commits since the last global refresh.
    ``prev_window_start`` is the block start of the previous step, which sizes
    the prefix window.  ``refresh_anchor`` is the block start at the last full
    computation, used by ``DualCache``'s completion trigger.  ``primed`` flips
    once the first full pass has populated the KV store; until then every
    policy must do a full computation.
    """

    tokens_since_refresh: int = 0
    prev_window_start: int = 0
    refresh_anchor: int = 0
    primed: bool = False


def new_schedule(window: BlockWindow) -> CacheSchedule:
    return CacheSchedule(
        tokens_since_refresh=0,
        prev_window_start=window.start,
        refresh_anchor=window.start,
        primed=False,
    )


def prefix_window_len(prefix_min: int, start_now: int, start_prev: int) -> int:
    """max(prefix_min, slide distance): covers every newly exposed position."""
    if start_now < start_prev:
        raise ValueError(
            f"block start moved backwards ({start_prev} -> {start_now})"
        )
    return max(prefix_min, start_now - start_prev)


def recompute_set(
    policy: CachePolicy,
    window: BlockWindow,
    schedule: CacheSchedule,
    seq_len: int,
) -> Tuple[np.ndarray, str]:
    """Positions to recompute this step, plus the cache event tag.

    Returned positions are sorted absolute indices into [0, seq_len).
    """
    if not (0 <= window.start <= window.end <= seq_len):
        raise ValueError(f"window [{window.start}, {window.end}) outside [0, {seq_len})")
    everything = np.arange(seq_len, dtype=np.int64)
    if isinstance(policy, NoCache):
        return everything, EVENT_NONE
    if isinstance(policy, DualCache):
        if not schedule.primed or window.start - schedule.refresh_anchor >= window.init_size:
            return everything, EVENT_REFRESH
        return np.arange(window.start, window.end, dtype=np.int64), EVENT_PARTIAL
    # DSBCache
    if not schedule.primed or schedule.tokens_since_refresh >= window.init_size:
        return everything, EVENT_REFRESH
    pw = prefix_window_len(policy.prefix_min, window.start, schedule.prev_window_start)
    lo = max(0, window.start - pw)
    hi = min(seq_len, window.end + policy.suffix_len)
    return np.arange(lo, hi, dtype=np.int64), EVENT_PARTIAL


def after_step(
    schedule: CacheSchedule, committed: int, event: str, window_start: int
) -> None:
    """Fold one finished step into the schedule.

    ``window_start`` is the block start the step ran with (pre-advance); it
    becomes ``prev_window_start`` for the next step's prefix-window sizing.
    """
    if committed < 0:
        raise ValueError(f"committed must be >= 0, got {committed}")
    schedule.tokens_since_refresh += committed
    if event == EVENT_REFRESH:
        schedule.tokens_since_refresh = 0
        schedule.refresh_anchor = window_start
        schedule.primed = True
    schedule.prev_window_start = window_start


def parse_cache(spec: str) -> CachePolicy:
    """Parse `nocache`, `dual`, or `dsbcache:pmin=24,suffix=0`."""
    name, params = split_spec(spec)
    if name == "nocache":
        reject_unknown(params, spec)
        return NoCache()
    if name == "dual":
        reject_unknown(params, spec)
        return DualCache()
    if name == "dsbcache":
        pmin = take_int(params, "pmin", spec)
        suffix = int(params.pop("suffix", 0))
        reject_unknown(params, spec)
        return DSBCache(pmin, suffix)
    raise ValueError(f"unknown cache policy {name!r} in {spec!r}")


def format_cache(policy: CachePolicy) -> str:
    if isinstance(policy, NoCache):
        return "nocache"
    if isinstance(policy, DualCache):
        return "dual"
    return f"dsbcache:pmin={policy.prefix_min},suffix={policy.suffix_len}"
