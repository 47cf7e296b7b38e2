"""Canonical decoding state shared by schedulers, samplers, and caches.

Coordinate convention: the scheduler and cache modules index into the full
``prompt + response`` buffer (absolute positions).  ``SequenceState`` itself
exposes response-relative positions; ``prompt_len`` is the single offset that
converts between the two.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Sequence, Set

import numpy as np


class IllegalTransition(Exception):
    """A commit tried to overwrite a position that is already decoded."""


class NoCandidates(Exception):
    """A sampler was asked to choose from positions it has no scores for."""


class CacheIntegrityError(Exception):
    """A forward pass would have read a KV slot that was never written."""


class InvalidConfiguration(Exception):
    """Scheduler/sampler/cache/denoiser choices that cannot be composed."""


@dataclass(frozen=True)
class Vocab:
    """Token id space with one slot reserved for the mask token."""

    size: int
    mask_id: int

    def __post_init__(self) -> None:
        if self.size < 2:
            raise ValueError(f"vocab size must be >= 2, got {self.size}")
        if not 0 <= self.mask_id < self.size:
            raise ValueError(
                f"mask_id {self.mask_id} outside vocab of size {self.size}"
            )


class Candidate(NamedTuple):
    """Best non-mask token at a masked position and its probability."""

    token: int
    confidence: float


# Keyed by absolute position; every keyed position must currently be masked.
ConfidenceMap = Dict[int, Candidate]


@dataclass
class SequenceState:
    """Prompt plus fixed-length response buffer with mask bookkeeping.

    ``decoded_count`` always equals the number of response slots that no
    longer hold the mask id; a slot never reverts to masked.  The state is
    single-owner: only the decode loop mutates it, via :meth:`commit`.
    """

    prompt: np.ndarray
    response: np.ndarray
    vocab: Vocab
    decoded_count: int = 0
    step: int = 0

    @property
    def prompt_len(self) -> int:
        return int(self.prompt.shape[0])

    @property
    def gen_len(self) -> int:
        return int(self.response.shape[0])

    @property
    def seq_len(self) -> int:
        return self.prompt_len + self.gen_len

    def full_tokens(self) -> np.ndarray:
        """Concatenated prompt + response buffer (absolute coordinates)."""
        return np.concatenate([self.prompt, self.response])

    def is_masked(self, position: int) -> bool:
        """True if the response-relative ``position`` is still undecoded."""
        return int(self.response[position]) == self.vocab.mask_id

    def commit(self, position: int, token: int) -> None:
        """Write ``token`` into the masked response slot ``position``.

        The only operation that mutates response content.  Raises
        ``ValueError`` for out-of-range arguments or a mask-id token, and
        :class:`IllegalTransition` when the slot is already decoded.
        """
        if not 0 <= position < self.gen_len:
            raise ValueError(f"position {position} outside response of length {self.gen_len}")
        if not 0 <= token < self.vocab.size:
            raise ValueError(f"token {token} outside vocab of size {self.vocab.size}")
        if token == self.vocab.mask_id:
            raise ValueError("cannot commit the mask token")
        if int(self.response[position]) != self.vocab.mask_id:
            raise IllegalTransition(f"position {position} is already decoded")
        self.response[position] = token
        self.decoded_count += 1

    def masked_positions(self, start: int, stop: int) -> Set[int]:
        """Response-relative masked positions within the half-open [start, stop)."""
        if not (0 <= start <= stop <= self.gen_len):
            raise ValueError(
                f"range [{start}, {stop}) not contained in [0, {self.gen_len})"
            )
        window = self.response[start:stop]
        (idx,) = np.nonzero(window == self.vocab.mask_id)
        return {start + int(i) for i in idx}


def new_sequence(prompt: Sequence[int], gen_len: int, vocab: Vocab) -> SequenceState:
    """Fresh state: the response is ``gen_len`` mask slots, nothing decoded."""
    prompt_arr = np.asarray(prompt, dtype=np.int64)
    if prompt_arr.ndim != 1 or prompt_arr.shape[0] == 0:
        raise ValueError("prompt must be a non-empty 1-d sequence of token ids")
    if gen_len < 1:
        raise ValueError(f"gen_len must be >= 1, got {gen_len}")
    if prompt_arr.min() < 0 or prompt_arr.max() >= vocab.size:
        raise ValueError("prompt contains token ids outside the vocabulary")
    response = np.full(gen_len, vocab.mask_id, dtype=np.int64)
    return SequenceState(prompt=prompt_arr, response=response, vocab=vocab)


# Cache event tags carried on step records.
EVENT_NONE = "none"
EVENT_PARTIAL = "partial"
EVENT_REFRESH = "global-refresh"


@dataclass
class StepRecord:
    """Trace of one decode iteration.

    ``positions``/``tokens``/``confidences`` run in parallel over the commits
    of the step, positions ascending and absolute.
    """

    step: int
    block_start: int
    block_end: int
    positions: List[int] = field(default_factory=list)
    tokens: List[int] = field(default_factory=list)
    confidences: List[float] = field(default_factory=list)
    recompute_count: int = 0
    cache_event: str = EVENT_NONE
    fallback: bool = False

    @property
    def commits(self) -> int:
        return len(self.positions)

    def to_json(self) -> str:
        import json

        # Field order is fixed so trace files are byte-stable across reruns.
        payload = {
            "step": self.step,
            "block_start": self.block_start,
            "block_end": self.block_end,
            "positions": self.positions,
            "tokens": self.tokens,
            "confidences": self.confidences,
            "recompute_count": self.recompute_count,
            "cache_event": self.cache_event,
            "fallback": self.fallback,
        }
        return json.dumps(payload, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "StepRecord":
        import json

        d = json.loads(line)
        return cls(
            step=d["step"],
            block_start=d["block_start"],
            block_end=d["block_end"],
            positions=list(d["positions"]),
            tokens=list(d["tokens"]),
            confidences=list(d["confidences"]),
            recompute_count=d["recompute_count"],
            cache_event=d["cache_event"],
            fallback=d["fallback"],
        )
