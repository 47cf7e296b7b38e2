"""Synthetic denoiser with scriptable per-position difficulty.

Confidence at a masked response position i is a deterministic function of the
profile and the mask/decoded geometry around it:

    c_i = clip((1 - delta_i) + gain * f_i, 0, 1)

where f_i is the fraction of decoded positions among the response neighbors
within ``radius`` of i.  The predicted token is the scripted ground truth
with probability c_i and a seeded decoy otherwise; draws are keyed by
(seed, step, position), so identical commit histories replay identically.
Committed token values are deliberately ignored: only the mask/decoded
status feeds back, which keeps scheduler comparisons analyzable.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, List, Sequence

import numpy as np

from .state import Candidate, ConfidenceMap, SequenceState, StepRecord, Vocab

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _hash_chain(*parts: int) -> int:
    h = 0
    for part in parts:
        h = _splitmix64(h ^ (part & _MASK64))
    return h


@dataclass(frozen=True)
class DifficultyProfile:
    """Scripted difficulty geometry over one response buffer.

    ``base_difficulty[i]`` in [0, 1] is how unsure the oracle is about
    position i with zero context; ``context_gain`` scales how much decoded
    neighbors within ``radius`` help; ``truth[i]`` is the token the oracle is
    trying to predict there.
    """

    base_difficulty: tuple
    context_gain: float
    radius: int
    truth: tuple
    seed: int

    def __post_init__(self) -> None:
        if len(self.base_difficulty) != len(self.truth):
            raise ValueError("base_difficulty and truth must have equal length")
        if any(not 0.0 <= d <= 1.0 for d in self.base_difficulty):
            raise ValueError("base difficulties must lie in [0, 1]")
        if not 0.0 <= self.context_gain <= 1.0:
            raise ValueError(f"context_gain must lie in [0, 1], got {self.context_gain}")
        if self.radius < 1:
            raise ValueError(f"radius must be >= 1, got {self.radius}")

    @property
    def gen_len(self) -> int:
        return len(self.base_difficulty)


def make_profile(
    base_difficulty: Sequence[float],
    context_gain: float,
    radius: int,
    truth: Sequence[int],
    seed: int,
) -> DifficultyProfile:
    return DifficultyProfile(
        base_difficulty=tuple(float(d) for d in base_difficulty),
        context_gain=float(context_gain),
        radius=int(radius),
        truth=tuple(int(t) for t in truth),
        seed=int(seed),
    )


def context_fractions(profile: DifficultyProfile, decoded: np.ndarray) -> np.ndarray:
    """f_i for every response position given the decoded mask."""
    n = profile.gen_len
    r = profile.radius
    csum = np.concatenate([[0], np.cumsum(decoded.astype(np.int64))])
    idx = np.arange(n)
    lo = np.maximum(0, idx - r)
    hi = np.minimum(n, idx + r + 1)
    neighbors = hi - lo - 1  # the position itself never counts
    decoded_near = csum[hi] - csum[lo] - decoded.astype(np.int64)
    out = np.zeros(n, dtype=np.float64)
    has = neighbors > 0
    out[has] = decoded_near[has] / neighbors[has]
    return out


def _decoy(draw: int, truth: int, mask_id: int, vocab_size: int) -> int:
    """Deterministic non-truth, non-mask token derived from a hash draw."""
    token = draw % (vocab_size - 2)
    lo, hi = sorted((truth, mask_id))
    if token >= lo:
        token += 1
    if token >= hi:
        token += 1
    return token


def oracle_confidences(
    profile: DifficultyProfile, state: SequenceState, vocab: Vocab
) -> ConfidenceMap:
    """Confidence map (absolute keys) for every masked response position."""
    if profile.gen_len != state.gen_len:
        raise ValueError(
            f"profile scripted for length {profile.gen_len}, state has {state.gen_len}"
        )
    lp = state.prompt_len
    decoded = state.response != vocab.mask_id
    frac = context_fractions(profile, decoded)
    out: ConfidenceMap = {}
    for i in range(state.gen_len):
        if decoded[i]:
            continue
        c = (1.0 - profile.base_difficulty[i]) + profile.context_gain * frac[i]
        c = min(1.0, max(0.0, c))
        truth = profile.truth[i]
        u = _hash_chain(profile.seed, state.step, i, 1) / 2.0**64
        if u < c:
            token = truth
        else:
            draw = _hash_chain(profile.seed, state.step, i, 2)
            token = _decoy(draw, truth, vocab.mask_id, vocab.size)
        out[lp + i] = Candidate(int(token), float(c))
    return out


class OracleDenoiser:
    """Adapter that lets the decode loop drive a difficulty profile.

    Carries no KV state, so it only composes with the no-cache policy.
    """

    def __init__(self, profile: DifficultyProfile, vocab: Vocab):
        if vocab.size < 3:
            raise ValueError("oracle decoys need at least two non-mask tokens")
        for t in profile.truth:
            if not 0 <= t < vocab.size or t == vocab.mask_id:
                raise ValueError(f"ground-truth token {t} invalid for the vocabulary")
        self.profile = profile
        self.vocab = vocab

    def confidence_map(self, state: SequenceState) -> ConfidenceMap:
        return oracle_confidences(self.profile, state, self.vocab)

    def reseeded(self, seed: int) -> "OracleDenoiser":
        return OracleDenoiser(replace(self.profile, seed=seed), self.vocab)


def premature_commit_count(records: Iterable[StepRecord], floor: float) -> int:
    """Committed tokens whose confidence at commit time was below ``floor``."""
    if not 0.0 < floor < 1.0:
        raise ValueError(f"floor must lie in (0, 1), got {floor}")
    return sum(
        1 for rec in records for conf in rec.confidences if conf < floor
    )


def exact_match_rate(records: Iterable[StepRecord], profile: DifficultyProfile, prompt_len: int) -> float:
    """Fraction of committed tokens equal to the scripted ground truth."""
    total = 0
    hits = 0
    for rec in records:
        for pos, tok in zip(rec.positions, rec.tokens):
            total += 1
            if profile.truth[pos - prompt_len] == tok:
                hits += 1
    return hits / total if total else 0.0


def hard_easy_profile(
    gen_len: int,
    hard_position: int,
    vocab: Vocab,
    *,
    hard: float = 0.95,
    easy: float = 0.05,
    gain: float = 0.5,
    radius: int = 4,
    seed: int = 0,
) -> DifficultyProfile:
    """One hard position in an otherwise easy response: the boundary-failure script."""
    if not 0 <= hard_position < gen_len:
        raise ValueError("hard_position outside the response")
    delta = [easy] * gen_len
    delta[hard_position] = hard
    rng = np.random.default_rng(seed)
    choices = [t for t in range(vocab.size) if t != vocab.mask_id]
    truth = rng.choice(choices, size=gen_len).tolist()
    return make_profile(delta, gain, radius, truth, seed)


def save_profile(profile: DifficultyProfile, path: str) -> None:
    """One header block then one `index delta truth` record per position."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"gain={profile.context_gain:g}\n")
        fh.write(f"radius={profile.radius}\n")
        fh.write(f"seed={profile.seed}\n")
        for i, (d, t) in enumerate(zip(profile.base_difficulty, profile.truth)):
            fh.write(f"{i} {d:g} {t}\n")


def load_profile(path: str) -> DifficultyProfile:
    header = {}
    rows: List[tuple] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" in line and not line[0].isdigit():
                key, _, value = line.partition("=")
                header[key.strip()] = value.strip()
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected `index delta truth`, got {line!r}")
            rows.append((int(parts[0]), float(parts[1]), int(parts[2])))
    for key in ("gain", "radius", "seed"):
        if key not in header:
            raise ValueError(f"{path}: missing header field {key!r}")
    rows.sort()
    if [r[0] for r in rows] != list(range(len(rows))):
        raise ValueError(f"{path}: position records must cover 0..N-1 exactly once")
    return make_profile(
        [r[1] for r in rows],
        float(header["gain"]),
        int(header["radius"]),
        [r[2] for r in rows],
        int(header["seed"]),
    )
