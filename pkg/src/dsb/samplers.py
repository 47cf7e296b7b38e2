"""Commit selection: which eligible masked positions to unmask each step."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Tuple, Union

from .configstr import reject_unknown, split_spec
from .state import ConfidenceMap, NoCandidates


@dataclass(frozen=True)
class VanillaTop1:
    """Commit the single highest-confidence eligible position per step."""


@dataclass(frozen=True)
class ConfidenceThreshold:
    """Commit every eligible position whose confidence is >= tau.

    Falls back to the top-1 position when nothing clears the threshold, so
    the decode loop always makes progress.
    """

    tau: float = 0.9

    def __post_init__(self) -> None:
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")


SamplerKind = Union[VanillaTop1, ConfidenceThreshold]

Commit = Tuple[int, int]  # (absolute position, token)


def _scored(conf: ConfidenceMap, eligible: Iterable[int]) -> List[int]:
    positions = sorted(p for p in eligible if p in conf)
    if not positions:
        raise NoCandidates("no eligible position has a confidence entry")
    return positions


def select_top1(conf: ConfidenceMap, eligible: Iterable[int]) -> List[Commit]:
    """The eligible position of maximal confidence; ties go to the lowest index."""
    positions = _scored(conf, eligible)
    best = max(positions, key=lambda p: (conf[p].confidence, -p))
    return [(best, conf[best].token)]


def select_threshold(
    conf: ConfidenceMap, eligible: Iterable[int], tau: float
) -> Tuple[List[Commit], bool]:
    """All eligible positions with confidence >= tau, in position order.

    Returns ``(commits, fallback)`` where ``fallback`` marks that nothing
    cleared tau and the top-1 position was committed instead.
    """
    positions = _scored(conf, eligible)
    chosen = [(p, conf[p].token) for p in positions if conf[p].confidence >= tau]
    if chosen:
        return chosen, False
    return select_top1(conf, positions), True


def select(
    kind: SamplerKind, conf: ConfidenceMap, eligible: Iterable[int]
) -> Tuple[List[Commit], bool]:
    if isinstance(kind, VanillaTop1):
        return select_top1(conf, eligible), False
    return select_threshold(conf, eligible, kind.tau)


def parse_sampler(spec: str) -> SamplerKind:
    """Parse `vanilla` or `threshold:tau=0.9`."""
    name, params = split_spec(spec)
    if name == "vanilla":
        reject_unknown(params, spec)
        return VanillaTop1()
    if name == "threshold":
        try:
            tau = float(params.pop("tau"))
        except KeyError:
            raise ValueError(f"missing required parameter 'tau' in {spec!r}") from None
        except ValueError:
            raise ValueError(f"parameter 'tau' in {spec!r} is not a number") from None
        reject_unknown(params, spec)
        return ConfidenceThreshold(tau)
    raise ValueError(f"unknown sampler {name!r} in {spec!r}")


def format_sampler(kind: SamplerKind) -> str:
    if isinstance(kind, VanillaTop1):
        return "vanilla"
    return f"threshold:tau={kind.tau:g}"
