"""The iterative decode loop and the experiment-grid harness.

Per iteration the loop runs: recompute-set selection, denoiser forward (full
or cached), confidence extraction, eligible-set computation, commit
selection, commits, window advance, cache-schedule update.  One
:class:`StepRecord` is appended per iteration, so the trace replays the
decode exactly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from . import metrics
from .denoiser import TinyDenoiser, confidences, parse_denoiser_config
from .kvcache import (
    CachePolicy,
    NoCache,
    after_step,
    format_cache,
    new_schedule,
    parse_cache,
    recompute_set,
)
from .oracle import OracleDenoiser, exact_match_rate, load_profile
from .samplers import SamplerKind, format_sampler, parse_sampler, select
from .schedulers import (
    SchedulerKind,
    advance,
    eligible_set,
    format_scheduler,
    init_window,
    parse_scheduler,
)
from .state import (
    InvalidConfiguration,
    SequenceState,
    StepRecord,
    Vocab,
    new_sequence,
)

Denoiser = Union[TinyDenoiser, OracleDenoiser]


@dataclass
class DecodeResult:
    state: SequenceState
    records: List[StepRecord]
    early_stopped: bool = False

    @property
    def steps(self) -> int:
        return len(self.records)

    @property
    def response(self) -> np.ndarray:
        return self.state.response


def decode(
    denoiser: Denoiser,
    scheduler: SchedulerKind,
    sampler: SamplerKind,
    cache: CachePolicy,
    prompt: Sequence[int],
    gen_len: int,
    *,
    eos_id: Optional[int] = None,
) -> DecodeResult:
    """Decode ``gen_len`` tokens after ``prompt``; returns state plus trace."""
    vocab = denoiser.vocab
    neural = hasattr(denoiser, "forward_cached")
    if not neural and not isinstance(cache, NoCache):
        raise InvalidConfiguration(
            "cache policies other than nocache need a denoiser with KV support"
        )
    state = new_sequence(prompt, gen_len, vocab)
    lp = state.prompt_len
    seq_len = state.seq_len
    if neural and seq_len > denoiser.config.max_len:
        raise ValueError(
            f"prompt + response length {seq_len} exceeds denoiser max_len "
            f"{denoiser.config.max_len}"
        )

    window = init_window(scheduler, lp, gen_len)
    schedule = new_schedule(window)
    kv = denoiser.empty_cache(seq_len) if neural and not isinstance(cache, NoCache) else None
    records: List[StepRecord] = []
    early_stopped = False

    while state.decoded_count < gen_len:
        if state.step > gen_len:
            raise RuntimeError("decode failed to make progress")
        rset, event = recompute_set(cache, window, schedule, seq_len)
        if neural:
            tokens = state.full_tokens()
            if kv is None:
                logits, _ = denoiser.forward_full(tokens)
                rows = np.arange(seq_len, dtype=np.int64)
            else:
                logits = denoiser.forward_cached(tokens, kv, rset)
                rows = rset
            masked_abs = {lp + i for i in state.masked_positions(0, gen_len)}
            scoreable = masked_abs.intersection(int(r) for r in rows)
            conf = confidences(logits, scoreable, vocab, positions=rows)
        else:
            conf = denoiser.confidence_map(state)

        eligible = eligible_set(window, state)
        commits, fallback = select(sampler, conf, eligible)
        for pos, tok in commits:
            state.commit(pos - lp, tok)

        records.append(
            StepRecord(
                step=state.step,
                block_start=window.start,
                block_end=window.end,
                positions=[pos for pos, _ in commits],
                tokens=[tok for _, tok in commits],
                confidences=[conf[pos].confidence for pos, _ in commits],
                recompute_count=int(len(rset)),
                cache_event=event,
                fallback=fallback,
            )
        )

        start_used = window.start
        window = advance(scheduler, window, state)
        after_step(schedule, len(commits), event, start_used)
        state.step += 1

        if eos_id is not None:
            eos_positions = [pos for pos, tok in commits if tok == eos_id]
            if eos_positions:
                first = min(eos_positions) - lp
                if not state.masked_positions(0, first):
                    early_stopped = True
                    break

    return DecodeResult(state=state, records=records, early_stopped=early_stopped)


def write_trace(records: Iterable[StepRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json())
            fh.write("\n")


def read_trace(path: str) -> List[StepRecord]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(StepRecord.from_json(line))
    return out


def build_denoiser(spec: str, seed_offset: int = 0) -> Denoiser:
    """Build `toy:...` or `oracle:profile=PATH` denoisers from config strings."""
    from .configstr import reject_unknown, split_spec

    name, _ = split_spec(spec)
    if name == "toy":
        config = parse_denoiser_config(spec)
        if seed_offset:
            config = replace(config, seed=config.seed + seed_offset)
        return TinyDenoiser(config)
    if name == "oracle":
        _, params = split_spec(spec)
        try:
            path = params.pop("profile")
        except KeyError:
            raise ValueError(f"missing required parameter 'profile' in {spec!r}") from None
        vocab_size = int(params.pop("v", 65))
        reject_unknown(params, spec)
        profile = load_profile(path)
        vocab = Vocab(size=vocab_size, mask_id=vocab_size - 1)
        oracle = OracleDenoiser(profile, vocab)
        return oracle.reseeded(profile.seed + seed_offset) if seed_offset else oracle
    raise ValueError(f"unknown denoiser {name!r} in {spec!r}")


def make_prompt(vocab: Vocab, prompt_len: int, seed: int) -> np.ndarray:
    """Deterministic prompt of non-mask tokens for harness runs."""
    rng = np.random.default_rng([seed, prompt_len])
    choices = np.array([t for t in range(vocab.size) if t != vocab.mask_id])
    return rng.choice(choices, size=prompt_len, replace=True).astype(np.int64)


@dataclass
class GridSpec:
    """One experiment grid: the Cartesian product of every axis below."""

    schedulers: List[str]
    samplers: List[str]
    caches: List[str]
    denoisers: List[str]
    seeds: List[int]
    gen_len: int
    prompt_len: int = 8
    premature_floor: float = 0.5


def parse_grid_file(path: str) -> GridSpec:
    """Line-oriented `key = value` config; list values separated by `;`."""
    raw: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            key, sep, value = text.partition("=")
            key = key.strip()
            value = value.strip()
            if not sep or not value or not key.replace("_", "").isalnum():
                raise ValueError(f"{path}:{lineno}: expected `key = value`, got {text!r}")
            if key in raw:
                raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
            raw[key] = value

    def str_list(key: str) -> List[str]:
        if key not in raw:
            raise ValueError(f"{path}: missing required key {key!r}")
        items = [item.strip() for item in raw.pop(key).split(";") if item.strip()]
        if not items:
            raise ValueError(f"{path}: key {key!r} has no entries")
        return items

    try:
        spec = GridSpec(
            schedulers=str_list("schedulers"),
            samplers=str_list("samplers"),
            caches=str_list("caches"),
            denoisers=str_list("denoisers"),
            seeds=[int(s) for s in raw.pop("seeds", "0").split()],
            gen_len=int(raw.pop("gen_len")),
            prompt_len=int(raw.pop("prompt_len", "8")),
            premature_floor=float(raw.pop("premature_floor", "0.5")),
        )
    except KeyError as exc:
        raise ValueError(f"{path}: missing required key {exc.args[0]!r}") from None
    if raw:
        raise ValueError(f"{path}: unknown key(s) {sorted(raw)}")
    # Fail on malformed axis entries up front rather than mid-grid.
    for s in spec.schedulers:
        parse_scheduler(s)
    for s in spec.samplers:
        parse_sampler(s)
    for s in spec.caches:
        parse_cache(s)
    return spec


def run_cell(
    scheduler_spec: str,
    sampler_spec: str,
    cache_spec: str,
    denoiser_spec: str,
    seed: int,
    gen_len: int,
    prompt_len: int,
    premature_floor: float = 0.5,
) -> Dict[str, object]:
    """Run one grid cell and compute its metrics row."""
    denoiser = build_denoiser(denoiser_spec, seed_offset=seed)
    scheduler = parse_scheduler(scheduler_spec)
    sampler = parse_sampler(sampler_spec)
    cache = parse_cache(cache_spec)
    prompt = make_prompt(denoiser.vocab, prompt_len, seed)
    started = time.perf_counter()
    result = decode(denoiser, scheduler, sampler, cache, prompt, gen_len)
    elapsed = time.perf_counter() - started
    row: Dict[str, object] = {
        "scheduler": format_scheduler(scheduler),
        "sampler": format_sampler(sampler),
        "cache": format_cache(cache),
        "denoiser": denoiser_spec,
        "seed": seed,
    }
    row.update(metrics.run_stats(result.records, prompt_len + gen_len, premature_floor))
    if isinstance(denoiser, OracleDenoiser):
        row["exact_match"] = exact_match_rate(result.records, denoiser.profile, prompt_len)
    else:
        row["exact_match"] = None
    row["wall_time_s"] = elapsed
    return row


def run_grid(spec: Union[GridSpec, str]) -> List[Dict[str, object]]:
    """One metrics row per (scheduler x sampler x cache x denoiser x seed).

    Accepts a parsed :class:`GridSpec` or the path of a grid config file.
    """
    if isinstance(spec, str):
        spec = parse_grid_file(spec)
    rows = []
    for scheduler_spec in spec.schedulers:
        for sampler_spec in spec.samplers:
            for cache_spec in spec.caches:
                for denoiser_spec in spec.denoisers:
                    for seed in spec.seeds:
                        rows.append(
                            run_cell(
                                scheduler_spec,
                                sampler_spec,
                                cache_spec,
                                denoiser_spec,
                                seed,
                                spec.gen_len,
                                spec.prompt_len,
                                spec.premature_floor,
                            )
                        )
    return rows
