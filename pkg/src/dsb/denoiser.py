"""A small deterministic bidirectional transformer used as the denoiser.

The model is meant for desk-scale verification of scheduling and caching
semantics, not for generating text anyone wants to read: every weight is
drawn from a seeded PRNG, so two models built from the same config are
bitwise identical.  It exposes two forward paths:

* :meth:`TinyDenoiser.forward_full` runs all positions and returns a freshly
  populated KV store.
* :meth:`TinyDenoiser.forward_cached` forms queries only for a requested
  recompute set, overwrites those rows of the KV store, and serves every
  other key/value from the store as-is.  Stale entries between refreshes are
  accepted by design; validity flags only guard slots that were never
  written.

Attention is fully bidirectional (no causal mask), positions are learned
absolute embeddings, and all arithmetic is float32 with max-subtracted
softmax.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .state import Candidate, CacheIntegrityError, ConfidenceMap, Vocab

WEIGHT_SPAN = 0.1  # all weights ~ Uniform(-WEIGHT_SPAN, +WEIGHT_SPAN)
LN_EPS = np.float32(1e-5)

_MAGIC = b"DSBW"
_HEADER = struct.Struct("<4sHIHHH")  # magic, version, vocab, width, heads, depth
_VERSION = 1


@dataclass(frozen=True)
class DenoiserConfig:
    """Toy-scale defaults: 64 real tokens + 1 mask slot, 4 heads, 4 layers."""

    vocab_size: int = 65
    width: int = 64
    heads: int = 4
    depth: int = 4
    max_len: int = 512
    seed: int = 0

    def __post_init__(self) -> None:
        if self.vocab_size < 2:
            raise ValueError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.width % self.heads != 0:
            raise ValueError(
                f"width {self.width} is not divisible by {self.heads} heads"
            )
        if self.depth < 1 or self.max_len < 1:
            raise ValueError("depth and max_len must be >= 1")


class LayerKV:
    """Per-layer key/value rows plus validity and freshness bookkeeping."""

    def __init__(self, seq_len: int, width: int):
        self.keys = np.zeros((seq_len, width), dtype=np.float32)
        self.values = np.zeros((seq_len, width), dtype=np.float32)
        self.valid = np.zeros(seq_len, dtype=bool)
        self.stamp = np.zeros(seq_len, dtype=np.int64)


class KVStore:
    """All layers' KV rows for one decode; single-owner, mutated in place.

    ``query_count`` accumulates how many attention queries the cached path
    has formed against this store, which drives the recompute metrics.
    """

    def __init__(self, seq_len: int, width: int, depth: int):
        self.seq_len = seq_len
        self.layers = [LayerKV(seq_len, width) for _ in range(depth)]
        self.update_count = 0
        self.query_count = 0


def _layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + LN_EPS) * gain + bias


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def _param_shapes(config: DenoiserConfig) -> List[Tuple[str, Tuple[int, ...]]]:
    """Parameter names and shapes in creation (and serialization) order."""
    d = config.width
    shapes: List[Tuple[str, Tuple[int, ...]]] = [
        ("tok_emb", (config.vocab_size, d)),
        ("pos_emb", (config.max_len, d)),
    ]
    for i in range(config.depth):
        shapes += [
            (f"l{i}.ln1_g", (d,)),
            (f"l{i}.ln1_b", (d,)),
            (f"l{i}.wq", (d, d)),
            (f"l{i}.bq", (d,)),
            (f"l{i}.wk", (d, d)),
            (f"l{i}.bk", (d,)),
            (f"l{i}.wv", (d, d)),
            (f"l{i}.bv", (d,)),
            (f"l{i}.wo", (d, d)),
            (f"l{i}.bo", (d,)),
            (f"l{i}.ln2_g", (d,)),
            (f"l{i}.ln2_b", (d,)),
            (f"l{i}.w_up", (d, 4 * d)),
            (f"l{i}.b_up", (4 * d,)),
            (f"l{i}.w_down", (4 * d, d)),
            (f"l{i}.b_down", (d,)),
        ]
    shapes += [
        ("ln_f_g", (d,)),
        ("ln_f_b", (d,)),
        ("w_out", (d, config.vocab_size)),
        ("b_out", (config.vocab_size,)),
    ]
    return shapes


class TinyDenoiser:
    """Seeded bidirectional transformer satisfying the denoiser contract."""

    def __init__(self, config: DenoiserConfig, params: Optional[Dict[str, np.ndarray]] = None):
        self.config = config
        if params is None:
            rng = np.random.default_rng(config.seed)
            params = {
                name: rng.uniform(-WEIGHT_SPAN, WEIGHT_SPAN, size=shape).astype(np.float32)
                for name, shape in _param_shapes(config)
            }
        self.params = params

    @property
    def vocab(self) -> Vocab:
        # The last vocabulary slot is the reserved mask token.
        return Vocab(size=self.config.vocab_size, mask_id=self.config.vocab_size - 1)

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for name, _ in _param_shapes(self.config):
            digest.update(self.params[name].tobytes())
        return digest.hexdigest()

    def empty_cache(self, seq_len: int) -> KVStore:
        if seq_len > self.config.max_len:
            raise ValueError(f"seq_len {seq_len} exceeds max_len {self.config.max_len}")
        return KVStore(seq_len, self.config.width, self.config.depth)

    def _check_tokens(self, tokens: np.ndarray) -> None:
        if tokens.ndim != 1 or tokens.shape[0] < 1:
            raise ValueError("tokens must be a non-empty 1-d array")
        if tokens.shape[0] > self.config.max_len:
            raise ValueError(
                f"sequence of length {tokens.shape[0]} exceeds max_len {self.config.max_len}"
            )
        if tokens.min() < 0 or tokens.max() >= self.config.vocab_size:
            raise ValueError("token id outside the vocabulary")

    def _attend(self, q: np.ndarray, keys: np.ndarray, values: np.ndarray) -> np.ndarray:
        """Full bidirectional attention of queries q over all keys/values."""
        h = self.config.heads
        dh = self.config.width // h
        qh = q.reshape(q.shape[0], h, dh)
        kh = keys.reshape(keys.shape[0], h, dh)
        vh = values.reshape(values.shape[0], h, dh)
        scores = np.einsum("qhd,khd->hqk", qh, kh) / np.sqrt(np.float32(dh))
        weights = softmax(scores, axis=-1)
        out = np.einsum("hqk,khd->qhd", weights, vh)
        return out.reshape(q.shape[0], self.config.width)

    def forward_full(self, tokens: Sequence[int]) -> Tuple[np.ndarray, KVStore]:
        """Logits for every position plus a fully populated KV store."""
        tokens = np.asarray(tokens, dtype=np.int64)
        self._check_tokens(tokens)
        n = tokens.shape[0]
        p = self.params
        cache = self.empty_cache(n)
        cache.update_count = 1
        cache.query_count = n

        x = p["tok_emb"][tokens] + p["pos_emb"][:n]
        for i in range(self.config.depth):
            h = _layer_norm(x, p[f"l{i}.ln1_g"], p[f"l{i}.ln1_b"])
            q = h @ p[f"l{i}.wq"] + p[f"l{i}.bq"]
            k = h @ p[f"l{i}.wk"] + p[f"l{i}.bk"]
            v = h @ p[f"l{i}.wv"] + p[f"l{i}.bv"]
            layer = cache.layers[i]
            layer.keys[:] = k
            layer.values[:] = v
            layer.valid[:] = True
            layer.stamp[:] = cache.update_count
            x = x + self._attend(q, k, v) @ p[f"l{i}.wo"] + p[f"l{i}.bo"]
            h2 = _layer_norm(x, p[f"l{i}.ln2_g"], p[f"l{i}.ln2_b"])
            x = x + np.maximum(h2 @ p[f"l{i}.w_up"] + p[f"l{i}.b_up"], 0.0) @ p[
                f"l{i}.w_down"
            ] + p[f"l{i}.b_down"]
        logits = _layer_norm(x, p["ln_f_g"], p["ln_f_b"]) @ p["w_out"] + p["b_out"]
        return logits, cache

    def forward_cached(
        self, tokens: Sequence[int], cache: KVStore, recompute: Iterable[int]
    ) -> np.ndarray:
        """Logits for the recompute positions only, refreshing their KV rows.

        Queries are formed solely for ``recompute``; their attention runs
        against fresh keys/values at those rows and stored (possibly stale)
        keys/values everywhere else.  Rows outside the recompute set must
        have been written before, otherwise :class:`CacheIntegrityError`.
        Returned logits rows follow ascending position order.
        """
        tokens = np.asarray(tokens, dtype=np.int64)
        self._check_tokens(tokens)
        n = tokens.shape[0]
        if n != cache.seq_len:
            raise ValueError(f"cache sized for {cache.seq_len} positions, got {n} tokens")
        rows = np.unique(np.asarray(list(recompute), dtype=np.int64))
        if rows.size == 0:
            raise ValueError("recompute set is empty: no queries to form")
        if rows[0] < 0 or rows[-1] >= n:
            raise ValueError("recompute position outside the token buffer")

        cached = np.ones(n, dtype=bool)
        cached[rows] = False
        for i, layer in enumerate(cache.layers):
            if not layer.valid[cached].all():
                bad = int(np.nonzero(cached & ~layer.valid)[0][0])
                raise CacheIntegrityError(
                    f"layer {i} position {bad} was never computed but is outside the recompute set"
                )

        p = self.params
        cache.update_count += 1
        cache.query_count += int(rows.size)

        x = p["tok_emb"][tokens[rows]] + p["pos_emb"][rows]
        for i in range(self.config.depth):
            layer = cache.layers[i]
            h = _layer_norm(x, p[f"l{i}.ln1_g"], p[f"l{i}.ln1_b"])
            q = h @ p[f"l{i}.wq"] + p[f"l{i}.bq"]
            layer.keys[rows] = h @ p[f"l{i}.wk"] + p[f"l{i}.bk"]
            layer.values[rows] = h @ p[f"l{i}.wv"] + p[f"l{i}.bv"]
            layer.valid[rows] = True
            layer.stamp[rows] = cache.update_count
            x = x + self._attend(q, layer.keys, layer.values) @ p[f"l{i}.wo"] + p[f"l{i}.bo"]
            h2 = _layer_norm(x, p[f"l{i}.ln2_g"], p[f"l{i}.ln2_b"])
            x = x + np.maximum(h2 @ p[f"l{i}.w_up"] + p[f"l{i}.b_up"], 0.0) @ p[
                f"l{i}.w_down"
            ] + p[f"l{i}.b_down"]
        return _layer_norm(x, p["ln_f_g"], p["ln_f_b"]) @ p["w_out"] + p["b_out"]

    def save_weights(self, path: str) -> None:
        """Flat little-endian float32 dump with a 16-byte header."""
        header = _HEADER.pack(
            _MAGIC,
            _VERSION,
            self.config.vocab_size,
            self.config.width,
            self.config.heads,
            self.config.depth,
        )
        with open(path, "wb") as fh:
            fh.write(header)
            for name, _ in _param_shapes(self.config):
                fh.write(np.ascontiguousarray(self.params[name], dtype="<f4").tobytes())

    @classmethod
    def load_weights(cls, path: str) -> "TinyDenoiser":
        with open(path, "rb") as fh:
            blob = fh.read()
        if len(blob) < _HEADER.size:
            raise ValueError("weight file too short for its header")
        magic, version, vocab_size, width, heads, depth = _HEADER.unpack_from(blob)
        if magic != _MAGIC:
            raise ValueError(f"bad magic {magic!r} in weight file")
        if version != _VERSION:
            raise ValueError(f"unsupported weight file version {version}")
        flat = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
        # max_len is not in the header; recover it from the float count.
        probe = DenoiserConfig(vocab_size=vocab_size, width=width, heads=heads, depth=depth, max_len=1)
        fixed = sum(
            int(np.prod(shape))
            for name, shape in _param_shapes(probe)
            if name != "pos_emb"
        )
        remainder = flat.size - fixed
        if remainder <= 0 or remainder % width != 0:
            raise ValueError("weight file size inconsistent with its header")
        config = DenoiserConfig(
            vocab_size=vocab_size,
            width=width,
            heads=heads,
            depth=depth,
            max_len=remainder // width,
        )
        params: Dict[str, np.ndarray] = {}
        offset = 0
        for name, shape in _param_shapes(config):
            count = int(np.prod(shape))
            params[name] = flat[offset : offset + count].reshape(shape).astype(np.float32)
            offset += count
        if offset != flat.size:
            raise ValueError("trailing bytes in weight file")
        return cls(config, params)


def confidences(
    logits: np.ndarray,
    masked: Iterable[int],
    vocab: Vocab,
    positions: Optional[np.ndarray] = None,
) -> ConfidenceMap:
    """Best non-mask token and its probability for each masked position.

    ``positions`` gives the absolute position of each logits row; by default
    row i scores position i.  The mask token is excluded before the softmax,
    so the argmax can never be the mask id and a flat row over V tokens
    yields confidence 1/(V-1).
    """
    if positions is None:
        positions = np.arange(logits.shape[0], dtype=np.int64)
    row_of = {int(pos): r for r, pos in enumerate(positions)}
    targets = sorted(int(m) for m in masked)
    if not targets:
        return {}
    try:
        rows = np.array([row_of[pos] for pos in targets], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"no logits row for masked position {exc.args[0]}") from None
    scores = logits[rows].astype(np.float32, copy=True)
    scores[:, vocab.mask_id] = -np.inf
    probs = softmax(scores, axis=-1)
    best = probs.argmax(axis=-1)
    conf = probs[np.arange(len(targets)), best]
    return {
        pos: Candidate(int(tok), float(c))
        for pos, tok, c in zip(targets, best, conf)
    }


def parse_denoiser_config(spec: str) -> DenoiserConfig:
    """Parse `toy:seed=42` with optional v/d/h/layers/maxlen overrides."""
    from .configstr import reject_unknown, split_spec

    name, params = split_spec(spec)
    if name != "toy":
        raise ValueError(f"unknown denoiser {name!r} in {spec!r}")
    fields = {
        "seed": int(params.pop("seed", 0)),
        "vocab_size": int(params.pop("v", 65)),
        "width": int(params.pop("d", 64)),
        "heads": int(params.pop("h", 4)),
        "depth": int(params.pop("layers", 4)),
        "max_len": int(params.pop("maxlen", 512)),
    }
    reject_unknown(params, spec)
    return DenoiserConfig(**fields)
