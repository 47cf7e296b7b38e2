"""Sliding-block decoding engine for masked-diffusion language models."""

from .denoiser import DenoiserConfig, TinyDenoiser, confidences
from .engine import DecodeResult, decode, read_trace, run_grid, write_trace
from .kvcache import (
    CacheSchedule,
    DSBCache,
    DualCache,
    NoCache,
    after_step,
    prefix_window_len,
    recompute_set,
)
from .oracle import (
    DifficultyProfile,
    OracleDenoiser,
    hard_easy_profile,
    oracle_confidences,
    premature_commit_count,
)
from .samplers import ConfidenceThreshold, VanillaTop1, select_threshold, select_top1
from .schedulers import (
    BlockWindow,
    NaiveBlock,
    SlidingBlock,
    advance_naive,
    advance_sliding,
    eligible_set,
    init_window,
)
from .state import (
    CacheIntegrityError,
    Candidate,
    ConfidenceMap,
    IllegalTransition,
    InvalidConfiguration,
    NoCandidates,
    SequenceState,
    StepRecord,
    Vocab,
    new_sequence,
)

__version__ = "0.1.0"
