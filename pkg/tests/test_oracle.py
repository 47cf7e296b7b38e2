import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsb.engine import decode
from dsb.kvcache import NoCache
from dsb.oracle import (
    DifficultyProfile,
    OracleDenoiser,
    context_fractions,
    exact_match_rate,
    hard_easy_profile,
    load_profile,
    make_profile,
    oracle_confidences,
    premature_commit_count,
    save_profile,
)
from dsb.samplers import ConfidenceThreshold, VanillaTop1
from dsb.schedulers import NaiveBlock, SlidingBlock
from dsb.state import new_sequence, Vocab

VOCAB = Vocab(size=16, mask_id=15)


def profile_of(deltas, gain, radius, seed=0):
    return make_profile(deltas, gain, radius, [1] * len(deltas), seed)


class TestConfidenceFormula:
    def test_easy_limit(self):
        prof = profile_of([0.0] * 6, gain=0.0, radius=2)
        state = new_sequence([1], 6, VOCAB)
        conf = oracle_confidences(prof, state, VOCAB)
        assert all(abs(c.confidence - 1.0) < 1e-12 for c in conf.values())

    def test_full_context_limit(self):
        prof = profile_of([1.0] * 5, gain=1.0, radius=2)
        state = new_sequence([1], 5, VOCAB)
        for i in [0, 1, 3, 4]:
            state.commit(i, 2)
        conf = oracle_confidences(prof, state, VOCAB)
        assert abs(conf[1 + 2].confidence - 1.0) < 1e-12

    def test_half_context_arithmetic(self):
        # delta=0.6, gain=0.5, half of the neighbors decoded -> 0.4 + 0.25
        prof = profile_of([0.6] * 5, gain=0.5, radius=2)
        state = new_sequence([1], 5, VOCAB)
        state.commit(0, 2)
        state.commit(1, 2)
        conf = oracle_confidences(prof, state, VOCAB)
        assert abs(conf[1 + 2].confidence - 0.65) < 1e-12

    def test_validation(self):
        with pytest.raises(ValueError):
            profile_of([1.2], gain=0.5, radius=2)
        with pytest.raises(ValueError):
            profile_of([0.5], gain=1.5, radius=2)
        with pytest.raises(ValueError):
            profile_of([0.5], gain=0.5, radius=0)
        with pytest.raises(ValueError):
            make_profile([0.5], 0.5, 2, [1, 2], 0)


class TestContextFractions:
    def test_counts_neighbors_not_self(self):
        prof = profile_of([0.5] * 5, gain=0.5, radius=1)
        decoded = np.array([True, False, True, False, False])
        f = context_fractions(prof, decoded)
        assert f[1] == 1.0  # both neighbors decoded
        assert f[3] == 0.5
        assert f[4] == 0.0

    def test_edges_have_fewer_neighbors(self):
        prof = profile_of([0.5] * 4, gain=0.5, radius=2)
        decoded = np.array([False, True, False, False])
        f = context_fractions(prof, decoded)
        assert f[0] == 0.5  # neighbors {1, 2}, one decoded


@settings(max_examples=150, deadline=None)
@given(
    gen_len=st.integers(min_value=2, max_value=20),
    radius=st.integers(min_value=1, max_value=6),
    gain=st.floats(min_value=0.0, max_value=1.0),
    data=st.data(),
)
def test_monotone_context_benefit(gen_len, radius, gain, data):
    """Decoding one more neighbor never lowers a masked position's confidence."""
    deltas = data.draw(
        st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=gen_len, max_size=gen_len)
    )
    prof = profile_of(deltas, gain=gain, radius=radius)
    decoded = data.draw(st.lists(st.booleans(), min_size=gen_len, max_size=gen_len))
    decoded = np.array(decoded)
    still_masked = [i for i in range(gen_len) if not decoded[i]]
    if len(still_masked) < 2:
        return
    target = still_masked[0]
    extra = still_masked[-1]
    base = context_fractions(prof, decoded)[target]
    decoded[extra] = True
    grown = context_fractions(prof, decoded)[target]
    assert grown >= base


class TestDeterminism:
    def test_same_seed_same_map(self):
        prof = profile_of([0.4] * 8, gain=0.3, radius=2, seed=9)
        state = new_sequence([1, 2], 8, VOCAB)
        state.commit(3, 4)
        a = oracle_confidences(prof, state, VOCAB)
        b = oracle_confidences(prof, state, VOCAB)
        assert a == b

    def test_different_seed_changes_decoys(self):
        state = new_sequence([1, 2], 40, VOCAB)
        maps = []
        for seed in (1, 2):
            prof = profile_of([0.95] * 40, gain=0.0, radius=2, seed=seed)
            maps.append(oracle_confidences(prof, state, VOCAB))
        tokens_a = [maps[0][k].token for k in sorted(maps[0])]
        tokens_b = [maps[1][k].token for k in sorted(maps[1])]
        assert tokens_a != tokens_b

    def test_tokens_never_mask_or_out_of_range(self):
        prof = profile_of([0.9] * 30, gain=0.1, radius=3, seed=5)
        state = new_sequence([1], 30, VOCAB)
        conf = oracle_confidences(prof, state, VOCAB)
        for cand in conf.values():
            assert 0 <= cand.token < VOCAB.size
            assert cand.token != VOCAB.mask_id

    def test_vocab_too_small_for_decoys(self):
        prof = profile_of([0.5] * 4, gain=0.5, radius=2)
        with pytest.raises(ValueError):
            OracleDenoiser(prof, Vocab(size=2, mask_id=1))


class TestPrematureCommits:
    def test_all_easy_top1_has_none(self):
        prof = profile_of([0.0] * 16, gain=0.0, radius=2)
        res = decode(OracleDenoiser(prof, VOCAB), NaiveBlock(4), VanillaTop1(), NoCache(), [1, 2], 16)
        assert premature_commit_count(res.records, 0.5) == 0

    def test_naive_forced_commit_is_premature(self):
        prof = hard_easy_profile(24, hard_position=6, vocab=VOCAB, radius=4, seed=3)
        res = decode(OracleDenoiser(prof, VOCAB), NaiveBlock(8), ConfidenceThreshold(0.9),
                     NoCache(), [1, 2], 24)
        assert premature_commit_count(res.records, 0.5) >= 1

    def test_sliding_defers_the_hard_position(self):
        prof = hard_easy_profile(24, hard_position=6, vocab=VOCAB, radius=4, seed=3)
        den = OracleDenoiser(prof, VOCAB)
        naive = decode(den, NaiveBlock(8), ConfidenceThreshold(0.9), NoCache(), [1, 2], 24)
        slid = decode(den, SlidingBlock(8, None), ConfidenceThreshold(0.9), NoCache(), [1, 2], 24)
        assert premature_commit_count(slid.records, 0.5) < premature_commit_count(naive.records, 0.5)

    def test_floor_validated(self):
        with pytest.raises(ValueError):
            premature_commit_count([], 0.0)


def first_commit_steps(records):
    out = {}
    for rec in records:
        for pos in rec.positions:
            out[pos] = rec.step
    return out


def test_boundary_positions_decode_earlier_hard_later():
    """The motivating geometry: one hard slot inside the first block delays
    easy positions beyond the block boundary under the fixed schedule."""
    gen_len, width, lp = 64, 8, 2
    prof = hard_easy_profile(gen_len, hard_position=6, vocab=VOCAB, radius=4, seed=11)
    den = OracleDenoiser(prof, VOCAB)
    sampler = ConfidenceThreshold(0.9)
    naive = first_commit_steps(
        decode(den, NaiveBlock(width), sampler, NoCache(), [1] * lp, gen_len).records
    )
    for kind in (SlidingBlock(width, width), SlidingBlock(width, None)):
        slid = first_commit_steps(decode(den, kind, sampler, NoCache(), [1] * lp, gen_len).records)
        for pos in range(lp + width, lp + width + 4):  # just beyond the first block
            assert slid[pos] < naive[pos]
        assert slid[lp + 6] > naive[lp + 6]


def test_exact_match_rate_counts_truth_hits():
    prof = profile_of([0.0] * 8, gain=0.0, radius=2)  # confidence 1: always truth
    res = decode(OracleDenoiser(prof, VOCAB), NaiveBlock(4), VanillaTop1(), NoCache(), [1], 8)
    assert exact_match_rate(res.records, prof, 1) == 1.0


class TestProfileFile:
    def test_round_trip(self, tmp_path):
        prof = hard_easy_profile(12, hard_position=3, vocab=VOCAB, radius=2, seed=4)
        path = tmp_path / "profile.txt"
        save_profile(prof, str(path))
        again = load_profile(str(path))
        assert again == prof

    def test_missing_header(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("gain=0.5\nradius=2\n0 0.5 1\n")
        with pytest.raises(ValueError):
            load_profile(str(path))

    def test_bad_record_reports_line(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("gain=0.5\nradius=2\nseed=1\n0 0.5\n")
        with pytest.raises(ValueError, match="bad.txt:4"):
            load_profile(str(path))

    def test_gapped_positions_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("gain=0.5\nradius=2\nseed=1\n0 0.5 1\n2 0.5 1\n")
        with pytest.raises(ValueError):
            load_profile(str(path))
