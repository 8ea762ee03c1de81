import math
import random
from functools import reduce

import pytest

from tierkv.scoring import (
    FLAG_STABLE,
    ScoringMethod,
    TrackerRecord,
    decode_tracker_block,
    effective_score,
    fresh_record,
    merge_records,
)

ALPHA = 0.9


def direct_exp_score(access_slices, now):
    """Independent oracle: every access in slice s contributes alpha**(now-s)."""
    return sum(ALPHA ** (now - s) for s in access_slices)


def fold_history(slices, method, alpha=ALPHA):
    recs = [fresh_record(b"k", 100, s, method) for s in slices]
    return reduce(lambda a, b: merge_records(a, b, method, alpha), recs)


def test_merge_example_decayed_older_side():
    a = TrackerRecord(b"k", 10, tick=3, score=1.0)
    b = TrackerRecord(b"k", 10, tick=5, score=1.0)
    m = merge_records(a, b, ScoringMethod.EXP_SMOOTHING, alpha=0.5)
    assert m.tick == 5
    assert m.score == pytest.approx(1.25, abs=1e-12)


def test_merge_zero_element():
    a = TrackerRecord(b"k", 10, tick=5, score=0.0)
    b = TrackerRecord(b"k", 10, tick=5, score=3.5)
    m = merge_records(a, b, ScoringMethod.EXP_SMOOTHING, alpha=0.5)
    assert (m.tick, m.score) == (5, 3.5)


def test_merge_same_tick_two_accesses():
    m = fold_history([7, 7], ScoringMethod.EXP_SMOOTHING)
    assert m.score == pytest.approx(2.0)
    assert m.tick == 7


def test_merge_key_mismatch_raises():
    a = TrackerRecord(b"k1", 10, 0, 1.0)
    b = TrackerRecord(b"k2", 10, 0, 1.0)
    with pytest.raises(ValueError):
        merge_records(a, b, ScoringMethod.EXP_SMOOTHING, ALPHA)


def test_merge_commutative_random_pairs():
    rng = random.Random(7)
    for _ in range(10_000):
        a = TrackerRecord(b"k", rng.randrange(1, 1000),
                          rng.randrange(0, 50), rng.uniform(0, 10))
        b = TrackerRecord(b"k", rng.randrange(1, 1000),
                          rng.randrange(0, 50), rng.uniform(0, 10))
        ab = merge_records(a, b, ScoringMethod.EXP_SMOOTHING, ALPHA)
        ba = merge_records(b, a, ScoringMethod.EXP_SMOOTHING, ALPHA)
        assert ab.tick == ba.tick
        assert math.isclose(ab.score, ba.score, rel_tol=1e-12)


def test_fold_matches_direct_sum_random_histories():
    """Fold of pairwise merges equals the closed-form score, 1e-9 relative."""
    rng = random.Random(11)
    for _ in range(10_000):
        n = rng.randrange(1, 12)
        slices = sorted(rng.randrange(0, 40) for _ in range(n))
        rng.shuffle(slices)
        folded = fold_history(slices, ScoringMethod.EXP_SMOOTHING)
        now = folded.tick
        assert now == max(slices)
        expected = direct_exp_score(slices, now)
        assert math.isclose(folded.score, expected, rel_tol=1e-9)


def test_lru_merge_is_max_oracle():
    rng = random.Random(13)
    for _ in range(2000):
        slices = [rng.randrange(0, 100) for _ in range(rng.randrange(1, 10))]
        folded = fold_history(slices, ScoringMethod.LRU)
        assert folded.score == float(max(slices))


def test_clock_merge_is_sum_oracle():
    rng = random.Random(17)
    for _ in range(2000):
        slices = [rng.randrange(0, 100) for _ in range(rng.randrange(1, 10))]
        folded = fold_history(slices, ScoringMethod.CLOCK)
        assert folded.score == float(len(slices))


def test_clock_counter_saturates_at_32_bits():
    a = TrackerRecord(b"k", 1, 0, float(2**32 - 2))
    b = TrackerRecord(b"k", 1, 0, 100.0)
    m = merge_records(a, b, ScoringMethod.CLOCK, ALPHA)
    assert m.score == float(2**32 - 1)


def test_hot_size_example():
    r = fresh_record(b"user12345", 200, tick=12, method=ScoringMethod.EXP_SMOOTHING)
    assert r.hot_size == 209


def test_physical_size_example():
    # 4-byte key length prefix plus 8 bytes each for value_len/tick/score
    r = fresh_record(b"user12345", 200, tick=12, method=ScoringMethod.EXP_SMOOTHING)
    assert r.physical_size == 37


def test_decayed_score_consistency():
    r = TrackerRecord(b"k", 10, tick=4, score=2.0)
    got = effective_score(r, 9, ScoringMethod.EXP_SMOOTHING, ALPHA)
    assert got == pytest.approx(2.0 * ALPHA**5)


def test_lru_effective_score_does_not_decay():
    r = TrackerRecord(b"k", 10, tick=4, score=4.0)
    assert effective_score(r, 100, ScoringMethod.LRU, ALPHA) == 4.0


def test_value_len_taken_from_newer_record():
    a = TrackerRecord(b"k", 100, tick=1, score=1.0)
    b = TrackerRecord(b"k", 500, tick=3, score=1.0)
    assert merge_records(a, b, ScoringMethod.EXP_SMOOTHING, ALPHA).value_len == 500
    assert merge_records(b, a, ScoringMethod.EXP_SMOOTHING, ALPHA).value_len == 500


def test_merge_marks_stable_and_adds_counters():
    a = fresh_record(b"k", 10, 0, ScoringMethod.EXP_SMOOTHING, delta_c=1)
    b = fresh_record(b"k", 10, 2, ScoringMethod.EXP_SMOOTHING, delta_c=1)
    m = merge_records(a, b, ScoringMethod.EXP_SMOOTHING, ALPHA, c_max=10)
    assert m.counter == 2
    assert m.flags & FLAG_STABLE
    assert m.stable


def test_counter_saturates_at_c_max():
    a = TrackerRecord(b"k", 10, 0, 1.0, counter=10, flags=FLAG_STABLE)
    b = fresh_record(b"k", 10, 1, ScoringMethod.EXP_SMOOTHING)
    m = merge_records(a, b, ScoringMethod.EXP_SMOOTHING, ALPHA, c_max=10)
    assert m.counter == 10


def test_record_encoding_roundtrip():
    recs = [
        TrackerRecord(b"user12345", 200, 12, 3.25, counter=4, flags=1, epoch=9),
        TrackerRecord(b"a", 0, 0, 0.0),
        TrackerRecord(b"z" * 40, 10**9, 2**40, 1e12, counter=255, flags=3, epoch=2**31),
    ]
    buf = b"".join(r.encode() for r in recs)
    assert decode_tracker_block(buf) == recs
