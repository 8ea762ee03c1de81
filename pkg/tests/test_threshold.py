"""Checks for the weighted-sampling score threshold estimator.

Brute-force oracle: sort records by score descending and accumulate sizes;
the exact answer retains the maximal prefix whose size stays at or under the
target.
"""

import math
import random

from tierkv.ralt import estimate_score_threshold


def realized_retained(records, threshold):
    return sum(size for score, size in records if score >= threshold)


def brute_force_threshold(records, target):
    """Smallest score such that retaining scores >= it stays within target."""
    by_score = sorted(records, key=lambda r: -r[0])
    acc = 0
    best = math.inf
    for score, size in by_score:
        if acc + size > target:
            break
        acc += size
        best = score
    return best


def test_identical_scores_return_unique_score():
    records = [(3.5, 10)] * 50
    s = estimate_score_threshold(records, 500, 250, 1000, random.Random(1))
    assert s == 3.5


def test_unit_sizes_scores_one_to_ten():
    """Sizes 1, scores 1..10, target 5 of 10: threshold lands in {6, 7}."""
    records = [(float(i), 1) for i in range(1, 11)]
    outcomes = set()
    for seed in range(50):
        s = estimate_score_threshold(records, 10, 5, 10_000, random.Random(seed))
        outcomes.add(s)
    assert outcomes <= {6.0, 7.0}


def test_dominant_record_always_retained():
    """One record holding 90% of the mass with the top score survives any
    target of at least 10% of the total."""
    small = [(float(i), 1) for i in range(1, 11)]
    records = small + [(100.0, 90)]
    for seed in range(20):
        s = estimate_score_threshold(records, 100, 10, 10_000, random.Random(seed))
        assert s is not None and s <= 100.0
        assert realized_retained(records, s) >= 90


def test_empty_input_returns_none():
    assert estimate_score_threshold([], 0, 0, 100, random.Random(0)) is None


def test_realized_size_tracks_target_continuous_scores():
    rng = random.Random(42)
    ok = 0
    trials = 30
    for t in range(trials):
        inst = random.Random(1000 + t)
        records = [(inst.uniform(0, 1), inst.randrange(1, 100))
                   for _ in range(5000)]
        total = sum(s for _, s in records)
        target = 0.9 * total
        thr = estimate_score_threshold(records, total, target, 10_000, rng)
        realized = realized_retained(records, thr)
        if abs(realized - target) <= 0.01 * target:
            ok += 1
    assert ok >= trials - 1


def test_overshoot_bounded_by_sampling_noise():
    """The selection is conservative in sample space, so the realized size
    can only exceed the target by sampling noise, ~total/sqrt(n)."""
    rng = random.Random(3)
    inst = random.Random(4)
    records = [(inst.uniform(0, 1), inst.randrange(1, 50)) for _ in range(3000)]
    total = sum(s for _, s in records)
    n = 10_000
    for frac in (0.5, 0.75, 0.9):
        target = frac * total
        thr = estimate_score_threshold(records, total, target, n, rng)
        realized = realized_retained(records, thr)
        assert realized <= target + 3 * total / math.sqrt(n) + 50


def test_matches_brute_force_on_separated_scores():
    """With well separated scores and coarse sizes both answers agree."""
    records = [(float(i), 100) for i in range(1, 21)]
    total = 2000
    target = 700
    thr = estimate_score_threshold(records, total, target, 20_000, random.Random(9))
    assert thr == brute_force_threshold(records, target)
