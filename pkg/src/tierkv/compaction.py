"""Compaction picking: benefit-cost scoring with a hot-size-aware benefit.

For compactions within one tier the benefit of moving a table down is its
whole file size; across the tier boundary the hot records will be retained
in fast storage, so only the cold remainder counts as benefit:

    intra-tier score = file_size / (file_size + overlapping_bytes)
    inter-tier score = (file_size - hot_size) / (file_size + overlapping_bytes)

Keeping file_size in the intra-tier numerator keeps both scores in [0, 1];
the ordering is the same as the classic file_size / overlapping_bytes since
x/(x+y) is monotone in x/y. Hot sizes come from the tracker and may
overestimate, so they are clamped to the file size. If every candidate's
benefit is zero (an all-hot level), the oldest table is picked instead of
the argmax so the level keeps making progress once anything cools down.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class CompactionCandidate:
    table: object               # SSTableMeta; only read here
    file_size: int
    overlapping_bytes: int
    hot_size: int
    creation_order: int
    inter_tier: bool
    benefit: int = 0
    score: float = 0.0

    def __post_init__(self):
        hot = min(self.hot_size, self.file_size) if self.inter_tier else 0
        self.benefit = max(self.file_size - hot, 0)
        self.score = score_candidate(self.file_size, self.overlapping_bytes,
                                     self.hot_size, self.inter_tier)


def score_candidate(file_size: int, overlapping_bytes: int, hot_size: int,
                    inter_tier: bool) -> float:
    if file_size <= 0:
        raise ValueError("file_size must be positive")
    if inter_tier:
        benefit = file_size - min(hot_size, file_size)
    else:
        benefit = file_size
    return benefit / (file_size + overlapping_bytes)


def pick(candidates: list[CompactionCandidate]) -> CompactionCandidate | None:
    """Argmax score; ties and the all-zero-benefit case fall back to oldest."""
    if not candidates:
        return None
    if all(c.benefit == 0 for c in candidates):
        return min(candidates, key=lambda c: c.creation_order)
    return min(candidates, key=lambda c: (-c.score, c.creation_order))
