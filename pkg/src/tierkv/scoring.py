"""Hotness scoring: tracker records and the per-method merge functions.

A tracker record carries (key, value_len, tick, score) plus two small
auto-tuning fields (a saturating counter and a stability tag). ``tick`` is
the logical time slice of the most recent access folded into the record.

Three scoring methods are supported. All of them are mergeable: the score
of a key over a concatenated access history equals a binary function of the
scores over the halves, so duplicate records in different runs can be
folded pairwise in any order.

* exponential smoothing: an access in slice i contributes alpha**(t-i) to
  the score as seen at slice t. A record stores the score as of its own
  tick; the live value at slice t is score * alpha**(t - tick). Merging
  records (tick_i, score_i), (tick_j, score_j) with tick_i <= tick_j gives
  (tick_j, alpha**(tick_j - tick_i) * score_i + score_j).
* lru: score is the latest access tick; merge takes the max.
* clock: score is a 32-bit access counter; merge is a saturating sum.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

EXP_SMOOTHING_ALPHA_DEFAULT = 0.9
CLOCK_MAX = 2**32 - 1

# record flags
FLAG_STABLE = 1   # auto-tuning tag t
FLAG_HIDDEN = 2   # kept on disk but below the hot threshold at its last rewrite

_HDR = struct.Struct("<I")
_PAYLOAD = struct.Struct("<QQdBBI")


class ScoringMethod(enum.Enum):
    EXP_SMOOTHING = "exp"
    LRU = "lru"
    CLOCK = "clock"


@dataclass
class TrackerRecord:
    """One tracked key: scoring payload plus auto-tuning state.

    ``counter``/``flags``/``epoch`` hold the auto-tuning state: counter is
    decremented lazily by comparing ``epoch`` with the global decay epoch.
    """

    key: bytes
    value_len: int
    tick: int
    score: float
    counter: int = 0
    flags: int = 0
    epoch: int = 0

    @property
    def hot_size(self) -> int:
        """Bytes the tracked record would occupy in fast storage."""
        return self.value_len + len(self.key)

    @property
    def physical_size(self) -> int:
        """Accounted bytes of the tracker record itself.

        4-byte key length prefix + key + 8 bytes each for value length,
        tick, and score. The auto-tuning sidecar is excluded from the
        accounting so sizing is method-independent.
        """
        return 4 + len(self.key) + 24

    @property
    def stable(self) -> bool:
        return bool(self.flags & FLAG_STABLE) and self.counter > 0

    @property
    def hidden(self) -> bool:
        return bool(self.flags & FLAG_HIDDEN)

    def encode(self) -> bytes:
        return (_HDR.pack(len(self.key)) + self.key +
                _PAYLOAD.pack(self.value_len, self.tick, self.score,
                              self.counter, self.flags, self.epoch))


def decode_tracker_block(buf: bytes) -> list[TrackerRecord]:
    out = []
    pos, n = 0, len(buf)
    while pos < n:
        (klen,) = _HDR.unpack_from(buf, pos)
        pos += _HDR.size
        key = buf[pos:pos + klen]
        pos += klen
        value_len, tick, score, counter, flags, epoch = _PAYLOAD.unpack_from(buf, pos)
        pos += _PAYLOAD.size
        out.append(TrackerRecord(key, value_len, tick, score, counter, flags, epoch))
    return out


def fresh_record(key: bytes, value_len: int, tick: int, method: ScoringMethod,
                 delta_c: int = 1, epoch: int = 0) -> TrackerRecord:
    """Record for a single access in the current slice (counter=delta_c, tag=0)."""
    if method is ScoringMethod.LRU:
        score = float(tick)
    else:
        score = 1.0  # one access in this slice; clock counters also start at 1
    return TrackerRecord(key, value_len, tick, score, counter=delta_c, epoch=epoch)


def effective_score(record: TrackerRecord, now_tick: int, method: ScoringMethod,
                    alpha: float) -> float:
    """Score of the record as seen at the current slice."""
    if method is ScoringMethod.EXP_SMOOTHING:
        return record.score * alpha ** (now_tick - record.tick)
    return record.score


def effective_counter(record: TrackerRecord, now_epoch: int) -> int:
    """Auto-tune counter after lazy decay (one decrement per elapsed epoch)."""
    return max(0, record.counter - (now_epoch - record.epoch))


def merge_records(a: TrackerRecord, b: TrackerRecord, method: ScoringMethod,
                  alpha: float, c_max: int = 10, now_epoch: int = 0) -> TrackerRecord:
    """Fold two records of the same key into one.

    The scoring payload merges per method. value_len comes from the record
    with the larger tick (latest known length of the tracked record). The
    auto-tune counters are normalized to the current epoch and added with
    saturation at c_max; a two-record merge means the key was re-accessed, so
    the merged record is tagged stable. The hidden flag survives only if both
    sides were hidden.
    """
    if a.key != b.key:
        raise ValueError("merge_records requires identical keys")
    if a.tick > b.tick:
        a, b = b, a
    if method is ScoringMethod.EXP_SMOOTHING:
        score = alpha ** (b.tick - a.tick) * a.score + b.score
    elif method is ScoringMethod.LRU:
        score = max(a.score, b.score)
    else:
        score = min(a.score + b.score, float(CLOCK_MAX))
    counter = min(effective_counter(a, now_epoch) + effective_counter(b, now_epoch), c_max)
    flags = FLAG_STABLE
    if a.hidden and b.hidden:
        flags |= FLAG_HIDDEN
    return TrackerRecord(b.key, b.value_len, b.tick, score, counter, flags, now_epoch)
