"""RALT: the on-disk hotness tracker, a miniature leveled LSM on fast disk.

Tracks one record per accessed key: (key, value_len, tick, score) plus
auto-tuning state. Supports five operations: log an access, check hotness,
sum hot sizes over a key range, scan hot keys in order, and evict when the
tracked hot size or the on-disk footprint exceeds its limit.

Structure: an in-memory buffer (a dict, merged on insert, invisible to
queries) plus runs of tracker SSTables on the fast tier. Runs are grouped
into three levels: level 0 holds one run per buffer flush, levels 1 and 2
hold one run each. Hotness checks use only the per-SSTable in-memory bloom
filters, which are built at write time from records whose decayed score
clears the current hot threshold; range sums use only the in-memory index
prefix sums. Evictions sample a score threshold (weighted by record size),
then merge every run into a single sorted run, dropping records below the
physical threshold and hiding records between the two thresholds.
"""

from __future__ import annotations

import heapq
import math
import random
import threading
from bisect import bisect_right
from dataclasses import dataclass, field

from .autotune import Autotuner
from .bloom import key_hashes
from .scoring import (
    ScoringMethod,
    TrackerRecord,
    decode_tracker_block,
    effective_score,
    fresh_record,
    merge_records,
)
from .sstable import KIND_RALT, BlockCache, SSTableReader, SSTableWriter
from .tiers import TierHandle


def _tracker_key(rec: TrackerRecord) -> bytes:
    return rec.key


@dataclass
class RaltConfig:
    hot_set_size_limit: int
    physical_size_limit: int
    tick_advance_bytes: int
    alpha: float = 0.9
    evict_fraction: float = 0.10
    unsorted_buffer_capacity: int = 1 * 1024 * 1024
    scoring_method: ScoringMethod = ScoringMethod.EXP_SMOOTHING
    size_ratio: int = 10
    l0_run_trigger: int = 4
    sstable_target_bytes: int = 1 * 1024 * 1024
    bloom_bits_per_key: int = 16
    block_size: int = 8 * 1024
    merge_fan_in: int = 10
    threshold_samples: int = 10_000

    def __post_init__(self):
        if not (0 < self.evict_fraction < 1):
            raise ValueError("evict_fraction must be in (0, 1)")
        if self.hot_set_size_limit <= 0 or self.physical_size_limit <= 0:
            raise ValueError("size limits must be positive")
        if not (0 < self.alpha < 1):
            raise ValueError("alpha must be in (0, 1)")
        if self.tick_advance_bytes <= 0:
            raise ValueError("tick_advance_bytes must be positive")


@dataclass
class RaltIoCounters:
    bytes_read: int = 0
    bytes_written: int = 0

    @property
    def total(self) -> int:
        return self.bytes_read + self.bytes_written


class _CountingTier:
    """Tier proxy that mirrors tracker I/O into the tracker's own counters."""

    def __init__(self, tier: TierHandle, counters: RaltIoCounters):
        self._tier = tier
        self._counters = counters

    def __getattr__(self, name):
        return getattr(self._tier, name)

    def write_file(self, name, payload):
        self._counters.bytes_written += len(payload)
        return self._tier.write_file(name, payload)

    def read(self, name, offset, length):
        data = self._tier.read(name, offset, length)
        self._counters.bytes_read += len(data)
        return data


@dataclass
class TrackerSst:
    file_id: int
    reader: SSTableReader
    smallest: bytes
    largest: bytes
    file_size: int
    record_count: int
    hot_total: int      # hot sizes of filter-visible records only
    phys_total: int     # accounted physical size of every record
    refs: int = 0


@dataclass
class TrackerRun:
    """One sorted run: SSTables with disjoint, increasing key ranges."""

    ssts: list[TrackerSst]
    level: int
    prefix: list[int] = field(default_factory=list, repr=False)
    hot_total: int = 0
    phys_total: int = 0

    def __post_init__(self):
        acc = 0
        self.prefix = []
        for s in self.ssts:
            self.prefix.append(acc)
            acc += s.hot_total
        self.hot_total = acc
        self.phys_total = sum(s.phys_total for s in self.ssts)


@dataclass
class RaltVersion:
    runs: list[TrackerRun]
    refcount: int = 1

    def all_ssts(self) -> list[TrackerSst]:
        return [s for run in self.runs for s in run.ssts]


def estimate_score_threshold(records, total_size: float, target_size: float,
                             n_samples: int, rng: random.Random) -> float | None:
    """Weighted-sample a score threshold so records scoring >= it sum to ~target.

    ``records`` yields (score, size) pairs in any fixed order; each record is
    sampled with probability proportional to its size by drawing n uniform
    positions in [0, total_size] and mapping them through the running prefix
    sum. The returned threshold is the smallest sampled score whose
    retained-sample estimate does not exceed the target (conservative: the
    realized retained size stays at or under the target up to the gap between
    adjacent samples). Returns None when there is nothing to sample.
    """
    if total_size <= 0 or n_samples < 1:
        return None
    points = sorted(rng.uniform(0, total_size) for _ in range(n_samples))
    sampled: list[float] = []
    prefix = 0.0
    score = None
    i = 0
    for score, size in records:
        prefix += size
        while i < len(points) and points[i] <= prefix:
            sampled.append(score)
            i += 1
        if i >= len(points):
            break
    while i < len(points) and score is not None:  # fp drift near total_size
        sampled.append(score)
        i += 1
    if not sampled:
        return None
    k = math.ceil(n_samples * target_size / total_size)
    if k <= 0:
        return math.inf
    sampled.sort(reverse=True)
    if k >= len(sampled):
        return sampled[-1]
    # smallest sampled score whose >=-count is <= k; ties push the threshold up
    pos = k - 1
    value = sampled[pos]
    end = pos
    while end + 1 < len(sampled) and sampled[end + 1] == value:
        end += 1
    if end + 1 <= k:
        return value
    while pos >= 0 and sampled[pos] == value:
        pos -= 1
    if pos < 0:
        return sampled[0]
    return sampled[pos]


class Ralt:
    """Record-access tracker over the fast tier. See module docstring."""

    def __init__(self, tier: TierHandle, config: RaltConfig, alloc_file_id,
                 autotuner: Autotuner | None = None,
                 cache: BlockCache | None = None, seed: int = 0):
        self.config = config
        self.io = RaltIoCounters()
        self.tier = _CountingTier(tier, self.io)
        self.alloc_file_id = alloc_file_id
        self.autotuner = autotuner
        self.cache = cache if cache is not None else BlockCache(512)
        self.method = config.scoring_method
        self.alpha = config.alpha
        self.rng = random.Random(seed)

        self.tick = 0
        self._accessed_since_tick = 0
        self.hot_threshold = 0.0   # startup: everything tracked is hot
        self.hot_limit = config.hot_set_size_limit
        self.physical_limit = config.physical_size_limit

        self._buffer: dict[bytes, TrackerRecord] = {}
        self._buffer_hot = 0
        self._buffer_phys = 0
        self._version = RaltVersion(runs=[])
        self._persisted_hot = 0
        self._persisted_phys = 0
        self._filters: tuple = ()   # (smallest, largest, bloom) per live SST
        self._lock = threading.Lock()
        self._maintenance = threading.Lock()
        self.evictions = 0
        self.accesses = 0

    # ------------------------------------------------------------------ sizes

    @property
    def current_hot_size(self) -> int:
        return self._persisted_hot + self._buffer_hot

    @property
    def current_physical_size(self) -> int:
        return self._persisted_phys + self._buffer_phys

    def _epoch(self) -> int:
        return self.autotuner.epoch if self.autotuner else 0

    def _c_max(self) -> int:
        return self.autotuner.params.c_max if self.autotuner else 10

    def _effective(self, record: TrackerRecord) -> float:
        return effective_score(record, self.tick, self.method, self.alpha)

    # ---------------------------------------------------------------- logging

    def log_access(self, key: bytes, value_len: int) -> None:
        """Record one access of key in the current time slice."""
        hot = value_len + len(key)
        with self._lock:
            self.accesses += 1
            self._accessed_since_tick += hot
            while self._accessed_since_tick >= self.config.tick_advance_bytes:
                self._accessed_since_tick -= self.config.tick_advance_bytes
                self.tick += 1
            rec = fresh_record(key, value_len, self.tick, self.method,
                               delta_c=(self.autotuner.params.delta_c if self.autotuner else 1),
                               epoch=self._epoch())
            old = self._buffer.get(key)
            if old is None:
                self._buffer[key] = rec
                self._buffer_hot += rec.hot_size
                self._buffer_phys += rec.physical_size
            else:
                merged = merge_records(old, rec, self.method, self.alpha,
                                       c_max=self._c_max(), now_epoch=self._epoch())
                self._buffer[key] = merged
                self._buffer_hot += merged.hot_size - old.hot_size
            flush_needed = self._buffer_phys >= self.config.unsorted_buffer_capacity
        if self.autotuner:
            self.autotuner.on_access(hot)
        if flush_needed:
            self.flush_buffer()
        self._maybe_maintain()

    # ----------------------------------------------------------------- writes

    def _run_from_records(self, records, level: int) -> TrackerRun:
        """Write merged records (key order) into a run of target-size SSTs.

        Visibility (bloom membership, hot-size accounting, the hidden flag)
        is recomputed against the current hot threshold at every rewrite.
        """
        ssts: list[TrackerSst] = []
        writer = None
        phys = 0
        for rec in records:
            if writer is None:
                writer = SSTableWriter(self.tier, self.alloc_file_id(), KIND_RALT,
                                       block_size=self.config.block_size,
                                       bloom_bits_per_key=self.config.bloom_bits_per_key)
                phys = 0
            visible = self._effective(rec) >= self.hot_threshold
            rec.flags = (rec.flags & ~2) if visible else (rec.flags | 2)
            writer.add(rec.key, rec.encode(),
                       hot_size=rec.hot_size if visible else 0,
                       in_filter=visible)
            phys += rec.physical_size
            if writer.approx_bytes >= self.config.sstable_target_bytes:
                ssts.append(self._finish_sst(writer, phys))
                writer = None
        if writer is not None and not writer.empty:
            ssts.append(self._finish_sst(writer, phys))
        return TrackerRun(ssts=ssts, level=level)

    def _finish_sst(self, writer: SSTableWriter, phys_total: int) -> TrackerSst:
        info = writer.finish()
        reader = SSTableReader(self.tier, info["file_id"], KIND_RALT,
                               cache=self.cache, decode=decode_tracker_block,
                               record_key=_tracker_key, preloaded=info)
        return TrackerSst(
            file_id=info["file_id"], reader=reader,
            smallest=info["smallest"], largest=info["largest"],
            file_size=info["file_size"], record_count=info["record_count"],
            hot_total=info["hot_total"], phys_total=phys_total,
        )

    def flush_buffer(self) -> None:
        with self._maintenance:
            self._flush_buffer_locked()
        self._maybe_compact_levels()

    def _flush_buffer_locked(self) -> None:
        """Flush the buffer into a level-0 run. Caller holds _maintenance."""
        with self._lock:
            if not self._buffer:
                return
            buf = self._buffer
            self._buffer = {}
            self._buffer_hot = 0
            self._buffer_phys = 0
        records = [buf[k] for k in sorted(buf)]
        run = self._run_from_records(records, level=0)
        with self._lock:
            self._install(self._version.runs + [run])

    # ------------------------------------------------------------ maintenance

    def _install(self, runs: list[TrackerRun]) -> None:
        """Swap in a new version (caller holds self._lock)."""
        old = self._version
        new = RaltVersion(runs=[r for r in runs if r.ssts])
        for s in new.all_ssts():
            s.refs += 1
        self._version = new
        self._persisted_hot = sum(r.hot_total for r in new.runs)
        self._persisted_phys = sum(r.phys_total for r in new.runs)
        self._filters = tuple((s.smallest, s.largest, s.reader.bloom)
                              for s in new.all_ssts())
        self._release(old)

    def _release(self, version: RaltVersion) -> None:
        version.refcount -= 1
        if version.refcount == 0:
            for s in version.all_ssts():
                s.refs -= 1
                if s.refs == 0:
                    self.cache.drop_file(s.file_id)
                    self.tier.delete_file(s.reader.name)

    def pin(self) -> RaltVersion:
        with self._lock:
            v = self._version
            v.refcount += 1
            return v

    def unpin(self, version: RaltVersion) -> None:
        with self._lock:
            self._release(version)

    def _maybe_maintain(self) -> None:
        if (self.current_hot_size > self.hot_limit
                or self.current_physical_size > self.physical_limit):
            self.evict()
        else:
            self._maybe_compact_levels()

    def _maybe_compact_levels(self) -> None:
        """Leveling: merge level-0 runs into level 1, level 1 into level 2."""
        if not self._maintenance.acquire(blocking=False):
            return
        try:
            while True:
                with self._lock:
                    runs = list(self._version.runs)
                l0 = [r for r in runs if r.level == 0]
                l1 = [r for r in runs if r.level == 1]
                l2 = [r for r in runs if r.level == 2]
                l1_target = max(2 * self.config.sstable_target_bytes,
                                self.physical_limit // self.config.size_ratio)
                if len(l0) >= self.config.l0_run_trigger:
                    inputs = l0 + l1
                    merged = self._merge_runs(inputs, level=1)
                elif l1 and sum(r.phys_total for r in l1) > l1_target:
                    inputs = l1 + l2
                    merged = self._merge_runs(inputs, level=2)
                else:
                    return
                with self._lock:
                    keep = [r for r in self._version.runs if r not in inputs]
                    self._install(keep + [merged])
        finally:
            self._maintenance.release()

    def _merged_scan(self, runs: list[TrackerRun], lo: bytes | None = None,
                     hi: bytes | None = None):
        """Yield one merged TrackerRecord per key across runs, in key order.

        The merge is commutative, so run recency does not matter; each step
        holds one open SSTable per run, bounding the touched tables by the
        number of runs.
        """
        streams = []
        for idx, run in enumerate(runs):
            def gen(r=run, tag=idx):
                for sst in r.ssts:
                    if hi is not None and sst.smallest > hi:
                        return
                    if lo is not None and sst.largest < lo:
                        continue
                    for rec in sst.reader.iterate(lo, hi):
                        yield (rec.key, tag, rec)
            streams.append(gen())
        pending: TrackerRecord | None = None
        c_max = self._c_max()
        for key, _, rec in heapq.merge(*streams):
            if pending is not None and pending.key == key:
                pending = merge_records(pending, rec, self.method, self.alpha,
                                        c_max=c_max, now_epoch=self._epoch())
            else:
                if pending is not None:
                    yield pending
                pending = rec
        if pending is not None:
            yield pending

    def _merge_runs(self, runs: list[TrackerRun], level: int) -> TrackerRun:
        return self._run_from_records(self._merged_scan(runs), level=level)

    # ------------------------------------------------------------------ reads

    def is_hot(self, key: bytes) -> bool:
        """Filter-only hotness check; no disk reads, low false-positive rate."""
        h = key_hashes(key)
        for smallest, largest, bloom in self._filters:
            if smallest <= key <= largest and bloom.may_contain_hashed(*h):
                return True
        return False

    def range_hot_size(self, lo: bytes, hi: bytes) -> int:
        """Approximate hot bytes in [lo, hi]: per run, two index lookups.

        Sums per-run prefix differences; duplicates across runs overestimate
        the true deduplicated size (by ~1/size_ratio when levels are shaped).
        """
        if lo > hi:
            raise ValueError("lo must be <= hi")
        version = self.pin()
        try:
            return sum(self._run_range_hot(run, lo, hi) for run in version.runs)
        finally:
            self.unpin(version)

    @staticmethod
    def _run_position(run: TrackerRun, key: bytes, include_block: bool) -> int:
        """Hot bytes in the run before key's block (or through it)."""
        smallests = [s.smallest for s in run.ssts]
        i = bisect_right(smallests, key) - 1
        if i < 0:
            return 0
        sst = run.ssts[i]
        if key > sst.largest:
            return run.prefix[i] + sst.hot_total
        reader = sst.reader
        b = reader.block_for_key(key)
        if b < 0:
            return run.prefix[i]
        if include_block:
            nxt = (reader.index[b + 1].hot_prefix if b + 1 < len(reader.index)
                   else sst.hot_total)
            return run.prefix[i] + nxt
        return run.prefix[i] + reader.index[b].hot_prefix

    def _run_range_hot(self, run: TrackerRun, lo: bytes, hi: bytes) -> int:
        if not run.ssts:
            return 0
        upper = self._run_position(run, hi, include_block=True)
        lower = self._run_position(run, lo, include_block=False)
        return max(0, upper - lower)

    def iter_hot(self, lo: bytes, hi: bytes):
        """Yield (key, hot_size) of hot keys in [lo, hi], ascending, merged.

        A key is yielded when its cross-run merged score clears the hot
        threshold at the current tick.
        """
        if lo > hi:
            raise ValueError("lo must be <= hi")
        version = self.pin()
        try:
            for rec in self._merged_scan(version.runs, lo, hi):
                if self._effective(rec) >= self.hot_threshold:
                    yield rec.key, rec.hot_size
        finally:
            self.unpin(version)

    # --------------------------------------------------------------- eviction

    def evict(self) -> bool:
        """Merge everything into one run, dropping low-score records.

        Hot and physical thresholds are estimated by weighted sampling so the
        retained sizes land at (1 - evict_fraction) of the current ones and
        never above the configured limits. Records below the physical
        threshold are dropped; records between the thresholds stay on disk
        but leave the filters. Returns False if an eviction was already
        running (the second trigger is a no-op).
        """
        if not self._maintenance.acquire(blocking=False):
            return False
        try:
            self._flush_buffer_locked()
            version = self.pin()
            try:
                merged = list(self._merged_scan(version.runs))
            finally:
                self.unpin(version)
            if not merged:
                return True

            scored = []
            hot_total = 0
            phys_total = 0
            stable_hot = 0
            stable_phys = 0
            unstable_phys = 0
            unstable_ticks: list[tuple[int, int]] = []
            for rec in merged:
                eff = self._effective(rec)
                visible = eff >= self.hot_threshold
                if visible:
                    hot_total += rec.hot_size
                phys_total += rec.physical_size
                scored.append((eff, rec.hot_size if visible else 0, rec.physical_size))
                if self.autotuner:
                    if self.autotuner.is_stable(rec):
                        stable_hot += rec.hot_size
                        stable_phys += rec.physical_size
                    else:
                        unstable_phys += rec.physical_size
                        unstable_ticks.append((rec.tick, rec.physical_size))

            # Tighten a threshold only for the dimension whose limit is
            # exceeded; the extra evict_fraction of headroom keeps evictions
            # from retriggering immediately.
            keep = 1.0 - self.config.evict_fraction
            n = self.config.threshold_samples
            if hot_total > self.hot_limit:
                hot_target = min(keep * hot_total, float(self.hot_limit))
                hot_thr = estimate_score_threshold(
                    ((s, h) for s, h, _ in scored if h > 0),
                    hot_total, hot_target, n, self.rng)
                if hot_thr is None:
                    hot_thr = self.hot_threshold
            else:
                hot_thr = self.hot_threshold
            if phys_total > self.physical_limit:
                phys_target = min(keep * phys_total, float(self.physical_limit))
                phys_thr = estimate_score_threshold(
                    ((s, p) for s, _, p in scored),
                    phys_total, phys_target, n, self.rng)
                if phys_thr is None:
                    phys_thr = 0.0
            else:
                phys_thr = 0.0
            phys_thr = min(phys_thr, hot_thr)

            unstable_cutoff = None
            if self.autotuner:
                cap = self.autotuner.params.unstable_cap
                if unstable_phys > cap:
                    unstable_ticks.sort()
                    excess = unstable_phys - cap
                    dropped = 0
                    for t, p in unstable_ticks:
                        if dropped >= excess:
                            break
                        unstable_cutoff = t
                        dropped += p

            self.hot_threshold = hot_thr

            def survivors():
                for rec in merged:
                    eff = self._effective(rec)
                    if eff < phys_thr:
                        continue
                    if (unstable_cutoff is not None
                            and eff < hot_thr
                            and rec.tick <= unstable_cutoff
                            and not self.autotuner.is_stable(rec)):
                        continue
                    yield rec

            new_run = self._run_from_records(survivors(), level=2)
            with self._lock:
                self._install([new_run])
            self.evictions += 1

            if self.autotuner:
                new_hot, new_phys = self.autotuner.recompute_limits(
                    stable_hot, stable_phys, unstable_phys)
                self.hot_limit = new_hot
                if new_phys is not None:
                    self.physical_limit = new_phys
            return True
        finally:
            self._maintenance.release()

    # ------------------------------------------------------------------- misc

    def drain(self) -> None:
        """Flush the buffer and settle internal compactions (tests, close)."""
        self.flush_buffer()

    def live_ssts(self) -> list[TrackerSst]:
        with self._lock:
            return self._version.all_ssts()
