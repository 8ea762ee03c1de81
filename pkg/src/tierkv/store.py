"""Two-tier leveled LSM store with record-level hot data retention/promotion.

Levels 0..fd_levels-1 live on the fast tier, the rest on the slow tier.
Reads search memtables, fast-tier levels, the promotion cache, then
slow-tier levels; the newest version wins. Slow-tier hits stage the record
in the promotion cache; fast-tier hits log the access to the hotness
tracker. Hot records reach the fast tier by three pathways: retention
during tier-crossing compactions, promotion folded into compactions, and
promotion by flushing checked cache entries to level 0.

Threading: puts serialize on a writer lock; gets pin a superversion and run
lock-free against it. Background mode runs a flush worker, one compaction
worker, and the Checker; synchronous mode drains all pending work inline
after each operation, which keeps single-threaded runs deterministic.
The global mutex (the "DB mutex") serializes memtable seals, promotion
cache seals, and superversion installs. Lock order: DB mutex, then the
promotion cache lock, never the reverse.
"""

from __future__ import annotations

import heapq
import json
import os
import queue
import threading
import time
from time import perf_counter

from .bloom import key_hashes
from .compaction import CompactionCandidate, pick
from .config import StoreConfig
from .metrics import AccessOrigin, MetricsRegistry
from .promotion import ImmutablePromotionCache, PromotionCache
from .ralt import Ralt, RaltConfig, TrackerRun, TrackerSst
from .scoring import decode_tracker_block
from .sstable import (
    KIND_DATA,
    KIND_RALT,
    PUT,
    TOMBSTONE,
    BlockCache,
    SSTableReader,
    SSTableWriter,
    encode_data_record,
)
from .tiers import TierId, TierProfile, open_tier
from .version import ImmutableMemTable, MemTable, SSTableMeta, Superversion, TableRegistry

MANIFEST = "MANIFEST.json"
MAX_IMM_MEMTABLES = 4
L0_STALL_TABLES = 16


class StoreClosedError(Exception):
    pass


class TieredStore:
    def __init__(self, config: StoreConfig, metrics: MetricsRegistry | None = None,
                 hotness_fn=None):
        self.config = config
        self.metrics = metrics if metrics is not None else MetricsRegistry()
        self._hotness_fn = hotness_fn

        os.makedirs(config.fd_root, exist_ok=True)
        os.makedirs(config.sd_root, exist_ok=True)
        self.fd = open_tier(config.fd_root, TierProfile(
            "fd", config.fd_read_latency, config.fd_write_latency), TierId.FD)
        self.sd = open_tier(config.sd_root, TierProfile(
            "sd", config.sd_read_latency, config.sd_write_latency), TierId.SD)
        self._tier_of = {TierId.FD: self.fd, TierId.SD: self.sd}

        self.cache = BlockCache(config.block_cache_blocks)
        self.registry = TableRegistry()
        self.registry.attach(TierId.FD, self.fd)
        self.registry.attach(TierId.SD, self.sd)
        self.registry.set_on_delete(lambda meta: self.cache.drop_file(meta.id))

        self._mutex = threading.Lock()        # the DB mutex
        self._sv_lock = threading.Lock()
        self._write_lock = threading.Lock()
        self._id_lock = threading.Lock()
        self._compaction_job_lock = threading.Lock()

        self._seqno = 0
        self._next_file_id = 1
        self._creation_counter = 0
        self._seal_counter = 0
        self._closed = False

        self._memtable = MemTable()
        self._imms: list[ImmutableMemTable] = []
        self._levels: list[list[SSTableMeta]] = [[] for _ in range(config.num_levels)]
        self.level_targets = config.level_targets()

        autotuner = None
        if config.autotune_enabled:
            from .autotune import Autotuner
            autotuner = Autotuner(config.autotune_params())
        self.autotuner = autotuner
        hot_limit = config.resolved_hot_set_limit()
        if autotuner is not None:
            hot_limit = autotuner.params.l_hs  # starts at the floor, no stable records yet
        self.ralt = Ralt(
            self.fd,
            RaltConfig(
                hot_set_size_limit=hot_limit,
                physical_size_limit=config.resolved_physical_limit(),
                tick_advance_bytes=config.resolved_tick_advance(),
                alpha=config.ralt_alpha,
                evict_fraction=config.ralt_evict_fraction,
                unsorted_buffer_capacity=config.ralt_buffer_bytes,
                scoring_method=config.scoring_method,
                sstable_target_bytes=config.ralt_sstable_target_bytes,
                bloom_bits_per_key=config.ralt_bloom_bits_per_key,
                threshold_samples=config.ralt_threshold_samples,
            ),
            alloc_file_id=self._alloc_file_id,
            autotuner=autotuner,
            seed=config.seed,
        )
        self.metrics.set_hot_limit_probe(lambda: self.ralt.hot_limit)

        self.promotion = PromotionCache(config.promotion_seal_bytes, self.metrics)

        self._current = Superversion(self._memtable, (), tuple(
            tuple(l) for l in self._levels))

        self._stop = threading.Event()
        self._flush_wanted = threading.Event()
        self._compact_wanted = threading.Event()
        self._checker_queue: queue.Queue = queue.Queue()
        self._workers: list[threading.Thread] = []
        if os.path.exists(os.path.join(config.fd_root, MANIFEST)):
            self._load_manifest()
        if config.background:
            self._start_workers()

    # ------------------------------------------------------------ id helpers

    def _alloc_file_id(self) -> int:
        with self._id_lock:
            fid = self._next_file_id
            self._next_file_id += 1
            return fid

    def _alloc_creation_order(self) -> int:
        self._creation_counter += 1
        return self._creation_counter

    # -------------------------------------------------------- superversions

    def _pin_current(self) -> Superversion:
        with self._sv_lock:
            sv = self._current
            sv.refcount += 1
            return sv

    def _unpin(self, sv: Superversion) -> None:
        with self._sv_lock:
            sv.refcount -= 1
            dead = sv if sv.refcount == 0 else None
        if dead is not None:
            for t in dead.tables():
                self.registry.unref(t)

    def _install_superversion(self) -> None:
        """Snapshot current state into a new superversion. Mutex held."""
        new = Superversion(self._memtable, tuple(self._imms),
                           tuple(tuple(l) for l in self._levels))
        for t in new.tables():
            self.registry.ref(t)
        with self._sv_lock:
            old = self._current
            self._current = new
        self._unpin(old)
        self._write_manifest()

    # -------------------------------------------------------------- puts

    def put(self, key: bytes, value: bytes) -> None:
        self._write(key, value, PUT)

    def delete(self, key: bytes) -> None:
        self._write(key, b"", TOMBSTONE)

    def _write(self, key: bytes, value: bytes, kind: int) -> None:
        if self._closed:
            raise StoreClosedError
        self._stall_if_needed()
        sealed = False
        with self._write_lock:
            with self._mutex:
                self._seqno += 1
                self._memtable.put(key, value, self._seqno, kind)
                if self._memtable.bytes >= self.config.memtable_bytes:
                    self._seal_memtable_locked()
                    sealed = True
        self.metrics.note_write_op(len(key) + len(value))
        if sealed:
            if self.config.background:
                self._flush_wanted.set()
            else:
                self.drain()

    def _stall_if_needed(self) -> None:
        if not self.config.background:
            return
        while (len(self._imms) > MAX_IMM_MEMTABLES
               or len(self._levels[0]) > L0_STALL_TABLES):
            self._flush_wanted.set()
            self._compact_wanted.set()
            time.sleep(0.001)
            if self._closed:
                return

    def _seal_memtable_locked(self) -> None:
        """Mutable -> immutable memtable. Caller holds the DB mutex."""
        if not len(self._memtable):
            return
        imm = ImmutableMemTable(self._memtable, self._seal_counter)
        self._seal_counter += 1
        # keys sealed here supersede any promotion-cache entry for them
        self.promotion.record_updated_keys(imm.data.keys())
        self._memtable = MemTable()
        self._imms.append(imm)
        self._install_superversion()

    # --------------------------------------------------------------- gets

    def get(self, key: bytes):
        value, _, _ = self.get_with_origin(key)
        return value

    def get_with_origin(self, key: bytes):
        """Returns (value | None, AccessOrigin, level | None)."""
        if self._closed:
            raise StoreClosedError
        t0 = perf_counter()
        sv = self._pin_current()
        try:
            result = self._search(sv, key)
        finally:
            self._unpin(sv)
        value, origin, level, promo = result
        self.metrics.note_get(origin, level, perf_counter() - t0)
        if promo is not None:
            self._after_sd_hit(key, *promo)
        elif origin is AccessOrigin.FD and value is not None:
            self.ralt.log_access(key, len(value))
        if not self.config.background:
            self._drain_checker()
        return value, origin, level

    def _search(self, sv: Superversion, key: bytes):
        """Search order: memtables, FD levels, promotion cache, SD levels."""
        e = sv.memtable.get(key)
        if e is not None:
            return self._resolve(e, AccessOrigin.MEMTABLE, None)
        for imm in reversed(sv.imm_memtables):
            e = imm.get(key)
            if e is not None:
                return self._resolve(e, AccessOrigin.MEMTABLE, None)

        hashes = key_hashes(key)
        fdl = self.config.fd_levels
        for level in range(fdl):
            e = self._search_level(sv.levels[level], level, key, hashes)
            if e is not None:
                return self._resolve(e, AccessOrigin.FD, level)

        entry = self.promotion.lookup(key) if self.config.promotion_enabled else None
        if entry is not None:
            return entry.value, AccessOrigin.PROMO_CACHE, None, None

        source_tables = []
        for level in range(fdl, self.config.num_levels):
            tables = sv.levels[level]
            meta = self._table_for_key(tables, level, key)
            if meta is None:
                continue
            source_tables.append(meta)
            rec = meta.reader.get(key, hashes)
            if rec is not None:
                _, seqno, kind, value = rec
                if kind == TOMBSTONE:
                    return None, AccessOrigin.NOT_FOUND, None, None
                promo = (value, seqno, tuple(source_tables))
                return value, AccessOrigin.SD, level, promo
        return None, AccessOrigin.NOT_FOUND, None, None

    def _resolve(self, entry, origin, level):
        seqno, kind, value = entry
        if kind == TOMBSTONE:
            return None, AccessOrigin.NOT_FOUND, None, None
        return value, origin, level, None

    def _search_level(self, tables, level: int, key: bytes, hashes):
        if level == 0:
            best = None
            for meta in tables:
                if not meta.contains(key):
                    continue
                rec = meta.reader.get(key, hashes)
                if rec is not None and (best is None or rec[1] > best[1]):
                    best = rec
            if best is None:
                return None
            return (best[1], best[2], best[3])
        meta = self._table_for_key(tables, level, key)
        if meta is None:
            return None
        rec = meta.reader.get(key, hashes)
        if rec is None:
            return None
        return (rec[1], rec[2], rec[3])

    @staticmethod
    def _table_for_key(tables, level: int, key: bytes) -> SSTableMeta | None:
        lo, hi = 0, len(tables)
        while lo < hi:
            mid = (lo + hi) // 2
            if tables[mid].smallest <= key:
                lo = mid + 1
            else:
                hi = mid
        idx = lo - 1
        if idx >= 0 and tables[idx].contains(key):
            return tables[idx]
        return None

    def _after_sd_hit(self, key: bytes, value: bytes, seqno: int, source_tables):
        if not self.config.promotion_enabled:
            return
        inserted = self.promotion.try_insert(key, value, seqno, source_tables)
        if not inserted:
            # still record the access so the tracker does not miss it
            self.ralt.log_access(key, len(value))
            return
        if self.promotion.needs_seal():
            self.seal_promotion_cache()

    # --------------------------------------------------- promotion by flush

    def seal_promotion_cache(self) -> ImmutablePromotionCache | None:
        """Seal the mutable cache and hand it to the Checker (DB mutex held
        for the seal, snapshot pinned right after, per the flush protocol)."""
        with self._mutex:
            if not self.promotion.needs_seal():
                return None
            ipc = self.promotion.seal_mutable(snapshot=None)
            if ipc is None:
                return None
            ipc.snapshot = self._pin_current()
        if self.config.background:
            self._checker_queue.put(ipc)
        else:
            self._checker_run(ipc)
        return ipc

    def _checker_run(self, ipc: ImmutablePromotionCache) -> int:
        """Validate a sealed cache and flush the surviving hot records to L0."""
        survivors = []
        snapshot = ipc.snapshot
        for entry in ipc.entries:
            hot = True if self.config.promote_without_check \
                else self._is_hot(entry.key)
            self.ralt.log_access(entry.key, len(entry.value))
            if not hot:
                self.metrics.add("promo_drops_cold", 1)
                continue
            if entry.key in ipc.updated:
                self.metrics.add("promo_drops_updated", 1)
                continue
            if self._snapshot_has_newer(snapshot, entry.key):
                self.metrics.add("promo_drops_newer", 1)
                continue
            survivors.append(entry)
        packed_bytes = 0
        if survivors:
            writer = SSTableWriter(self.fd, self._alloc_file_id(), KIND_DATA,
                                   block_size=self.config.block_size,
                                   bloom_bits_per_key=self.config.bloom_bits_per_key)
            for e in survivors:
                writer.add(e.key, encode_data_record(e.key, e.value, e.seqno, PUT))
                packed_bytes += e.bytes
            meta = self._finish_table(writer, TierId.FD, level=0)
            with self._mutex:
                self._levels[0].append(meta)
                self.promotion.drop_immutable(ipc)
                self._install_superversion()
            self.metrics.add("promoted_bytes_flush", packed_bytes)
        else:
            with self._mutex:
                self.promotion.drop_immutable(ipc)
        self._unpin(snapshot)
        ipc.snapshot = None
        self._request_compaction_check()
        return len(survivors)

    def _is_hot(self, key: bytes) -> bool:
        if self._hotness_fn is not None:
            return self._hotness_fn(key)
        return self.ralt.is_hot(key)

    def _snapshot_has_newer(self, sv: Superversion, key: bytes) -> bool:
        """True if any version exists in the snapshot's immutable memtables
        or FD levels (promotion-cache entries are older than all of FD)."""
        for imm in sv.imm_memtables:
            if imm.get(key) is not None:
                return True
        hashes = key_hashes(key)
        for level in range(self.config.fd_levels):
            if self._search_level(sv.levels[level], level, key, hashes) is not None:
                return True
        return False

    # -------------------------------------------------------------- flushes

    def _flush_one(self) -> bool:
        with self._mutex:
            if not self._imms:
                return False
            imm = self._imms[0]
        items = imm.sorted_items()
        meta = None
        if items:
            writer = SSTableWriter(self.fd, self._alloc_file_id(), KIND_DATA,
                                   block_size=self.config.block_size,
                                   bloom_bits_per_key=self.config.bloom_bits_per_key)
            for key, (seqno, kind, value) in items:
                writer.add(key, encode_data_record(key, value, seqno, kind))
            meta = self._finish_table(writer, TierId.FD, level=0)
        with self._mutex:
            self._imms.remove(imm)
            if meta is not None:
                self._levels[0].append(meta)
            self._install_superversion()
        self.metrics.add("flush_count", 1)
        self._request_compaction_check()
        return True

    def _finish_table(self, writer: SSTableWriter, tier_id: TierId,
                      level: int) -> SSTableMeta:
        info = writer.finish()
        reader = SSTableReader(self._tier_of[tier_id], info["file_id"], KIND_DATA,
                               cache=self.cache, preloaded=info)
        meta = SSTableMeta(
            id=info["file_id"], tier=tier_id, level=level,
            smallest=info["smallest"], largest=info["largest"],
            file_size=info["file_size"],
            creation_order=self._alloc_creation_order(),
            record_count=info["record_count"], reader=reader,
        )
        self.registry.register(meta)
        return meta

    # ----------------------------------------------------------- compaction

    def _request_compaction_check(self) -> None:
        if self.config.background:
            self._compact_wanted.set()
        else:
            self._compaction_pass()

    def _over_capacity_level(self) -> int | None:
        """Most pressured level, or None. Bottom level is unbounded."""
        worst, worst_pressure = None, 1.0
        for level in range(self.config.num_levels - 1):
            if level == 0:
                pressure = len(self._levels[0]) / self.config.l0_compaction_trigger
            else:
                target = self.level_targets[level]
                pressure = (sum(t.file_size for t in self._levels[level]) / target
                            if target else 0.0)
            if pressure >= worst_pressure and pressure > 1.0:
                worst, worst_pressure = level, pressure
        return worst

    def _compaction_pass(self) -> int:
        """Compact the most pressured level until everything fits."""
        done = 0
        with self._compaction_job_lock:
            while not self._closed:
                with self._mutex:
                    level = self._over_capacity_level()
                if level is None:
                    break
                if not self._compact_level(level):
                    break
                done += 1
        return done

    def compact_once(self, level: int) -> bool:
        """Run one compaction of ``level`` into ``level + 1`` (tests, tools)."""
        with self._compaction_job_lock:
            return self._compact_level(level)

    def _pick_source(self, level: int) -> SSTableMeta | None:
        """Benefit-cost pick among the level's tables. Mutex held."""
        tables = self._levels[level]
        if not tables:
            return None
        inter_tier = (level + 1 == self.config.sd_first_level)
        candidates = []
        for t in tables:
            overlap = sum(o.file_size for o in self._levels[level + 1]
                          if o.overlaps(t.smallest, t.largest))
            hot = 0
            if inter_tier:
                if self._hotness_fn is None:
                    hot = self.ralt.range_hot_size(t.smallest, t.largest)
                # forced-hotness runs leave hot=0: picking stays size-driven
            candidates.append(CompactionCandidate(
                table=t, file_size=t.file_size, overlapping_bytes=overlap,
                hot_size=hot, creation_order=t.creation_order,
                inter_tier=inter_tier))
        chosen = pick(candidates)
        return chosen.table if chosen else None

    def _compact_level(self, level: int) -> bool:
        config = self.config
        target_level = level + 1
        inter_tier = (target_level == config.sd_first_level)
        to_fd_last = (target_level == config.fd_last_level)
        bottommost = (target_level == config.num_levels - 1)

        with self._mutex:
            if level == 0:
                sources = list(self._levels[0])
            else:
                src = self._pick_source(level)
                sources = [src] if src else []
            if not sources:
                return False
            lo = min(t.smallest for t in sources)
            hi = max(t.largest for t in sources)
            targets = [t for t in self._levels[target_level] if t.overlaps(lo, hi)]
            full_lo = min([lo] + [t.smallest for t in targets])
            full_hi = max([hi] + [t.largest for t in targets])

            hooks = config.promotion_enabled and (inter_tier or to_fd_last)
            trivial = (not targets
                       and self._disjoint(sources)
                       and not self._compaction_work_in_range(sources, hooks, inter_tier))
            if trivial:
                for t in sources:
                    self._levels[level].remove(t)
                    t.level = target_level
                    self._insert_sorted(target_level, t)
                self._install_superversion()
                self.metrics.add("trivial_moves", len(sources))
                return True
            self.promotion.mark_tables(sources + targets)
            sv = self._pin_current()

        try:
            self._merge_compaction(sources, targets, level, target_level,
                                   inter_tier, to_fd_last, bottommost,
                                   lo, hi, full_lo, full_hi)
        finally:
            self._unpin(sv)
        return True

    @staticmethod
    def _disjoint(tables) -> bool:
        ordered = sorted(tables, key=lambda t: t.smallest)
        return all(ordered[i].largest < ordered[i + 1].smallest
                   for i in range(len(ordered) - 1))

    def _compaction_work_in_range(self, sources, hooks: bool, inter_tier: bool) -> bool:
        """True when moving files is not enough: promotion-cache entries in
        range must be extracted, or retained hot records must be rewritten."""
        if not hooks:
            return False
        lo = min(t.smallest for t in sources)
        hi = max(t.largest for t in sources)
        if self.promotion.has_entries_in_range(lo, hi):
            return True
        if inter_tier and self.config.retention_enabled:
            if self._hotness_fn is not None:
                return True
            if self.ralt.range_hot_size(lo, hi) > 0:
                return True
        return False

    def _merge_compaction(self, sources, targets, level, target_level,
                          inter_tier, to_fd_last, bottommost,
                          src_lo, src_hi, full_lo, full_hi):
        config = self.config

        # promotion by compaction: pull cache entries out of the range first
        extracted = []
        if config.promotion_enabled and (inter_tier or to_fd_last):
            ext_lo, ext_hi = (src_lo, src_hi) if inter_tier else (full_lo, full_hi)
            extracted = self.promotion.extract_range(ext_lo, ext_hi)

        injected = []
        for e in extracted:
            hot = True if config.promote_without_check else self._is_hot(e.key)
            self.ralt.log_access(e.key, len(e.value))
            if hot and config.promote_by_compaction:
                injected.append(e)
            else:
                self.metrics.add("promo_drops_cold", 1)

        # retention cursor over the fast-tier inputs' key range
        hot_keys_iter = None
        if inter_tier and config.retention_enabled and self._hotness_fn is None:
            hot_keys_iter = self.ralt.iter_hot(src_lo, src_hi)

        streams = []
        for i, t in enumerate(sources + targets):
            is_fd_input = t.level < config.sd_first_level

            def gen(meta=t, tag=i, fd=is_fd_input):
                for key, seqno, kind, value in meta.reader.iterate():
                    yield (key, -seqno, tag, kind, value, fd, False)
            streams.append(gen())
        if injected:
            streams.append(((e.key, -e.seqno, len(streams), PUT, e.value, False, True)
                            for e in injected))

        out_tier = TierId.SD if target_level >= config.sd_first_level else TierId.FD
        out_writer = _OutputAccumulator(self, out_tier, target_level)
        retain_writer = (_OutputAccumulator(self, TierId.FD, config.fd_last_level)
                         if inter_tier else None)

        hot_cursor = _HotCursor(hot_keys_iter) if hot_keys_iter else None
        retained = 0
        promoted = 0
        last_key = None
        for key, nseq, _, kind, value, from_fd, from_pc in heapq.merge(*streams):
            if key == last_key:
                continue
            last_key = key
            if kind == TOMBSTONE and bottommost:
                continue
            record = encode_data_record(key, value, -nseq, kind)
            if inter_tier:
                if from_pc:
                    retain_writer.add(key, record)
                    promoted += len(key) + len(value)
                elif from_fd and self._record_is_hot(key, hot_cursor):
                    retain_writer.add(key, record)
                    retained += len(key) + len(value)
                else:
                    out_writer.add(key, record)
            else:
                if from_pc:
                    promoted += len(key) + len(value)
                out_writer.add(key, record)

        retained_metas = retain_writer.finish() if retain_writer else []
        out_metas = out_writer.finish()

        with self._mutex:
            for t in sources:
                self._levels[level].remove(t)
            for t in targets:
                self._levels[target_level].remove(t)
            for m in retained_metas:
                self._insert_sorted(config.fd_last_level, m)
            for m in out_metas:
                self._insert_sorted(target_level, m)
            self._install_superversion()

        retain_bytes = retain_writer.bytes_written if retain_writer else 0
        self.metrics.add("compaction_count", 1)
        if inter_tier:
            self.metrics.add_compaction_bytes("fd", retain_bytes)
            self.metrics.add_compaction_bytes("sd", out_writer.bytes_written)
            self.metrics.add("intertier_compaction_bytes",
                             retain_bytes + out_writer.bytes_written)
            self.metrics.add("intertier_net_to_sd", max(
                0, out_writer.bytes_written - sum(t.file_size for t in targets)))
        else:
            tier_key = "sd" if out_tier is TierId.SD else "fd"
            self.metrics.add_compaction_bytes(tier_key, out_writer.bytes_written)
        if retained:
            self.metrics.add("retained_bytes", retained)
        if promoted:
            self.metrics.add("promoted_bytes_compaction", promoted)

    def _record_is_hot(self, key: bytes, hot_cursor) -> bool:
        if self._hotness_fn is not None:
            return self._hotness_fn(key)
        return hot_cursor.matches(key) if hot_cursor else False

    def _insert_sorted(self, level: int, meta: SSTableMeta) -> None:
        meta.level = level
        tables = self._levels[level]
        if level == 0:
            tables.append(meta)
            return
        lo, hi = 0, len(tables)
        while lo < hi:
            mid = (lo + hi) // 2
            if tables[mid].smallest < meta.smallest:
                lo = mid + 1
            else:
                hi = mid
        tables.insert(lo, meta)

    # ------------------------------------------------------------- workers

    def _start_workers(self) -> None:
        def flush_loop():
            while not self._stop.is_set():
                self._flush_wanted.wait(timeout=0.05)
                self._flush_wanted.clear()
                while self._flush_one():
                    pass

        def compact_loop():
            while not self._stop.is_set():
                self._compact_wanted.wait(timeout=0.05)
                self._compact_wanted.clear()
                self._compaction_pass()

        def checker_loop():
            while not self._stop.is_set():
                try:
                    ipc = self._checker_queue.get(timeout=0.05)
                except queue.Empty:
                    continue
                self._checker_run(ipc)

        for fn, name in ((flush_loop, "flush"), (compact_loop, "compact"),
                         (checker_loop, "checker")):
            t = threading.Thread(target=fn, name=f"tierkv-{name}", daemon=True)
            t.start()
            self._workers.append(t)

    def _drain_checker(self) -> None:
        while not self._checker_queue.empty():
            self._checker_run(self._checker_queue.get())

    def drain(self) -> None:
        """Run all pending flushes, compactions, and checker work inline."""
        while self._flush_one():
            pass
        self._compaction_pass()
        self._drain_checker()

    def flush_all(self) -> None:
        """Seal the mutable memtable and flush everything to level 0."""
        with self._write_lock:
            with self._mutex:
                self._seal_memtable_locked()
        if self.config.background:
            self._flush_wanted.set()
            while self._imms:
                time.sleep(0.001)
        else:
            while self._flush_one():
                pass

    def wait_idle(self, timeout: float = 60.0) -> None:
        """Block until background queues look empty (best effort)."""
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            with self._mutex:
                busy = bool(self._imms) or self._over_capacity_level() is not None
            busy = busy or not self._checker_queue.empty()
            if not busy and not self._compaction_job_lock.locked():
                return
            self._flush_wanted.set()
            self._compact_wanted.set()
            time.sleep(0.005)

    def close(self) -> None:
        if self._closed:
            return
        if self.config.background:
            self.wait_idle(timeout=30.0)
        self._stop.set()
        for t in self._workers:
            t.join(timeout=5.0)
        with self._write_lock:
            with self._mutex:
                self._seal_memtable_locked()
        while self._flush_one():
            pass
        self._drain_checker()
        self.ralt.drain()
        with self._mutex:
            self._write_manifest()
        self._closed = True
        self.fd.close()
        self.sd.close()

    # ------------------------------------------------------------ manifest

    def _write_manifest(self) -> None:
        """Rewrite the manifest atomically. Caller holds the DB mutex."""
        state = {
            "seqno": self._seqno,
            "next_file_id": self._next_file_id,
            "creation_counter": self._creation_counter,
            "levels": [
                [{"id": t.id, "tier": t.tier.value, "smallest": t.smallest.hex(),
                  "largest": t.largest.hex(), "file_size": t.file_size,
                  "creation_order": t.creation_order,
                  "record_count": t.record_count}
                 for t in lvl]
                for lvl in self._levels
            ],
            "ralt": self._ralt_state(),
        }
        path = os.path.join(self.config.fd_root, MANIFEST)
        tmp = path + ".tmp"
        with open(tmp, "w") as f:
            json.dump(state, f)
        os.replace(tmp, path)

    def _ralt_state(self) -> dict:
        r = self.ralt
        return {
            "tick": r.tick,
            "accessed_since_tick": r._accessed_since_tick,
            "hot_threshold": r.hot_threshold,
            "hot_limit": r.hot_limit,
            "physical_limit": r.physical_limit,
            "evictions": r.evictions,
            "runs": [
                {"level": run.level,
                 "ssts": [{"id": s.file_id, "smallest": s.smallest.hex(),
                           "largest": s.largest.hex(), "file_size": s.file_size,
                           "record_count": s.record_count,
                           "hot_total": s.hot_total, "phys_total": s.phys_total}
                          for s in run.ssts]}
                for run in r._version.runs
            ],
        }

    def _load_manifest(self) -> None:
        path = os.path.join(self.config.fd_root, MANIFEST)
        with open(path) as f:
            state = json.load(f)
        self._seqno = state["seqno"]
        self._next_file_id = state["next_file_id"]
        self._creation_counter = state["creation_counter"]
        for level, tables in enumerate(state["levels"]):
            for t in tables:
                tier_id = TierId(t["tier"])
                reader = SSTableReader(self._tier_of[tier_id], t["id"], KIND_DATA,
                                       cache=self.cache)
                meta = SSTableMeta(
                    id=t["id"], tier=tier_id, level=level,
                    smallest=bytes.fromhex(t["smallest"]),
                    largest=bytes.fromhex(t["largest"]),
                    file_size=t["file_size"],
                    creation_order=t["creation_order"],
                    record_count=t["record_count"], reader=reader)
                self.registry.register(meta)
                self._levels[level].append(meta)
        for level in range(1, self.config.num_levels):
            self._levels[level].sort(key=lambda m: m.smallest)
        rs = state["ralt"]
        r = self.ralt
        r.tick = rs["tick"]
        r._accessed_since_tick = rs["accessed_since_tick"]
        r.hot_threshold = rs["hot_threshold"]
        r.hot_limit = rs["hot_limit"]
        r.physical_limit = rs["physical_limit"]
        r.evictions = rs["evictions"]
        runs = []
        for run_state in rs["runs"]:
            ssts = []
            for s in run_state["ssts"]:
                reader = SSTableReader(r.tier, s["id"], KIND_RALT,
                                       cache=r.cache, decode=decode_tracker_block,
                                       record_key=lambda rec: rec.key)
                ssts.append(TrackerSst(
                    file_id=s["id"], reader=reader,
                    smallest=bytes.fromhex(s["smallest"]),
                    largest=bytes.fromhex(s["largest"]),
                    file_size=s["file_size"], record_count=s["record_count"],
                    hot_total=s["hot_total"], phys_total=s["phys_total"]))
            runs.append(TrackerRun(ssts=ssts, level=run_state["level"]))
        with r._lock:
            r._install(runs)
        with self._mutex:
            self._install_superversion()

    # ------------------------------------------------------------- helpers

    def io_snapshot(self) -> dict:
        return {"fd": self.fd.stats.snapshot(), "sd": self.sd.stats.snapshot()}

    def level_sizes(self) -> list[int]:
        with self._mutex:
            return [sum(t.file_size for t in lvl) for lvl in self._levels]

    def snapshot_metrics(self):
        return self.metrics.snapshot(io_stats=self.io_snapshot(),
                                     ralt_io=self.ralt.io.total)


class _HotCursor:
    """Sort-merge companion: advances through an ascending hot-key stream."""

    def __init__(self, it):
        self._it = iter(it)
        self._current = next(self._it, None)

    def matches(self, key: bytes) -> bool:
        while self._current is not None and self._current[0] < key:
            self._current = next(self._it, None)
        return self._current is not None and self._current[0] == key


class _OutputAccumulator:
    """Splits a compaction output stream into target-sized SSTables."""

    def __init__(self, store: TieredStore, tier_id: TierId, level: int):
        self.store = store
        self.tier_id = tier_id
        self.level = level
        self.writer: SSTableWriter | None = None
        self.metas: list[SSTableMeta] = []
        self.bytes_written = 0

    def add(self, key: bytes, record: bytes) -> None:
        if self.writer is None:
            self.writer = SSTableWriter(
                self.store._tier_of[self.tier_id], self.store._alloc_file_id(),
                KIND_DATA, block_size=self.store.config.block_size,
                bloom_bits_per_key=self.store.config.bloom_bits_per_key)
        self.writer.add(key, record)
        if self.writer.approx_bytes >= self.store.config.sstable_target_bytes:
            self._seal()

    def _seal(self) -> None:
        meta = self.store._finish_table(self.writer, self.tier_id, self.level)
        self.metas.append(meta)
        self.bytes_written += meta.file_size
        self.writer = None

    def finish(self) -> list[SSTableMeta]:
        if self.writer is not None and not self.writer.empty:
            self._seal()
        return self.metas
