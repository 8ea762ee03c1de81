"""Promotion cache and the Checker protocol for promotion by flush.

The promotion cache stages records read from the slow tier. Its version sits
between the fast tier's last level and the slow tier's first level: every
entry's seqno is older than any fast-tier version of the key and equal to
the newest slow-tier version at read time. Inserts are rejected when any
slow-tier table the read touched has since been marked for compaction,
because the compaction may push a newer version below the cache.

When the mutable cache reaches its seal threshold it becomes immutable (a
sorted snapshot with a growable ``updated`` key set) and is handed to the
Checker together with a pinned superversion. The Checker consults the
hotness tracker per entry, then logs the access; hot entries survive unless
a newer version exists in the snapshot or the key was overwritten by a
memtable sealed after the cache (the ``updated`` set). Survivors are packed
and flushed to level 0.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field


@dataclass
class PromotionCacheEntry:
    key: bytes
    value: bytes
    seqno: int
    source_tables: tuple[int, ...]

    @property
    def bytes(self) -> int:
        return len(self.key) + len(self.value)


@dataclass
class ImmutablePromotionCache:
    entries: list[PromotionCacheEntry]     # sorted by key
    keys: set[bytes]
    updated: set[bytes] = field(default_factory=set)
    snapshot: object = None                # pinned Superversion

    def __len__(self):
        return len(self.entries)

    def get(self, key: bytes) -> PromotionCacheEntry | None:
        lo, hi = 0, len(self.entries)
        while lo < hi:
            mid = (lo + hi) // 2
            if self.entries[mid].key < key:
                lo = mid + 1
            else:
                hi = mid
        if lo < len(self.entries) and self.entries[lo].key == key:
            return self.entries[lo]
        return None


class PromotionCache:
    """Mutable staging map plus the list of sealed immutable caches.

    The cache lock also guards compaction-mark reads during inserts; the
    store's global mutex is always acquired before this lock, never after.
    """

    def __init__(self, seal_threshold_bytes: int, metrics=None):
        self.seal_threshold = seal_threshold_bytes
        self.metrics = metrics
        self.lock = threading.Lock()
        self._mutable: dict[bytes, PromotionCacheEntry] = {}
        self._mutable_bytes = 0
        self.immutables: list[ImmutablePromotionCache] = []
        self.inserts = 0
        self.aborts = 0
        self.max_mutable_bytes = 0

    @property
    def mutable_bytes(self) -> int:
        return self._mutable_bytes

    def try_insert(self, key: bytes, value: bytes, seqno: int,
                   source_tables) -> bool:
        """Admit one slow-tier read; abort if any source table was marked.

        Returns True when the entry was admitted. ``source_tables`` are the
        SSTableMeta objects whose range contained the key during the read.
        """
        with self.lock:
            self.inserts += 1
            if any(t.compaction_mark for t in source_tables):
                self.aborts += 1
                if self.metrics is not None:
                    self.metrics.add("cache_insert_attempts", 1)
                    self.metrics.add("cache_insert_aborts", 1)
                return False
            entry = PromotionCacheEntry(
                key, value, seqno, tuple(t.id for t in source_tables))
            old = self._mutable.get(key)
            self._mutable[key] = entry
            self._mutable_bytes += entry.bytes - (old.bytes if old else 0)
            if self._mutable_bytes > self.max_mutable_bytes:
                self.max_mutable_bytes = self._mutable_bytes
            if self.metrics is not None:
                self.metrics.add("cache_insert_attempts", 1)
            return True

    def lookup(self, key: bytes) -> PromotionCacheEntry | None:
        """Search the mutable map, then the sealed caches (newest first)."""
        with self.lock:
            entry = self._mutable.get(key)
            if entry is not None:
                return entry
            for ipc in reversed(self.immutables):
                entry = ipc.get(key)
                if entry is not None:
                    return entry
        return None

    def needs_seal(self) -> bool:
        return self._mutable_bytes >= self.seal_threshold

    def seal_mutable(self, snapshot) -> ImmutablePromotionCache | None:
        """Freeze the mutable map. Caller holds the store's global mutex and
        pins ``snapshot`` after the freeze, per the flush-ordering protocol."""
        with self.lock:
            if not self._mutable:
                return None
            entries = [self._mutable[k] for k in sorted(self._mutable)]
            ipc = ImmutablePromotionCache(
                entries=entries, keys=set(self._mutable), snapshot=snapshot)
            self.immutables.append(ipc)
            self._mutable = {}
            self._mutable_bytes = 0
            return ipc

    def record_updated_keys(self, keys) -> int:
        """Called while a memtable seals (store mutex held): remember every
        key that now has a newer version above any sealed cache."""
        hits = 0
        with self.lock:
            for ipc in self.immutables:
                overlap = ipc.keys.intersection(keys)
                if overlap:
                    ipc.updated |= overlap
                    hits += len(overlap)
        return hits

    def drop_immutable(self, ipc: ImmutablePromotionCache) -> None:
        with self.lock:
            self.immutables.remove(ipc)

    def has_entries_in_range(self, lo: bytes, hi: bytes) -> bool:
        with self.lock:
            return any(lo <= k <= hi for k in self._mutable)

    def extract_range(self, lo: bytes, hi: bytes) -> list[PromotionCacheEntry]:
        """Remove and return mutable entries with lo <= key <= hi.

        Removal happens under the lock before the caller's compaction writes
        any output, so a concurrent seal cannot double-promote them.
        """
        with self.lock:
            keys = [k for k in self._mutable if lo <= k <= hi]
            out = []
            for k in sorted(keys):
                e = self._mutable.pop(k)
                self._mutable_bytes -= e.bytes
                out.append(e)
            return out

    def mark_tables(self, tables) -> None:
        """Flag compaction inputs as being (or having been) compacted."""
        with self.lock:
            for t in tables:
                t.compaction_mark = True
