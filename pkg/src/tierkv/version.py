"""Memtables, table metadata, and reference-counted superversions.

A superversion is an immutable snapshot of the whole store: the mutable
memtable, the sealed immutable memtables, and the per-level SSTable lists
across both tiers. One is installed after every flush or compaction; readers
pin the current one and never see files disappear under them. Table files
are deleted only when no superversion references them.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from .sstable import PUT, TOMBSTONE, SSTableReader
from .tiers import TierId

MEMTABLE_ENTRY_OVERHEAD = 24  # rough per-entry bookkeeping bytes


class MemTable:
    """Mutable write buffer: newest (seqno, kind, value) per key."""

    def __init__(self):
        self.data: dict[bytes, tuple[int, int, bytes]] = {}
        self.bytes = 0

    def put(self, key: bytes, value: bytes, seqno: int, kind: int = PUT) -> None:
        old = self.data.get(key)
        self.data[key] = (seqno, kind, value)
        if old is None:
            self.bytes += len(key) + len(value) + MEMTABLE_ENTRY_OVERHEAD
        else:
            self.bytes += len(value) - len(old[2])

    def get(self, key: bytes):
        return self.data.get(key)

    def __len__(self):
        return len(self.data)

    def sorted_items(self):
        return sorted(self.data.items())


class ImmutableMemTable:
    """Sealed memtable awaiting flush; read-only."""

    def __init__(self, memtable: MemTable, seal_order: int):
        self.data = memtable.data
        self.bytes = memtable.bytes
        self.seal_order = seal_order

    def get(self, key: bytes):
        return self.data.get(key)

    def __len__(self):
        return len(self.data)

    def sorted_items(self):
        return sorted(self.data.items())


@dataclass
class SSTableMeta:
    """Identity and placement of one live data SSTable.

    ``compaction_mark`` is set (under the promotion-cache lock) when the
    table becomes an input of a compaction job and is never cleared while
    the table lives; promotion-cache inserts consult it to reject records
    whose slow-tier source may have been superseded.
    """

    id: int
    tier: TierId
    level: int
    smallest: bytes
    largest: bytes
    file_size: int
    creation_order: int
    record_count: int = 0
    compaction_mark: bool = False
    refs: int = 0
    reader: SSTableReader | None = None

    def overlaps(self, lo: bytes, hi: bytes) -> bool:
        return self.smallest <= hi and self.largest >= lo

    def contains(self, key: bytes) -> bool:
        return self.smallest <= key <= self.largest


@dataclass
class Superversion:
    memtable: MemTable
    imm_memtables: tuple[ImmutableMemTable, ...]
    levels: tuple[tuple[SSTableMeta, ...], ...]
    refcount: int = 1

    def tables(self):
        for level in self.levels:
            yield from level


class TableRegistry:
    """Tracks live SSTableMeta refcounts and deletes unreferenced files."""

    def __init__(self):
        self._lock = threading.Lock()
        self._tables: dict[int, SSTableMeta] = {}
        self._tiers: dict[TierId, object] = {}
        self._on_delete = None

    def attach(self, tier_id: TierId, tier) -> None:
        self._tiers[tier_id] = tier

    def set_on_delete(self, fn) -> None:
        self._on_delete = fn

    def register(self, meta: SSTableMeta) -> None:
        with self._lock:
            self._tables[meta.id] = meta

    def ref(self, meta: SSTableMeta) -> None:
        with self._lock:
            meta.refs += 1

    def unref(self, meta: SSTableMeta) -> None:
        delete = False
        with self._lock:
            meta.refs -= 1
            if meta.refs == 0:
                del self._tables[meta.id]
                delete = True
        if delete:
            if self._on_delete is not None:
                self._on_delete(meta)
            self._tiers[meta.tier].delete_file(meta.reader.name)

    def live_ids(self) -> set[int]:
        with self._lock:
            return set(self._tables)


def newest_version(entry_a, entry_b):
    """Pick the entry with the larger seqno; entries are (seqno, kind, value)."""
    if entry_a is None:
        return entry_b
    if entry_b is None:
        return entry_a
    return entry_a if entry_a[0] >= entry_b[0] else entry_b
