"""SSTable container: data blocks, block index, bloom filter, fixed footer.

File layout (little endian throughout)::

    [data block 0] ... [data block n-1] [index block] [filter block] [footer]

    footer (60 bytes, fixed):
        index_off: u64   index_len: u64
        filter_off: u64  filter_len: u64
        block_size: u32  kind: u8 (0=data, 1=ralt)  pad: 3 bytes
        record_count: u64  version: u32  magic: u64

    index block:
        count: u32, then per data block:
        klen: u32 | first_key | offset: u64 | length: u32 | hot_prefix: u64

    data record (kind=data):
        klen: u32 | vlen: u32 | seqno: u64 | kind: u8 | key | value

``hot_prefix`` is the sum of the hot sizes of all records in *previous*
blocks of this file; data SSTables leave it zero, the hotness tracker uses
it to answer range size queries from the index alone. Records never span
blocks; a block is closed once it reaches the configured block size.

Each table stores at most one record per key (writers are fed merged
streams), so point lookups can bisect the index and then the block.
"""

from __future__ import annotations

import struct
from bisect import bisect_right
from collections import OrderedDict
from dataclasses import dataclass

from .bloom import BloomFilter, key_hashes
from .tiers import TierHandle, file_name

MAGIC = 0x7445_6B56_4C53_4D31  # "tEkVLSM1"
FORMAT_VERSION = 1
FOOTER = struct.Struct("<QQQQIBxxxQIQ")
FOOTER_SIZE = FOOTER.size  # 60

KIND_DATA = 0
KIND_RALT = 1

PUT = 0
TOMBSTONE = 1

DATA_BLOCK_SIZE = 16 * 1024
RALT_BLOCK_SIZE = 8 * 1024

_DATA_HDR = struct.Struct("<IIQB")
_IDX_HDR = struct.Struct("<I")
_IDX_ENTRY_TAIL = struct.Struct("<QIQ")


def encode_data_record(key: bytes, value: bytes, seqno: int, kind: int) -> bytes:
    return _DATA_HDR.pack(len(key), len(value), seqno, kind) + key + value


def decode_data_block(buf: bytes) -> list[tuple[bytes, int, int, bytes]]:
    """Decode a data block into [(key, seqno, kind, value)] in key order."""
    out = []
    pos, n = 0, len(buf)
    while pos < n:
        klen, vlen, seqno, kind = _DATA_HDR.unpack_from(buf, pos)
        pos += _DATA_HDR.size
        key = buf[pos:pos + klen]
        pos += klen
        value = buf[pos:pos + vlen]
        pos += vlen
        out.append((key, seqno, kind, value))
    return out


def _first_item(rec):
    return rec[0]


@dataclass
class IndexEntry:
    first_key: bytes
    offset: int
    length: int
    hot_prefix: int


class SSTableWriter:
    """Accumulates records in key order and writes one immutable file.

    Callers pass pre-encoded record payloads; the writer only handles block
    framing, the index, the filter, and the footer. ``in_filter`` marks the
    keys that should be visible to the bloom filter (the hotness tracker
    hides records that fell below its score threshold).
    """

    def __init__(self, tier: TierHandle, file_id: int, kind: int,
                 block_size: int | None = None, bloom_bits_per_key: int = 10):
        self.tier = tier
        self.file_id = file_id
        self.kind = kind
        self.block_size = block_size or (RALT_BLOCK_SIZE if kind == KIND_RALT else DATA_BLOCK_SIZE)
        self.bloom_bits_per_key = bloom_bits_per_key
        self._blocks: list[bytes] = []
        self._index: list[IndexEntry] = []
        self._hot_done = 0          # hot bytes in sealed blocks
        self._cur: list[bytes] = []
        self._cur_bytes = 0
        self._cur_hot = 0
        self._cur_first: bytes | None = None
        self._filter_keys: list[bytes] = []
        self._hot_total = 0
        self.smallest: bytes | None = None
        self.largest: bytes | None = None
        self.record_count = 0

    def add(self, key: bytes, payload: bytes, hot_size: int = 0, in_filter: bool = True) -> None:
        if self.largest is not None and key <= self.largest:
            raise ValueError("records must be added in strictly increasing key order")
        if self._cur_bytes and self._cur_bytes + len(payload) > self.block_size:
            self._seal_block()
        if self._cur_first is None:
            self._cur_first = key
        self._cur.append(payload)
        self._cur_bytes += len(payload)
        self._cur_hot += hot_size
        self._hot_total += hot_size
        if self.smallest is None:
            self.smallest = key
        self.largest = key
        self.record_count += 1
        if in_filter:
            self._filter_keys.append(key)

    def _seal_block(self) -> None:
        block = b"".join(self._cur)
        offset = sum(len(b) for b in self._blocks)
        self._index.append(IndexEntry(self._cur_first, offset, len(block), self._hot_done))
        self._hot_done += self._cur_hot
        self._blocks.append(block)
        self._cur = []
        self._cur_bytes = 0
        self._cur_hot = 0
        self._cur_first = None

    @property
    def empty(self) -> bool:
        return self.record_count == 0

    @property
    def approx_bytes(self) -> int:
        return sum(len(b) for b in self._blocks) + self._cur_bytes

    def finish(self) -> dict:
        """Write the file and return its summary (name, sizes, index, filter)."""
        if self.empty:
            raise ValueError("refusing to write an empty SSTable")
        if self._cur:
            self._seal_block()
        body = b"".join(self._blocks)
        index_parts = [_IDX_HDR.pack(len(self._index))]
        for e in self._index:
            index_parts.append(struct.pack("<I", len(e.first_key)))
            index_parts.append(e.first_key)
            index_parts.append(_IDX_ENTRY_TAIL.pack(e.offset, e.length, e.hot_prefix))
        index_block = b"".join(index_parts)
        bloom = BloomFilter.build(self._filter_keys, self.bloom_bits_per_key)
        filter_block = bloom.to_bytes()
        footer = FOOTER.pack(
            len(body), len(index_block),
            len(body) + len(index_block), len(filter_block),
            self.block_size, self.kind, self.record_count, FORMAT_VERSION, MAGIC,
        )
        payload = body + index_block + filter_block + footer
        name = file_name("ralt" if self.kind == KIND_RALT else "data", self.file_id)
        self.tier.write_file(name, payload)
        return {
            "name": name,
            "file_id": self.file_id,
            "file_size": len(payload),
            "smallest": self.smallest,
            "largest": self.largest,
            "record_count": self.record_count,
            "index": self._index,
            "bloom": bloom,
            "hot_total": self._hot_total,
        }


class BlockCache:
    """LRU cache of decoded data blocks, shared across tables."""

    def __init__(self, capacity_blocks: int = 2048):
        self.capacity = capacity_blocks
        self._map: OrderedDict[tuple[int, int], list] = OrderedDict()
        self.hits = 0
        self.misses = 0

    def get(self, file_id: int, block_idx: int):
        key = (file_id, block_idx)
        block = self._map.get(key)
        if block is not None:
            self._map.move_to_end(key)
            self.hits += 1
        else:
            self.misses += 1
        return block

    def put(self, file_id: int, block_idx: int, block) -> None:
        key = (file_id, block_idx)
        self._map[key] = block
        self._map.move_to_end(key)
        while len(self._map) > self.capacity:
            self._map.popitem(last=False)

    def drop_file(self, file_id: int) -> None:
        stale = [k for k in self._map if k[0] == file_id]
        for k in stale:
            del self._map[k]


class SSTableReader:
    """Random and sequential access to one SSTable.

    The footer, index, and filter are loaded once at open; data blocks are
    fetched on demand through the shared block cache. ``decode`` turns a raw
    block into a key-sorted record list and is supplied per kind.
    """

    def __init__(self, tier: TierHandle, file_id: int, kind: int,
                 cache: BlockCache | None = None, decode=decode_data_block,
                 record_key=None, preloaded: dict | None = None):
        self.tier = tier
        self.file_id = file_id
        self.kind = kind
        self.name = file_name("ralt" if kind == KIND_RALT else "data", file_id)
        self.cache = cache
        self.decode = decode
        self.record_key = record_key if record_key is not None else _first_item
        if preloaded is not None:
            self.index = preloaded["index"]
            self.bloom = preloaded["bloom"]
            self.record_count = preloaded["record_count"]
            self.file_size = preloaded["file_size"]
        else:
            self._load_meta()
        self._first_keys = [e.first_key for e in self.index]

    def _load_meta(self) -> None:
        self.file_size = self.tier.file_size(self.name)
        footer = self.tier.read(self.name, self.file_size - FOOTER_SIZE, FOOTER_SIZE)
        (index_off, index_len, filter_off, filter_len,
         block_size, kind, record_count, version, magic) = FOOTER.unpack(footer)
        if magic != MAGIC:
            raise ValueError(f"{self.name}: bad magic {magic:#x}")
        if version != FORMAT_VERSION:
            raise ValueError(f"{self.name}: unsupported format version {version}")
        if kind != self.kind:
            raise ValueError(f"{self.name}: kind mismatch")
        self.record_count = record_count
        raw = self.tier.read(self.name, index_off, index_len)
        (count,) = _IDX_HDR.unpack_from(raw, 0)
        pos = _IDX_HDR.size
        index = []
        for _ in range(count):
            (klen,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            first_key = raw[pos:pos + klen]
            pos += klen
            offset, length, hot_prefix = _IDX_ENTRY_TAIL.unpack_from(raw, pos)
            pos += _IDX_ENTRY_TAIL.size
            index.append(IndexEntry(first_key, offset, length, hot_prefix))
        self.index = index
        self.bloom = BloomFilter.from_bytes(self.tier.read(self.name, filter_off, filter_len))

    def _block(self, idx: int) -> list:
        if self.cache is not None:
            block = self.cache.get(self.file_id, idx)
            if block is not None:
                return block
        e = self.index[idx]
        block = self.decode(self.tier.read(self.name, e.offset, e.length))
        if self.cache is not None:
            self.cache.put(self.file_id, idx, block)
        return block

    def block_for_key(self, key: bytes) -> int:
        """Index of the block that would contain key, or -1 if before all."""
        return bisect_right(self._first_keys, key) - 1

    def get(self, key: bytes, hashes: tuple[int, int] | None = None):
        """Return the decoded record for key, or None."""
        if hashes is None:
            hashes = key_hashes(key)
        if not self.bloom.may_contain_hashed(*hashes):
            return None
        idx = self.block_for_key(key)
        if idx < 0:
            return None
        block = self._block(idx)
        record_key = self.record_key
        lo, hi = 0, len(block)
        while lo < hi:
            mid = (lo + hi) // 2
            if record_key(block[mid]) < key:
                lo = mid + 1
            else:
                hi = mid
        if lo < len(block) and record_key(block[lo]) == key:
            return block[lo]
        return None

    def iterate(self, lo: bytes | None = None, hi: bytes | None = None):
        """Yield decoded records with lo <= key <= hi in key order."""
        record_key = self.record_key
        start = 0
        if lo is not None:
            start = max(0, self.block_for_key(lo))
        for idx in range(start, len(self.index)):
            for rec in self._block(idx):
                k = record_key(rec)
                if lo is not None and k < lo:
                    continue
                if hi is not None and k > hi:
                    return
                yield rec
