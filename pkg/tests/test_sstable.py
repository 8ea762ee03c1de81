import random

import pytest

from tierkv.bloom import BloomFilter
from tierkv.sstable import (
    DATA_BLOCK_SIZE,
    FOOTER_SIZE,
    KIND_DATA,
    PUT,
    TOMBSTONE,
    BlockCache,
    SSTableReader,
    SSTableWriter,
    encode_data_record,
)
from tierkv.tiers import TierId, TierProfile, open_tier


@pytest.fixture
def tier(tmp_path):
    return open_tier(str(tmp_path), TierProfile(), TierId.FD)


def write_table(tier, records, file_id=1, **kw):
    w = SSTableWriter(tier, file_id, KIND_DATA, **kw)
    for key, value, seqno, kind in records:
        w.add(key, encode_data_record(key, value, seqno, kind))
    return w.finish()


def seq_records(n, value_size=100, seed=0):
    rng = random.Random(seed)
    return [(f"user{i:08d}".encode(), rng.randbytes(value_size), i + 1, PUT)
            for i in range(n)]


def test_write_read_all_records(tier):
    records = seq_records(500)
    info = write_table(tier, records)
    r = SSTableReader(tier, 1, KIND_DATA)
    assert r.record_count == 500
    for key, value, seqno, kind in records:
        got = r.get(key)
        assert got == (key, seqno, kind, value)


def test_absent_keys_mostly_filtered(tier):
    write_table(tier, seq_records(1000))
    r = SSTableReader(tier, 1, KIND_DATA)
    assert r.get(b"zzz-not-there") is None


def test_smallest_largest_match_min_max(tier):
    records = seq_records(1000)
    info = write_table(tier, records)
    assert info["smallest"] == records[0][0]
    assert info["largest"] == records[-1][0]


def test_file_size_decomposes_per_format(tier):
    """bytes_written = data blocks + index block + filter block + fixed footer."""
    records = seq_records(300, value_size=150)
    info = write_table(tier, records, file_id=7)

    payloads = [encode_data_record(k, v, s, kd) for k, v, s, kd in records]
    blocks, cur = [], []
    cur_bytes = 0
    for p in payloads:
        if cur_bytes and cur_bytes + len(p) > DATA_BLOCK_SIZE:
            blocks.append(cur_bytes)
            cur, cur_bytes = [], 0
        cur.append(p)
        cur_bytes += len(p)
    if cur:
        blocks.append(cur_bytes)
    data_bytes = sum(blocks)
    index_bytes = 4 + sum(4 + len(records[0][0]) + 20 for _ in blocks)
    filter_bytes = len(BloomFilter.build([k for k, *_ in records], 10).to_bytes())

    expected = data_bytes + index_bytes + filter_bytes + FOOTER_SIZE
    assert info["file_size"] == expected
    assert tier.stats.bytes_written == expected


def test_iterate_range(tier):
    records = seq_records(400)
    write_table(tier, records)
    r = SSTableReader(tier, 1, KIND_DATA)
    lo, hi = records[50][0], records[99][0]
    got = [rec[0] for rec in r.iterate(lo, hi)]
    assert got == [k for k, *_ in records[50:100]]


def test_iterate_full(tier):
    records = seq_records(50)
    write_table(tier, records)
    r = SSTableReader(tier, 1, KIND_DATA)
    assert [rec[0] for rec in r.iterate()] == [k for k, *_ in records]


def test_out_of_order_add_rejected(tier):
    w = SSTableWriter(tier, 1, KIND_DATA)
    w.add(b"b", encode_data_record(b"b", b"1", 1, PUT))
    with pytest.raises(ValueError):
        w.add(b"a", encode_data_record(b"a", b"1", 2, PUT))


def test_tombstones_roundtrip(tier):
    records = [(b"k1", b"", 5, TOMBSTONE), (b"k2", b"v", 6, PUT)]
    write_table(tier, records)
    r = SSTableReader(tier, 1, KIND_DATA)
    assert r.get(b"k1") == (b"k1", 5, TOMBSTONE, b"")


def test_block_cache_serves_repeat_reads(tier):
    records = seq_records(2000)
    write_table(tier, records)
    cache = BlockCache(64)
    r = SSTableReader(tier, 1, KIND_DATA, cache=cache)
    before = tier.stats.bytes_read
    r.get(records[10][0])
    after_first = tier.stats.bytes_read
    r.get(records[11][0])  # same block
    assert tier.stats.bytes_read == after_first > before


def test_bloom_filter_fp_rate_at_10_bits():
    keys = [f"user{i:08d}".encode() for i in range(20_000)]
    f = BloomFilter.build(keys, 10)
    fp = sum(f.may_contain(f"absent{i:08d}".encode()) for i in range(100_000))
    assert fp / 100_000 <= 0.012


def test_bloom_no_false_negatives():
    keys = [f"user{i:06d}".encode() for i in range(5000)]
    f = BloomFilter.build(keys, 10)
    assert all(f.may_contain(k) for k in keys)


def test_bloom_serialization_roundtrip():
    keys = [b"a", b"b", b"c"]
    f = BloomFilter.build(keys, 10)
    g = BloomFilter.from_bytes(f.to_bytes())
    assert g.nbits == f.nbits and g.nhashes == f.nhashes
    assert all(g.may_contain(k) for k in keys)
