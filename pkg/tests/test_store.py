"""Store correctness against an in-memory map oracle, plus level invariants."""

import os
import random

import pytest

from tierkv.config import MIB, StoreConfig
from tierkv.metrics import AccessOrigin
from tierkv.store import TieredStore


def small_config(tmp_path, **kw) -> StoreConfig:
    """Tiny geometry so a few thousand records exercise every level."""
    defaults = dict(
        fd_root=str(tmp_path / "fd"),
        sd_root=str(tmp_path / "sd"),
        memtable_bytes=32 * 1024,
        sstable_target_bytes=32 * 1024,
        fd_last_level_target=128 * 1024,
        sd_first_level_target=128 * 1024,
        l0_compaction_trigger=4,
        block_cache_blocks=256,
        promotion_seal_bytes=16 * 1024,
        ralt_hot_set_limit=96 * 1024,
        ralt_physical_limit=64 * 1024,
        ralt_tick_advance_bytes=128 * 1024,
        ralt_buffer_bytes=8 * 1024,
        ralt_sstable_target_bytes=16 * 1024,
        background=False,
    )
    defaults.update(kw)
    return StoreConfig(**defaults)


@pytest.fixture
def store(tmp_path):
    s = TieredStore(small_config(tmp_path))
    yield s
    s.close()


def key_of(i):
    return f"user{i:08d}".encode()


def test_put_get(store):
    store.put(b"k", b"v")
    assert store.get(b"k") == b"v"


def test_newest_wins(store):
    store.put(b"k", b"v1")
    store.put(b"k", b"v2")
    assert store.get(b"k") == b"v2"


def test_delete_masks_older_versions_everywhere(store):
    rng = random.Random(0)
    for i in range(300):
        store.put(key_of(i), rng.randbytes(200))
    store.flush_all()
    store.drain()  # push data toward the slow tier
    store.delete(key_of(7))
    assert store.get(key_of(7)) is None
    store.flush_all()
    store.drain()
    assert store.get(key_of(7)) is None


def test_get_absent(store):
    assert store.get(b"nope") is None


def test_origin_reported_memtable(store):
    store.put(b"k", b"v")
    value, origin, _ = store.get_with_origin(b"k")
    assert value == b"v"
    assert origin is AccessOrigin.MEMTABLE


def test_origin_sd_after_push_down(store):
    rng = random.Random(1)
    for i in range(1500):
        store.put(key_of(i), rng.randbytes(220))
    store.flush_all()
    store.drain()
    sizes = store.level_sizes()
    assert sum(sizes[store.config.sd_first_level:]) > 0
    origins = set()
    for i in range(0, 1500, 7):
        _, origin, _ = store.get_with_origin(key_of(i))
        origins.add(origin)
    assert AccessOrigin.SD in origins


def test_oracle_equivalence_random_ops(tmp_path):
    """10^4 mixed single-threaded ops match a dict replay exactly."""
    store = TieredStore(small_config(tmp_path))
    oracle = {}
    rng = random.Random(42)
    try:
        for step in range(10_000):
            op = rng.random()
            i = rng.randrange(600)
            k = key_of(i)
            if op < 0.45:
                v = rng.randbytes(rng.randrange(50, 300))
                store.put(k, v)
                oracle[k] = v
            elif op < 0.55:
                store.delete(k)
                oracle.pop(k, None)
            else:
                assert store.get(k) == oracle.get(k), f"divergence at op {step}"
        for i in range(600):
            assert store.get(key_of(i)) == oracle.get(key_of(i))
    finally:
        store.close()


def test_oracle_equivalence_across_reopen(tmp_path):
    config = small_config(tmp_path)
    store = TieredStore(config)
    oracle = {}
    rng = random.Random(7)
    for i in range(800):
        k = key_of(rng.randrange(400))
        v = rng.randbytes(150)
        store.put(k, v)
        oracle[k] = v
    store.close()

    store = TieredStore(small_config(tmp_path))
    try:
        for k, v in oracle.items():
            assert store.get(k) == v
    finally:
        store.close()


def test_level_disjointness_below_l0(tmp_path):
    store = TieredStore(small_config(tmp_path))
    rng = random.Random(3)
    try:
        for i in range(3000):
            store.put(key_of(rng.randrange(1500)), rng.randbytes(180))
        store.flush_all()
        store.drain()
        with store._mutex:
            for level in range(1, store.config.num_levels):
                tables = store._levels[level]
                for a, b in zip(tables, tables[1:]):
                    assert a.largest < b.smallest, f"overlap at level {level}"
    finally:
        store.close()


def test_superversion_pins_files(tmp_path):
    """Files referenced by a pinned superversion survive compactions."""
    store = TieredStore(small_config(tmp_path))
    rng = random.Random(5)
    try:
        for i in range(500):
            store.put(key_of(i), rng.randbytes(200))
        store.flush_all()
        sv = store._pin_current()
        pinned_files = [(t.tier, t.reader.name) for t in sv.tables()]
        for i in range(500, 1200):
            store.put(key_of(i), rng.randbytes(200))
        store.flush_all()
        store.drain()
        for tier_id, name in pinned_files:
            tier = store._tier_of[tier_id]
            assert os.path.exists(tier.path(name)), f"{name} deleted while pinned"
        store._unpin(sv)
    finally:
        store.close()


def test_no_file_leaks_after_drop(tmp_path):
    """Unreferenced table files are actually deleted."""
    store = TieredStore(small_config(tmp_path))
    rng = random.Random(6)
    try:
        for i in range(2000):
            store.put(key_of(rng.randrange(300)), rng.randbytes(200))
        store.flush_all()
        store.drain()
        live = {t.reader.name for lvl in store._levels for t in lvl}
        on_disk = {n for n in store.fd.list_files() if n.startswith("data-")}
        on_disk |= {n for n in store.sd.list_files() if n.startswith("data-")}
        assert on_disk == live
    finally:
        store.close()


def test_flush_bounds_and_metadata(tmp_path):
    store = TieredStore(small_config(tmp_path))
    rng = random.Random(8)
    try:
        keys = sorted(key_of(i) for i in range(1000))
        for k in keys:
            store.put(k, rng.randbytes(100))
        store.flush_all()
        with store._mutex:
            metas = [t for lvl in store._levels for t in lvl]
        assert metas
        for m in metas:
            assert m.smallest <= m.largest
    finally:
        store.close()


def test_empty_store_flush_creates_no_files(tmp_path):
    store = TieredStore(small_config(tmp_path))
    try:
        store.flush_all()
        assert not [n for n in store.fd.list_files() if n.startswith("data-")]
    finally:
        store.close()


def test_absent_key_bloom_negative_no_sd_data_reads(tmp_path):
    """All-negative bloom probes answer not-found with zero slow-tier reads."""
    store = TieredStore(small_config(tmp_path))
    try:
        store.put(b"onlykey", b"x" * 200)
        store.flush_all()
        store.drain()
        # push the single table down to the slow tier
        for level in range(store.config.num_levels - 1):
            store.compact_once(level)
        assert store.level_sizes()[store.config.sd_first_level:] != [0, 0]
        before = store.sd.stats.bytes_read
        misses = 0
        for i in range(2000):
            if store.get(f"absent{i}zz".encode()) is None:
                misses += 1
        assert misses == 2000
        assert store.sd.stats.bytes_read == before
    finally:
        store.close()


def test_seqno_order_fd_wins_over_sd(tmp_path):
    store = TieredStore(small_config(tmp_path))
    try:
        store.put(b"dup", b"old" * 50)
        store.flush_all()
        store.drain()
        for level in range(store.config.num_levels - 1):
            store.compact_once(level)
        store.put(b"dup", b"new" * 50)
        store.flush_all()
        assert store.get(b"dup") == b"new" * 50
    finally:
        store.close()
