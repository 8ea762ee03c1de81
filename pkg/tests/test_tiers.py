import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tierkv.tiers import (
    ConfigurationError,
    DuplicateFileError,
    TierId,
    TierProfile,
    file_name,
    open_tier,
)


@pytest.fixture
def tier(tmp_path):
    return open_tier(str(tmp_path), TierProfile(), TierId.FD)


def test_open_tier_zero_latency_empty_stats(tier):
    s = tier.stats.snapshot()
    assert s == {"bytes_read": 0, "bytes_written": 0, "read_ops": 0, "write_ops": 0}


def test_open_tier_missing_root():
    with pytest.raises(ConfigurationError):
        open_tier("/nonexistent/path/xyz", TierProfile())


def test_write_read_roundtrip(tier):
    payload = bytes(range(256)) * 100
    tier.write_file("data-1.sst", payload)
    assert tier.read_file("data-1.sst") == payload


def test_duplicate_name_rejected(tier):
    tier.write_file("data-2.sst", b"abc")
    with pytest.raises(DuplicateFileError):
        tier.write_file("data-2.sst", b"xyz")


def test_delete_then_read_not_found(tier):
    tier.write_file("data-3.sst", b"abc")
    tier.delete_file("data-3.sst")
    with pytest.raises(FileNotFoundError):
        tier.read("data-3.sst", 0, 3)


def test_read_counters_additive(tier):
    tier.write_file("data-4.sst", b"\x00" * 32768)
    tier.read("data-4.sst", 0, 16384)
    tier.read("data-4.sst", 16384, 16384)
    assert tier.stats.bytes_read == 32768
    assert tier.stats.read_ops == 2


def test_injected_read_latency(tmp_path):
    tier = open_tier(str(tmp_path), TierProfile("slow", read_latency=0.001))
    tier.write_file("data-5.sst", b"\x00" * 16384)
    t0 = time.monotonic()
    tier.read("data-5.sst", 0, 16384)
    assert time.monotonic() - t0 >= 0.001


def test_injected_latency_scales_per_block(tmp_path):
    tier = open_tier(str(tmp_path), TierProfile("slow", read_latency=0.002))
    tier.write_file("data-6.sst", b"\x00" * (16384 * 4))
    t0 = time.monotonic()
    tier.read_file("data-6.sst")
    assert time.monotonic() - t0 >= 0.008


def test_accounting_matches_live_files(tier):
    sizes = [100, 5000, 70000]
    for i, n in enumerate(sizes):
        tier.write_file(file_name("data", i), b"x" * n)
    tier.delete_file(file_name("data", 1))
    assert tier.live_bytes() == tier.stats.bytes_written - 5000


@settings(max_examples=30, deadline=None)
@given(payload=st.binary(min_size=0, max_size=100_000))
def test_roundtrip_property(tmp_path_factory, payload):
    tier = open_tier(str(tmp_path_factory.mktemp("t")), TierProfile())
    tier.write_file("data-9.sst", payload)
    assert tier.read_file("data-9.sst") == payload
    tier.close()


def test_file_name_scheme():
    assert file_name("data", 42) == "data-42.sst"
    assert file_name("ralt", 7) == "ralt-7.sst"
    with pytest.raises(ValueError):
        file_name("other", 1)
