"""Bloom filters keyed by byte strings.

Double hashing over a blake2b digest: probe bit i is (h1 + i*h2) mod nbits.
Data SSTables use 10 bits/key (k=7, ~0.8% false positives per filter). The
hotness tracker uses wider filters because a hotness check consults the
filters of every live run and the false positives add up.
"""

from __future__ import annotations

import hashlib
import math
import struct

_DIGEST = struct.Struct("<QQ")


def key_hashes(key: bytes) -> tuple[int, int]:
    """Two independent 64-bit hashes of the key, reusable across filters."""
    d = hashlib.blake2b(key, digest_size=16).digest()
    return _DIGEST.unpack(d)


class BloomFilter:
    def __init__(self, nbits: int, nhashes: int, bits: bytearray | None = None):
        self.nbits = max(8, nbits)
        self.nhashes = nhashes
        self.bits = bits if bits is not None else bytearray((self.nbits + 7) // 8)

    @classmethod
    def build(cls, keys, bits_per_key: int) -> "BloomFilter":
        keys = list(keys)
        nbits = max(64, len(keys) * bits_per_key)
        nhashes = max(1, round(math.log(2) * bits_per_key))
        f = cls(nbits, nhashes)
        for k in keys:
            f.add(k)
        return f

    def add(self, key: bytes) -> None:
        h1, h2 = key_hashes(key)
        bits, nbits = self.bits, self.nbits
        for i in range(self.nhashes):
            pos = (h1 + i * h2) % nbits
            bits[pos >> 3] |= 1 << (pos & 7)

    def may_contain_hashed(self, h1: int, h2: int) -> bool:
        bits, nbits = self.bits, self.nbits
        for i in range(self.nhashes):
            pos = (h1 + i * h2) % nbits
            if not bits[pos >> 3] & (1 << (pos & 7)):
                return False
        return True

    def may_contain(self, key: bytes) -> bool:
        return self.may_contain_hashed(*key_hashes(key))

    def to_bytes(self) -> bytes:
        return struct.pack("<QI", self.nbits, self.nhashes) + bytes(self.bits)

    @classmethod
    def from_bytes(cls, data: bytes) -> "BloomFilter":
        nbits, nhashes = struct.unpack_from("<QI", data, 0)
        return cls(nbits, nhashes, bytearray(data[12:]))
