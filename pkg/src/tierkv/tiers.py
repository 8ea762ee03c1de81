"""Storage tiers: directories of immutable files with I/O accounting.

Two tiers exist per store: FD (fast disk) and SD (slow disk). Each tier is a
directory holding immutable files, created whole and never modified. A
``TierProfile`` can inject artificial per-block latency so the fast/slow gap
can be emulated on a single physical disk.
"""

from __future__ import annotations

import enum
import os
import threading
import time
from dataclasses import dataclass, field

BLOCK_GRANULARITY = 16 * 1024  # latency is charged per 16 KiB logical block


class TierId(enum.Enum):
    FD = "fd"
    SD = "sd"


class ConfigurationError(Exception):
    """Tier root missing or not writable."""


class DuplicateFileError(Exception):
    """A file with this name already exists on the tier."""


@dataclass(frozen=True)
class TierProfile:
    """Latency model for one tier. Latencies are seconds per 16 KiB block."""

    name: str = "null"
    read_latency: float = 0.0
    write_latency: float = 0.0

    def __post_init__(self):
        if self.read_latency < 0 or self.write_latency < 0:
            raise ValueError("latencies must be >= 0")


@dataclass
class IoStats:
    """Monotone per-tier I/O counters. Reset only at run boundaries."""

    bytes_read: int = 0
    bytes_written: int = 0
    read_ops: int = 0
    write_ops: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def note_read(self, nbytes: int) -> None:
        with self._lock:
            self.bytes_read += nbytes
            self.read_ops += 1

    def note_write(self, nbytes: int) -> None:
        with self._lock:
            self.bytes_written += nbytes
            self.write_ops += 1

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "bytes_read": self.bytes_read,
                "bytes_written": self.bytes_written,
                "read_ops": self.read_ops,
                "write_ops": self.write_ops,
            }

    def reset(self) -> None:
        with self._lock:
            self.bytes_read = 0
            self.bytes_written = 0
            self.read_ops = 0
            self.write_ops = 0


def _blocks(nbytes: int) -> int:
    return max(1, -(-nbytes // BLOCK_GRANULARITY))


class TierHandle:
    """One storage tier: immutable files under a root directory.

    Files are written whole (create, write, fsync) and never modified.
    Handles are shared across threads; reads use pread on cached file
    descriptors so they do not interfere with each other.
    """

    def __init__(self, tier_id: TierId, root: str, profile: TierProfile):
        self.tier_id = tier_id
        self.root = root
        self.profile = profile
        self.stats = IoStats()
        self._fds: dict[str, int] = {}
        self._fd_lock = threading.Lock()

    def path(self, name: str) -> str:
        return os.path.join(self.root, name)

    def write_file(self, name: str, payload: bytes) -> str:
        path = self.path(name)
        if os.path.exists(path):
            raise DuplicateFileError(f"{self.tier_id.value}/{name} already exists")
        if self.profile.write_latency:
            time.sleep(self.profile.write_latency * _blocks(len(payload)))
        fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_EXCL, 0o644)
        try:
            os.write(fd, payload)
            os.fsync(fd)
        finally:
            os.close(fd)
        self.stats.note_write(len(payload))
        return name

    def _fd_for(self, name: str) -> int:
        with self._fd_lock:
            fd = self._fds.get(name)
            if fd is None:
                fd = os.open(self.path(name), os.O_RDONLY)
                self._fds[name] = fd
            return fd

    def read(self, name: str, offset: int, length: int) -> bytes:
        if not os.path.exists(self.path(name)):
            raise FileNotFoundError(f"{self.tier_id.value}/{name}")
        if self.profile.read_latency:
            time.sleep(self.profile.read_latency * _blocks(length))
        data = os.pread(self._fd_for(name), length, offset)
        self.stats.note_read(len(data))
        return data

    def read_file(self, name: str) -> bytes:
        return self.read(name, 0, self.file_size(name))

    def file_size(self, name: str) -> int:
        return os.stat(self.path(name)).st_size

    def delete_file(self, name: str) -> None:
        with self._fd_lock:
            fd = self._fds.pop(name, None)
            if fd is not None:
                os.close(fd)
        os.unlink(self.path(name))

    def list_files(self) -> list[str]:
        return sorted(os.listdir(self.root))

    def live_bytes(self) -> int:
        return sum(os.stat(self.path(n)).st_size for n in self.list_files())

    def close(self) -> None:
        with self._fd_lock:
            for fd in self._fds.values():
                os.close(fd)
            self._fds.clear()


def open_tier(root: str, profile: TierProfile, tier_id: TierId = TierId.FD) -> TierHandle:
    """Open a tier rooted at an existing writable directory."""
    if not os.path.isdir(root):
        raise ConfigurationError(f"tier root {root!r} does not exist")
    if not os.access(root, os.W_OK):
        raise ConfigurationError(f"tier root {root!r} is not writable")
    return TierHandle(tier_id, root, profile)


def file_name(kind: str, file_id: int) -> str:
    """Canonical on-tier file name: ``<kind>-<u64 id>.sst``, kind in {data, ralt}."""
    if kind not in ("data", "ralt"):
        raise ValueError(f"unknown file kind {kind!r}")
    return f"{kind}-{file_id}.sst"
