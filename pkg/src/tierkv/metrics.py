"""Run metrics: hit counters by origin, data movement, I/O, and time series.

Counters are monotone during a run and only reset at run boundaries. The
fast hit rate counts gets answered from the memtables, the fast-disk levels,
or the promotion cache. ``write_report`` emits line-delimited key=value
records (the stable field names are the test interface) followed by a
summary block.
"""

from __future__ import annotations

import enum
import threading
import time
from dataclasses import dataclass, field


class AccessOrigin(enum.Enum):
    MEMTABLE = "memtable"
    FD = "fd"
    PROMO_CACHE = "promotion_cache"
    SD = "sd"
    NOT_FOUND = "not_found"


FAST_ORIGINS = (AccessOrigin.MEMTABLE, AccessOrigin.FD, AccessOrigin.PROMO_CACHE)


@dataclass
class WindowSample:
    ops: int
    wall_time: float
    gets: int
    fast_hits: int
    hot_set_limit: int = 0

    @property
    def hit_rate(self) -> float:
        return self.fast_hits / self.gets if self.gets else 0.0


class MetricsRegistry:
    """Shared mutable counters; cheap enough to sit on the get path."""

    def __init__(self, window_ops: int = 10_000):
        self._lock = threading.Lock()
        self.window_ops = window_ops
        self.reset()

    def reset(self) -> None:
        with self._lock:
            self.get_count = {origin: 0 for origin in AccessOrigin}
            self.get_level_count: dict[tuple[str, int], int] = {}
            self.user_bytes_written = 0
            self.user_write_ops = 0
            self.promoted_bytes_flush = 0
            self.promoted_bytes_compaction = 0
            self.retained_bytes = 0
            self.compaction_bytes_written = {"fd": 0, "sd": 0}
            self.intertier_compaction_bytes = 0
            self.intertier_net_to_sd = 0
            self.cache_insert_aborts = 0
            self.cache_insert_attempts = 0
            self.promo_drops_cold = 0
            self.promo_drops_updated = 0
            self.promo_drops_newer = 0
            self.flush_count = 0
            self.compaction_count = 0
            self.trivial_moves = 0
            self.get_latencies: list[float] = []
            self.windows: list[WindowSample] = []
            self._window_gets = 0
            self._window_fast = 0
            self._ops_since_window = 0
            self.started_at = time.monotonic()

    # ------------------------------------------------------------- recording

    def note_get(self, origin: AccessOrigin, level: int | None = None,
                 latency: float | None = None) -> None:
        with self._lock:
            self.get_count[origin] += 1
            if level is not None:
                k = (origin.value, level)
                self.get_level_count[k] = self.get_level_count.get(k, 0) + 1
            if latency is not None and len(self.get_latencies) < 500_000:
                self.get_latencies.append(latency)
            self._window_gets += 1
            if origin in FAST_ORIGINS:
                self._window_fast += 1
            self._bump_window()

    def note_write_op(self, nbytes: int) -> None:
        with self._lock:
            self.user_bytes_written += nbytes
            self.user_write_ops += 1
            self._bump_window()

    def _bump_window(self) -> None:
        self._ops_since_window += 1
        if self._ops_since_window >= self.window_ops:
            self._flush_window()

    def _flush_window(self) -> None:
        self.windows.append(WindowSample(
            ops=self._ops_since_window,
            wall_time=time.monotonic() - self.started_at,
            gets=self._window_gets,
            fast_hits=self._window_fast,
            hot_set_limit=getattr(self, "_hot_limit_probe", lambda: 0)(),
        ))
        self._ops_since_window = 0
        self._window_gets = 0
        self._window_fast = 0

    def set_hot_limit_probe(self, fn) -> None:
        self._hot_limit_probe = fn

    def close_window(self) -> None:
        with self._lock:
            if self._ops_since_window:
                self._flush_window()

    def add(self, field_name: str, amount: int) -> None:
        with self._lock:
            setattr(self, field_name, getattr(self, field_name) + amount)

    def add_compaction_bytes(self, tier: str, amount: int) -> None:
        with self._lock:
            self.compaction_bytes_written[tier] += amount

    # ------------------------------------------------------------- snapshots

    def snapshot(self, io_stats: dict | None = None,
                 ralt_io: int | None = None) -> "RunMetrics":
        with self._lock:
            gets = sum(self.get_count.values())
            fast = sum(self.get_count[o] for o in FAST_ORIGINS)
            lat = sorted(self.get_latencies)

            def pct(p):
                return lat[min(len(lat) - 1, int(p * len(lat)))] if lat else 0.0

            return RunMetrics(
                get_count={o.value: c for o, c in self.get_count.items()},
                get_level_count=dict(self.get_level_count),
                gets=gets,
                fd_hit_rate=(fast / gets) if gets else 0.0,
                user_bytes_written=self.user_bytes_written,
                user_write_ops=self.user_write_ops,
                promoted_bytes_flush=self.promoted_bytes_flush,
                promoted_bytes_compaction=self.promoted_bytes_compaction,
                retained_bytes=self.retained_bytes,
                compaction_bytes_written=dict(self.compaction_bytes_written),
                intertier_compaction_bytes=self.intertier_compaction_bytes,
                intertier_net_to_sd=self.intertier_net_to_sd,
                cache_insert_aborts=self.cache_insert_aborts,
                cache_insert_attempts=self.cache_insert_attempts,
                promo_drops_cold=self.promo_drops_cold,
                promo_drops_updated=self.promo_drops_updated,
                promo_drops_newer=self.promo_drops_newer,
                flush_count=self.flush_count,
                compaction_count=self.compaction_count,
                trivial_moves=self.trivial_moves,
                duration=time.monotonic() - self.started_at,
                p50_get_latency=pct(0.50),
                p99_get_latency=pct(0.99),
                p999_get_latency=pct(0.999),
                windows=list(self.windows),
                io_stats=io_stats or {},
                ralt_bytes_io=ralt_io or 0,
            )


@dataclass
class RunMetrics:
    get_count: dict
    get_level_count: dict
    gets: int
    fd_hit_rate: float
    user_bytes_written: int
    user_write_ops: int
    promoted_bytes_flush: int
    promoted_bytes_compaction: int
    retained_bytes: int
    compaction_bytes_written: dict
    intertier_compaction_bytes: int
    intertier_net_to_sd: int
    cache_insert_aborts: int
    cache_insert_attempts: int
    promo_drops_cold: int
    promo_drops_updated: int
    promo_drops_newer: int
    flush_count: int
    compaction_count: int
    trivial_moves: int
    duration: float
    p50_get_latency: float
    p99_get_latency: float
    p999_get_latency: float
    windows: list = field(default_factory=list)
    io_stats: dict = field(default_factory=dict)
    ralt_bytes_io: int = 0

    @property
    def total_compaction_bytes(self) -> int:
        return sum(self.compaction_bytes_written.values())

    @property
    def write_amplification(self) -> float:
        if not self.user_bytes_written:
            return 0.0
        return self.total_compaction_bytes / self.user_bytes_written

    def stable_phase_start(self, fraction: float = 0.95) -> int:
        """Index of the first window whose hit rate reaches ``fraction`` of
        the best window's hit rate; the warm-up/stable dividing point."""
        rates = [w.hit_rate for w in self.windows if w.gets]
        if not rates:
            return 0
        peak = max(rates)
        for i, w in enumerate(self.windows):
            if w.gets and w.hit_rate >= fraction * peak:
                return i
        return 0

    def stable_hit_rate(self, fraction: float = 0.95) -> float:
        start = self.stable_phase_start(fraction)
        gets = sum(w.gets for w in self.windows[start:])
        fast = sum(w.fast_hits for w in self.windows[start:])
        return fast / gets if gets else self.fd_hit_rate

    def as_lines(self) -> list[str]:
        lines = []
        for origin, count in sorted(self.get_count.items()):
            lines.append(f"get_count.{origin}={count}")
        lines.append(f"gets={self.gets}")
        lines.append(f"fd_hit_rate={self.fd_hit_rate:.6f}")
        lines.append(f"stable_hit_rate={self.stable_hit_rate():.6f}")
        lines.append(f"user_bytes_written={self.user_bytes_written}")
        lines.append(f"promoted_bytes_flush={self.promoted_bytes_flush}")
        lines.append(f"promoted_bytes_compaction={self.promoted_bytes_compaction}")
        lines.append(f"retained_bytes={self.retained_bytes}")
        for tier, amount in sorted(self.compaction_bytes_written.items()):
            lines.append(f"compaction_bytes_written.{tier}={amount}")
        lines.append(f"write_amplification={self.write_amplification:.4f}")
        lines.append(f"cache_insert_aborts={self.cache_insert_aborts}")
        lines.append(f"cache_insert_attempts={self.cache_insert_attempts}")
        lines.append(f"ralt_bytes_io={self.ralt_bytes_io}")
        for tier, stats in sorted(self.io_stats.items()):
            for k, v in sorted(stats.items()):
                lines.append(f"io.{tier}.{k}={v}")
        lines.append(f"flush_count={self.flush_count}")
        lines.append(f"compaction_count={self.compaction_count}")
        lines.append(f"trivial_moves={self.trivial_moves}")
        lines.append(f"duration_s={self.duration:.3f}")
        lines.append(f"p50_get_latency_s={self.p50_get_latency:.6f}")
        lines.append(f"p99_get_latency_s={self.p99_get_latency:.6f}")
        lines.append(f"p999_get_latency_s={self.p999_get_latency:.6f}")
        for i, w in enumerate(self.windows):
            lines.append(
                f"window.{i}=ops:{w.ops},t:{w.wall_time:.3f},"
                f"gets:{w.gets},fast:{w.fast_hits},hot_limit:{w.hot_set_limit}")
        return lines

    def write_report(self, path: str) -> None:
        with open(path, "w") as f:
            for line in self.as_lines():
                f.write(line + "\n")
            f.write("\n# summary\n")
            f.write(self.summary() + "\n")

    def summary(self) -> str:
        return (
            f"gets={self.gets} fd_hit_rate={self.fd_hit_rate:.3f} "
            f"stable_hit_rate={self.stable_hit_rate():.3f} "
            f"promoted_flush={self.promoted_bytes_flush} "
            f"promoted_compaction={self.promoted_bytes_compaction} "
            f"retained={self.retained_bytes} "
            f"compaction_bytes={self.total_compaction_bytes} "
            f"WA={self.write_amplification:.2f} "
            f"aborts={self.cache_insert_aborts}/{self.cache_insert_attempts} "
            f"duration={self.duration:.1f}s"
        )
