"""Auto-tuning of the tracker's hot-set and physical size limits.

Each tracker record carries a saturating counter c and a stability tag t.
Records with c > 0 and t = 1 are stable; everything else is unstable. Fresh
accesses insert (c=delta_c, t=0); a re-access (observed lazily when two
records of the same key merge) bumps the counter and sets the tag. Counters
decay by one every time the accessed hot size crosses R: implemented lazily
with a global epoch so on-disk records never need rewriting.

The hot-set limit tracks 1.1x the total hot size of stable records, clamped
to [l_hs, r_hs]. The physical limit is the stable physical size plus a fixed
allowance for unstable records; old unstable records are evicted
oldest-tick-first when they exceed that allowance.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from .scoring import TrackerRecord, effective_counter


@dataclass
class AutotuneParams:
    l_hs: int                      # floor of the hot-set limit, bytes
    r_hs: int                      # ceiling of the hot-set limit, bytes
    delta_c: int = 1
    c_max: int = 10
    unstable_cap: int | None = None    # max physical bytes of unstable records
    decay_period: int | None = None    # R: accessed hot bytes per counter decay
    stability_margin: float = 1.1
    physical_update_every: int = 3     # evictions between physical-limit updates
    p_t: float | None = None           # analysis-only frequency threshold, 1/bytes

    def __post_init__(self):
        if not (0 < self.l_hs <= self.r_hs):
            raise ValueError("need 0 < l_hs <= r_hs")
        if not (1 <= self.delta_c <= self.c_max):
            raise ValueError("need c_max >= delta_c >= 1")
        if self.unstable_cap is None:
            self.unstable_cap = int(0.05 * self.r_hs)
        if self.decay_period is None:
            self.decay_period = self.r_hs
        if self.p_t is None:
            self.p_t = 1.0 / (5.0 * self.r_hs)


@dataclass
class StabilityState:
    """Aggregate sizes refreshed by the tracker's eviction scans."""

    total_stable_hot_size: int = 0
    total_unstable_physical_size: int = 0
    hot_size_accessed_since_decay: int = 0


class Autotuner:
    """Tracks the decay epoch and recomputes the tracker's size limits."""

    def __init__(self, params: AutotuneParams):
        self.params = params
        self.epoch = 0
        self.state = StabilityState()
        self._evictions_since_physical_update = 0
        self._lock = threading.Lock()

    def on_access(self, hot_size: int) -> None:
        """Advance the decay epoch once R bytes of hot size have been accessed."""
        with self._lock:
            self.state.hot_size_accessed_since_decay += hot_size
            while self.state.hot_size_accessed_since_decay >= self.params.decay_period:
                self.state.hot_size_accessed_since_decay -= self.params.decay_period
                self.epoch += 1

    def is_stable(self, record: TrackerRecord) -> bool:
        return bool(record.stable) and effective_counter(record, self.epoch) > 0

    def refresh_sizes(self, stable_hot: int, unstable_physical: int) -> None:
        """Install exact aggregates computed by an eviction's full scan."""
        with self._lock:
            self.state.total_stable_hot_size = stable_hot
            self.state.total_unstable_physical_size = unstable_physical

    def hot_set_limit(self) -> int:
        p = self.params
        raw = int(p.stability_margin * self.state.total_stable_hot_size)
        return min(max(raw, p.l_hs), p.r_hs)

    def physical_limit(self, stable_physical: int) -> int:
        return stable_physical + self.params.unstable_cap

    def recompute_limits(self, stable_hot: int, stable_physical: int,
                         unstable_physical: int) -> tuple[int, int | None]:
        """New (hot limit, physical limit or None) after an eviction scan.

        The hot limit updates on every eviction; the physical limit only on
        every ``physical_update_every``-th one, to leave time for the disk
        footprint to adjust.
        """
        self.refresh_sizes(stable_hot, unstable_physical)
        hot_limit = self.hot_set_limit()
        self._evictions_since_physical_update += 1
        physical_limit = None
        if self._evictions_since_physical_update >= self.params.physical_update_every:
            self._evictions_since_physical_update = 0
            physical_limit = self.physical_limit(stable_physical)
        return hot_limit, physical_limit
