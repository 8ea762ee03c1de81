"""Store configuration and the line-oriented key=value config file format.

Desk-scale defaults shrink the reference geometry proportionally: a 10:1
tier ratio, 4 MiB memtables and target SSTables, two levels per tier with
size ratio 10, and a hot-set limit of 60% of the fast tier's last level.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .autotune import AutotuneParams
from .scoring import ScoringMethod

KIB = 1024
MIB = 1024 * 1024


@dataclass
class StoreConfig:
    fd_root: str = ""
    sd_root: str = ""

    # level layout
    fd_levels: int = 2
    sd_levels: int = 2
    size_ratio: int = 10                      # T
    fd_last_level_target: int = 80 * MIB
    sd_first_level_target: int | None = None  # None: same as fd_last_level_target

    memtable_bytes: int = 4 * MIB
    sstable_target_bytes: int = 4 * MIB
    l0_compaction_trigger: int = 4
    block_size: int = 16 * KIB
    bloom_bits_per_key: int = 10
    block_cache_blocks: int = 4096

    # injected latency, seconds per 16 KiB block
    fd_read_latency: float = 0.0
    fd_write_latency: float = 0.0
    sd_read_latency: float = 0.0
    sd_write_latency: float = 0.0

    # promotion
    promotion_enabled: bool = True
    promotion_seal_bytes: int = 4 * MIB
    retention_enabled: bool = True
    promote_by_compaction: bool = True
    promote_without_check: bool = False   # promote-accessed ablation

    # hotness tracker
    ralt_hot_set_limit: int | None = None       # None: 60% of fd_last_level_target
    ralt_physical_limit: int | None = None      # None: 6% of the hot-set limit
    ralt_alpha: float = 0.9
    ralt_evict_fraction: float = 0.10
    ralt_tick_advance_bytes: int | None = None  # None: fd_last_level_target
    ralt_buffer_bytes: int = 1 * MIB
    ralt_sstable_target_bytes: int = 1 * MIB
    ralt_bloom_bits_per_key: int = 16
    ralt_threshold_samples: int = 10_000
    scoring_method: ScoringMethod = ScoringMethod.EXP_SMOOTHING

    # auto-tuning (off by default; headline runs pin the limits)
    autotune_enabled: bool = False
    autotune_l_hs: int | None = None    # None: 5% of fd_last_level_target
    autotune_r_hs: int | None = None    # None: 80% of fd_last_level_target
    autotune_delta_c: int = 1
    autotune_c_max: int = 10
    autotune_decay_period: int | None = None   # R; None: r_hs

    background: bool = True
    seed: int = 0

    def resolved_sd_first_level_target(self) -> int:
        if self.sd_first_level_target is not None:
            return self.sd_first_level_target
        return self.fd_last_level_target

    def resolved_hot_set_limit(self) -> int:
        if self.ralt_hot_set_limit is not None:
            return self.ralt_hot_set_limit
        return int(0.6 * self.fd_last_level_target)

    def resolved_physical_limit(self) -> int:
        if self.ralt_physical_limit is not None:
            return self.ralt_physical_limit
        return max(2 * MIB, int(0.06 * self.resolved_hot_set_limit()))

    def resolved_tick_advance(self) -> int:
        if self.ralt_tick_advance_bytes is not None:
            return self.ralt_tick_advance_bytes
        return self.fd_last_level_target

    def autotune_params(self) -> AutotuneParams:
        l_hs = self.autotune_l_hs or int(0.05 * self.fd_last_level_target)
        r_hs = self.autotune_r_hs or int(0.80 * self.fd_last_level_target)
        return AutotuneParams(
            l_hs=l_hs, r_hs=r_hs,
            delta_c=self.autotune_delta_c, c_max=self.autotune_c_max,
            decay_period=self.autotune_decay_period,
        )

    def level_targets(self) -> list[int]:
        """Target bytes per global level; the bottom level is unbounded (0).

        Fast-tier levels step up by the size ratio to the last fast level;
        the first slow level gets its own target, then the ratio applies
        again.
        """
        targets = []
        for i in range(self.fd_levels):
            targets.append(self.fd_last_level_target
                           // self.size_ratio ** (self.fd_levels - 1 - i))
        sd_first = self.resolved_sd_first_level_target()
        for j in range(self.sd_levels):
            targets.append(sd_first * self.size_ratio ** j)
        targets[-1] = 0
        return targets

    @property
    def num_levels(self) -> int:
        return self.fd_levels + self.sd_levels

    @property
    def fd_last_level(self) -> int:
        return self.fd_levels - 1

    @property
    def sd_first_level(self) -> int:
        return self.fd_levels


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _coerce(value: str, target_type):
    if target_type is bool:
        v = value.strip().lower()
        if v in _BOOL_TRUE:
            return True
        if v in _BOOL_FALSE:
            return False
        raise ValueError(f"bad boolean {value!r}")
    if target_type is ScoringMethod:
        return ScoringMethod(value.strip())
    if value.strip().lower() == "none":
        return None
    return target_type(value.strip())


def parse_config_file(path: str, base: StoreConfig | None = None) -> StoreConfig:
    """Read key=value lines into a StoreConfig; '#' starts a comment."""
    config = base if base is not None else StoreConfig()
    types = {}
    for f in fields(StoreConfig):
        t = f.type
        if t in ("int", int):
            types[f.name] = int
        elif t in ("float", float):
            types[f.name] = float
        elif t in ("bool", bool):
            types[f.name] = bool
        elif t in ("int | None",):
            types[f.name] = int
        elif f.name == "scoring_method":
            types[f.name] = ScoringMethod
        else:
            types[f.name] = str
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            key = key.strip()
            if key not in types:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            setattr(config, key, _coerce(value, types[key]))
    return config


def write_config_file(path: str, config: StoreConfig) -> None:
    with open(path, "w") as fh:
        for f in fields(StoreConfig):
            v = getattr(config, f.name)
            if isinstance(v, ScoringMethod):
                v = v.value
            fh.write(f"{f.name}={v}\n")
