"""tierkv: a two-tier LSM key-value store with record-level hot data
retention and promotion, plus a workload bench that reproduces its
behavioral properties at desk scale."""

from .autotune import AutotuneParams, Autotuner
from .config import StoreConfig, parse_config_file
from .metrics import AccessOrigin, MetricsRegistry, RunMetrics
from .ralt import Ralt, RaltConfig
from .scoring import ScoringMethod
from .store import TieredStore
from .tiers import IoStats, TierId, TierProfile, open_tier

__all__ = [
    "AccessOrigin",
    "AutotuneParams",
    "Autotuner",
    "IoStats",
    "MetricsRegistry",
    "Ralt",
    "RaltConfig",
    "RunMetrics",
    "ScoringMethod",
    "StoreConfig",
    "TieredStore",
    "TierId",
    "TierProfile",
    "open_tier",
    "parse_config_file",
]

__version__ = "0.1.0"
