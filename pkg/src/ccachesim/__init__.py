"""Cycle-level simulator of commutative-data caching (CCache) on a MESI multicore."""
from .ccache import CCacheController
from .config import CacheConfig, CCacheConfig, LevelConfig, desk_config
from .hierarchy import MemoryHierarchy
from .machine import Machine
from .metrics import Counters, SimReport, emit_csv, normalize_per_kilocycle, speedup
from .scheduler import Scheduler

__all__ = ["CCacheController", "CacheConfig", "CCacheConfig", "LevelConfig", "desk_config",
           "MemoryHierarchy", "Machine", "Counters", "SimReport", "emit_csv",
           "normalize_per_kilocycle", "speedup", "Scheduler"]
