"""Architecture configuration: cache geometry, latencies and CCache knobs.

Defaults follow the simulated machine used for the CCache evaluation
(8 cores, 32KB L1, 512KB L2, 4MB shared LLC, 300-cycle memory).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import ConfigError

LINE_BYTES = 64
WORDS_PER_LINE = 8
LEVEL_NAMES = ("l1", "l2", "llc")


@dataclass(frozen=True)
class LevelConfig:
    ways: int
    capacity_bytes: int
    hit_latency_cycles: int
    line_bytes: int = LINE_BYTES

    @property
    def sets(self) -> int:
        return self.capacity_bytes // (self.ways * self.line_bytes)

    def validate(self, name: str) -> None:
        if self.line_bytes != LINE_BYTES:
            raise ConfigError(f"{name}: line_bytes must be {LINE_BYTES}")
        if self.ways <= 0 or self.capacity_bytes <= 0:
            raise ConfigError(f"{name}: ways and capacity must be positive")
        if self.capacity_bytes % (self.ways * self.line_bytes):
            raise ConfigError(f"{name}: capacity not divisible by ways*line_bytes")
        n = self.sets
        if n & (n - 1):
            raise ConfigError(f"{name}: set count {n} is not a power of two")


@dataclass(frozen=True)
class CacheConfig:
    l1: LevelConfig = LevelConfig(8, 32 * 1024, 4)
    l2: LevelConfig = LevelConfig(8, 512 * 1024, 10)
    llc: LevelConfig = LevelConfig(16, 4 * 1024 * 1024, 70)
    memory_latency_cycles: int = 300
    core_count: int = 8
    non_memory_instruction_cycles: int = 1

    @property
    def levels(self) -> tuple[LevelConfig, LevelConfig, LevelConfig]:
        return (self.l1, self.l2, self.llc)

    def validate(self) -> "CacheConfig":
        for name, lvl in zip(LEVEL_NAMES, self.levels):
            lvl.validate(name)
        if self.core_count < 1:
            raise ConfigError("core_count must be >= 1")
        return self

    def with_llc_bytes(self, nbytes: int) -> "CacheConfig":
        return replace(self, llc=replace(self.llc, capacity_bytes=nbytes)).validate()


@dataclass(frozen=True)
class CCacheConfig:
    sb_entries: int = 8
    sb_hit_latency_cycles: int = 3
    fixed_merge_overhead_cycles: int = 170
    mreg_access_cycles: int = 1
    dirty_merge: bool = True

    def validate(self) -> "CCacheConfig":
        if self.sb_entries < 1:
            raise ConfigError("sb_entries must be >= 1")
        return self


def desk_config(cores: int = 4) -> CacheConfig:
    """Scaled-down machine used by the acceptance runs (L1 8KB, LLC 256KB)."""
    return CacheConfig(
        l1=LevelConfig(8, 8 * 1024, 4),
        l2=LevelConfig(8, 32 * 1024, 10),
        llc=LevelConfig(16, 256 * 1024, 70),
        core_count=cores,
    ).validate()


# key=value config files --------------------------------------------------

_LEVEL_KEYS = {f.name for f in dataclasses.fields(LevelConfig)}
_CACHE_KEYS = {"memory_latency_cycles", "core_count", "non_memory_instruction_cycles"}
_CCACHE_KEYS = {f.name for f in dataclasses.fields(CCacheConfig)}


def _coerce(value: str):
    v = value.strip()
    if v.lower() in ("true", "yes", "on"):
        return True
    if v.lower() in ("false", "no", "off"):
        return False
    try:
        return int(v, 0)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = _coerce(value)
    return out


def load_config_file(path) -> dict:
    return parse_config_text(Path(path).read_text())


def apply_overrides(cache: CacheConfig, ccache: CCacheConfig, values: dict):
    """Apply recognised architecture keys; return (cache, ccache, leftovers)."""
    leftovers = {}
    levels = {name: getattr(cache, name) for name in LEVEL_NAMES}
    top = {}
    cc = {}
    for key, value in values.items():
        if "." in key:
            lvl, attr = key.split(".", 1)
            if lvl in levels and attr in _LEVEL_KEYS:
                levels[lvl] = replace(levels[lvl], **{attr: value})
                continue
        elif key in _CACHE_KEYS:
            top[key] = value
            continue
        elif key in _CCACHE_KEYS:
            cc[key] = value
            continue
        leftovers[key] = value
    cache = replace(cache, **levels, **top).validate()
    ccache = replace(ccache, **cc).validate()
    return cache, ccache, leftovers


def dump_config(cache: CacheConfig, ccache: CCacheConfig) -> str:
    lines = []
    for name, lvl in zip(LEVEL_NAMES, cache.levels):
        for f in dataclasses.fields(LevelConfig):
            lines.append(f"{name}.{f.name} = {getattr(lvl, f.name)}")
    for key in sorted(_CACHE_KEYS):
        lines.append(f"{key} = {getattr(cache, key)}")
    for f in dataclasses.fields(CCacheConfig):
        lines.append(f"{f.name} = {getattr(ccache, f.name)}")
    return "\n".join(lines) + "\n"
