"""A simulated machine: hierarchy, CCache controller and a region allocator."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .ccache import CCacheController
from .config import CacheConfig, CCacheConfig, LINE_BYTES, WORDS_PER_LINE
from .hierarchy import MemoryHierarchy
from .metrics import Counters


@dataclass(frozen=True)
class Region:
    name: str
    base: int
    nbytes: int
    cdata: bool = False

    @property
    def first_line(self) -> int:
        return self.base >> 6

    @property
    def nlines(self) -> int:
        return self.nbytes // LINE_BYTES

    def addr(self, word_index: int) -> int:
        return self.base + 8 * word_index

    def line_addr(self, line_index: int) -> int:
        return self.base + LINE_BYTES * line_index


class Allocator:
    """Line-aligned, padded bump allocator that tracks logical footprint."""

    def __init__(self, hierarchy: MemoryHierarchy, base: int = 1 << 20):
        self.h = hierarchy
        self.next = base
        self.regions: dict[str, Region] = {}
        self.live_bytes = 0
        self.peak_bytes = 0

    def alloc(self, name: str, nbytes: int, cdata: bool = False, init=None) -> Region:
        """Reserve ``nbytes`` rounded up to whole lines; CData regions are declared
        to the hierarchy so plain loads and stores to them fault."""
        assert name not in self.regions, name
        padded = -(-max(nbytes, 8) // LINE_BYTES) * LINE_BYTES
        region = Region(name, self.next, padded, cdata)
        self.next += padded
        self.regions[name] = region
        self.account(padded)
        if cdata:
            self.h.declare_cdata(region.first_line, region.nlines)
        if init is not None:
            self.fill(region, init)
        return region

    def fill(self, region: Region, values) -> None:
        """Write initial contents straight into backing memory (not simulated)."""
        values = list(values)
        pad = 0.0 if values and isinstance(values[0], float) else 0
        for i in range(region.nlines):
            chunk = values[i * WORDS_PER_LINE:(i + 1) * WORDS_PER_LINE]
            if not chunk:
                chunk = []
            chunk = chunk + [pad] * (WORDS_PER_LINE - len(chunk))
            self.h.poke_line(region.first_line + i, chunk)

    def account(self, delta: int) -> None:
        self.live_bytes += delta
        self.peak_bytes = max(self.peak_bytes, self.live_bytes)

    def free(self, region: Region) -> None:
        del self.regions[region.name]
        self.account(-region.nbytes)


class Machine:
    def __init__(self, cache: CacheConfig, ccache: Optional[CCacheConfig] = None):
        self.cache_cfg = cache.validate()
        self.ccache_cfg = (ccache or CCacheConfig()).validate()
        self.counters = Counters()
        self.hierarchy = MemoryHierarchy(self.cache_cfg, self.counters)
        self.ccache = CCacheController(self.hierarchy, self.ccache_cfg)
        self.alloc = Allocator(self.hierarchy)

    @property
    def cores(self) -> int:
        return self.cache_cfg.core_count

    def read_region(self, region: Region, count: int) -> list:
        out = []
        for i in range(-(-count // WORDS_PER_LINE)):
            out.extend(self.hierarchy.peek_line(region.first_line + i))
        return out[:count]
