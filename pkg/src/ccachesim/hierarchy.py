"""Three-level cache hierarchy with a full-map MESI directory.

Private L1/L2 per core and a shared LLC; non-inclusive, writeback,
write-allocate, strict LRU everywhere.  Every level stores real line
contents so loads observe values and merges operate on data.

Latency is additive: a request pays the hit latency of every level it
probes, plus memory latency on a full miss.  Directory traffic is folded
into the LLC latency and only counted.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

from .config import CacheConfig, LevelConfig, WORDS_PER_LINE
from .errors import (CoherentAccessToCData, LineLocked, MergeFunctionOutOfBounds,
                     SetPinned, SimulationError, UnlockWithoutLock)
from .metrics import Counters

LOAD = "load"
STORE = "store"

L1, L2, LLC, MEMORY = "L1", "L2", "LLC", "Memory"

M, E, S, I = "M", "E", "S", "I"


def line_of(addr: int) -> int:
    return addr >> 6


def word_of(addr: int) -> int:
    return (addr >> 3) & 7


class LineMeta:
    """Per-line metadata plus the 64-byte contents (eight words)."""

    __slots__ = ("tag", "data", "mesi_state", "dirty", "ccache_bit",
                 "mergeable_bit", "merge_type")

    def __init__(self, tag, data, mesi_state=I, dirty=False, ccache_bit=False,
                 mergeable_bit=False, merge_type=0):
        self.tag = tag
        self.data = data
        self.mesi_state = mesi_state
        self.dirty = dirty
        self.ccache_bit = ccache_bit
        self.mergeable_bit = mergeable_bit
        self.merge_type = merge_type

    @property
    def pinned(self) -> bool:
        return self.ccache_bit and not self.mergeable_bit

    def __repr__(self):
        flags = "".join(f for f, on in (("D", self.dirty), ("C", self.ccache_bit),
                                         ("m", self.mergeable_bit)) if on)
        return f"LineMeta({self.tag:#x}, {self.mesi_state}, {flags or '-'})"


class Cache:
    """Set-associative tag/data store; each set is an LRU-ordered dict."""

    def __init__(self, name: str, cfg: LevelConfig):
        self.name = name
        self.cfg = cfg
        self.ways = cfg.ways
        self.nsets = cfg.sets
        self.mask = self.nsets - 1
        self.sets = [OrderedDict() for _ in range(self.nsets)]

    def set_index(self, line: int) -> int:
        return line & self.mask

    def lookup(self, line: int) -> Optional[LineMeta]:
        return self.sets[line & self.mask].get(line)

    def touch(self, line: int) -> None:
        self.sets[line & self.mask].move_to_end(line)

    def is_full(self, line: int) -> bool:
        return len(self.sets[line & self.mask]) >= self.ways

    def insert(self, meta: LineMeta) -> None:
        s = self.sets[meta.tag & self.mask]
        assert len(s) < self.ways, f"{self.name}: insert into full set"
        s[meta.tag] = meta

    def remove(self, line: int) -> Optional[LineMeta]:
        return self.sets[line & self.mask].pop(line, None)

    def lru_rank(self, line: int) -> int:
        """0 for the least recently used line of its set."""
        return list(self.sets[line & self.mask]).index(line)

    def lines(self):
        for s in self.sets:
            yield from s.values()

    def __contains__(self, line):
        return line in self.sets[line & self.mask]


@dataclass
class DirectoryEntry:
    line: int
    sharers: set = field(default_factory=set)
    owner: Optional[int] = None

    @property
    def state(self) -> str:
        if self.owner is not None:
            return "Exclusive"
        return "Shared" if self.sharers else "Uncached"


class AccessResult(NamedTuple):
    latency: int
    level_hit: str
    value: object = None


class MemoryHierarchy:
    def __init__(self, cfg: CacheConfig, counters: Optional[Counters] = None):
        cfg.validate()
        self.cfg = cfg
        self.cores = cfg.core_count
        self.counters = counters if counters is not None else Counters()
        self.l1 = [Cache(f"L1[{c}]", cfg.l1) for c in range(self.cores)]
        self.l2 = [Cache(f"L2[{c}]", cfg.l2) for c in range(self.cores)]
        self.llc = Cache("LLC", cfg.llc)
        self.memory: dict[int, list] = {}
        self.directory: dict[int, DirectoryEntry] = {}
        self.llc_locks: dict[int, int] = {}
        self.cdata_lines: set[int] = set()
        self.merge_guard = [False] * self.cores
        self.l1_lat = cfg.l1.hit_latency_cycles
        self.l2_lat = cfg.l2.hit_latency_cycles
        self.llc_lat = cfg.llc.hit_latency_cycles
        self.mem_lat = cfg.memory_latency_cycles
        # merge-on-evict handler installed by the CCache controller:
        # (core, line) -> latency
        self.merge_on_evict: Optional[Callable[[int, int], int]] = None
        # optional observer (level, core, meta) for every eviction
        self.eviction_observer: Optional[Callable] = None

    # ------------------------------------------------------------------ setup
    def declare_cdata(self, first_line: int, nlines: int) -> None:
        self.cdata_lines.update(range(first_line, first_line + nlines))

    def poke_line(self, line: int, data) -> None:
        """Initialise backing memory before the line is ever cached."""
        assert len(data) == WORDS_PER_LINE
        self.memory[line] = list(data)

    # ---------------------------------------------------------- accounting
    def _msg(self, line: int, n: int = 1) -> None:
        self.counters.directory_messages += n
        if line in self.cdata_lines:
            self.counters.cdata_directory_messages += n

    def _count_inval(self, line: int) -> None:
        self.counters.invalidation_messages += 1
        if line in self.cdata_lines:
            self.counters.cdata_invalidation_messages += 1

    # ------------------------------------------------------------ coherent path
    def access(self, core: int, addr: int, kind: str, value=None) -> AccessResult:
        """Coherent Load/Store of the 8-byte word at ``addr``."""
        return AccessResult(*self._access(core, addr, kind == STORE, value))

    def _access(self, core: int, addr: int, store: bool, value=None) -> tuple:
        # hot path; returns (latency, level_hit, value)
        line = addr >> 6
        if self.merge_guard[core]:
            raise MergeFunctionOutOfBounds(f"core {core} issued a memory op inside a merge function")
        if line in self.cdata_lines:
            raise CoherentAccessToCData(f"core {core}: coherent access to CData line {line:#x}")
        ctr = self.counters
        l1 = self.l1[core]
        s1 = l1.sets[line & l1.mask]
        m = s1.get(line)
        if m is not None:
            if m.ccache_bit:
                raise CoherentAccessToCData(f"core {core}: coherent access to privatized line {line:#x}")
            s1.move_to_end(line)
            ctr.l1_hits += 1
            if store:
                lat = self.l1_lat
                st = m.mesi_state
                if st == S:
                    lat += self._upgrade(core, line)
                elif st != M:
                    m.mesi_state = M
                    m2 = self.l2[core].lookup(line)
                    if m2 is not None:
                        m2.mesi_state = M
                m.dirty = True
                m.data[(addr >> 3) & 7] = value
                return lat, L1, None
            return self.l1_lat, L1, m.data[(addr >> 3) & 7]

        victim = self._l1_victim_checked(core, line)
        ctr.l1_misses += 1
        lat = self.l1_lat + self.l2_lat
        l2 = self.l2[core]
        m2 = l2.lookup(line)
        if m2 is not None:
            ctr.l2_hits += 1
            l2.touch(line)
            level = L2
            state = m2.mesi_state
            if store:
                if state == S:
                    lat += self._upgrade(core, line)
                state = M
                m2.mesi_state = M
            data = list(m2.data)
            dirty = m2.dirty
        else:
            ctr.l2_misses += 1
            lat += self.llc_lat
            data, state, extra, level = self._fetch_coherent(core, line, store)
            lat += extra
            dirty = False
            lat += self._l2_fill(core, LineMeta(line, list(data), state, False))
        meta = LineMeta(line, data, state, dirty)
        lat += self._evict_l1(core, victim)
        l1.insert(meta)
        w = (addr >> 3) & 7
        if store:
            meta.dirty = True
            data[w] = value
            return lat, level, None
        return lat, level, data[w]

    def _set_private_state(self, core: int, line: int, state: str) -> None:
        m = self.l1[core].lookup(line)
        if m is not None:
            m.mesi_state = state
        m = self.l2[core].lookup(line)
        if m is not None:
            m.mesi_state = state

    def _dir_entry(self, line: int) -> DirectoryEntry:
        d = self.directory.get(line)
        if d is None:
            d = self.directory[line] = DirectoryEntry(line)
        return d

    def _upgrade(self, core: int, line: int) -> int:
        """S -> M: ask the directory to invalidate every other sharer."""
        self._msg(line)
        d = self._dir_entry(line)
        for other in sorted(d.sharers):
            if other != core:
                self._msg(line)
                self._count_inval(line)
                self._invalidate_private(other, line)
        d.sharers = {core}
        d.owner = core
        self._set_private_state(core, line, M)
        return self.llc_lat

    def _fetch_coherent(self, core: int, line: int, store: bool):
        """Private miss: directory transaction then data from the LLC/memory."""
        self._msg(line)
        d = self._dir_entry(line)
        owner = d.owner
        if owner is not None and owner != core:
            self._msg(line)  # forwarded to the owner
            if store:
                self._count_inval(line)
                self._invalidate_private(owner, line)
                d.sharers.discard(owner)
            else:
                self._downgrade_owner(owner, line)
            d.owner = None
        if store:
            for other in sorted(d.sharers):
                if other != core:
                    self._msg(line)
                    self._count_inval(line)
                    self._invalidate_private(other, line)
            d.sharers = {core}
            d.owner = core
            state = M
        else:
            others = d.sharers - {core}
            d.sharers.add(core)
            if others:
                state = S
            else:
                state = E
                d.owner = core
        meta, extra = self._llc_get(line)
        level = LLC if extra == 0 else MEMORY
        return list(meta.data), state, extra, level

    def _downgrade_owner(self, owner: int, line: int) -> None:
        m1 = self.l1[owner].lookup(line)
        m2 = self.l2[owner].lookup(line)
        src = m1 if m1 is not None else m2
        if src is not None and src.dirty:
            self._llc_write(line, src.data)
        if m1 is not None and m2 is not None:
            m2.data = list(m1.data)
        for m in (m1, m2):
            if m is not None:
                m.mesi_state = S
                m.dirty = False

    def _invalidate_private(self, core: int, line: int) -> None:
        m1 = self.l1[core].remove(line)
        m2 = self.l2[core].remove(line)
        assert m1 is None or not m1.ccache_bit
        if m1 is not None and m1.dirty:
            self._llc_write(line, m1.data)
        elif m2 is not None and m2.dirty:
            self._llc_write(line, m2.data)

    # --------------------------------------------------------------- victims
    def select_victim(self, core: int, level: str, set_index: int) -> Optional[LineMeta]:
        """LRU evictable line of a full set, or None when a way is free.

        L1: CData lines that are not mergeable are pinned.  LLC: lines locked
        by an in-flight merge are skipped.
        """
        if level == L1:
            cache = self.l1[core]
            s = cache.sets[set_index]
            if len(s) < cache.ways:
                return None
            for meta in s.values():
                if not (meta.ccache_bit and not meta.mergeable_bit):
                    return meta
            raise SetPinned(core, set_index)
        if level == L2:
            s = self.l2[core].sets[set_index]
            if len(s) < self.l2[core].ways:
                return None
            return next(iter(s.values()))
        s = self.llc.sets[set_index]
        if len(s) < self.llc.ways:
            return None
        for meta in s.values():
            if meta.tag not in self.llc_locks:
                return meta
        raise SimulationError(f"LLC set {set_index}: every line is locked")

    def _l1_victim_checked(self, core: int, line: int) -> Optional[LineMeta]:
        """Pick the L1 victim for a fill without mutating anything."""
        l1 = self.l1[core]
        victim = self.select_victim(core, L1, line & l1.mask)
        if victim is not None and victim.ccache_bit:
            holder = self.llc_locks.get(victim.tag)
            if holder is not None and holder != core:
                raise LineLocked(victim.tag, holder)
        return victim

    def _evict_l1(self, core: int, victim: Optional[LineMeta]) -> int:
        if victim is None:
            return 0
        if self.eviction_observer is not None:
            self.eviction_observer(L1, core, victim)
        if victim.ccache_bit:
            assert victim.mergeable_bit, "pinned CData line chosen as victim"
            return self.merge_on_evict(core, victim.tag)
        self.l1[core].remove(victim.tag)
        l2 = self.l2[core]
        m2 = l2.lookup(victim.tag)
        if m2 is not None:
            # the L1 copy is always at least as new as the L2 copy
            m2.data = victim.data
            m2.dirty = m2.dirty or victim.dirty
            m2.mesi_state = victim.mesi_state
            return 0
        return self._l2_fill(core, victim)

    def _l2_fill(self, core: int, meta: LineMeta) -> int:
        l2 = self.l2[core]
        victim = self.select_victim(core, L2, meta.tag & l2.mask)
        if victim is not None:
            if self.eviction_observer is not None:
                self.eviction_observer(L2, core, victim)
            l2.remove(victim.tag)
            if victim.tag not in self.l1[core]:
                self._leave_private(core, victim)
        l2.insert(meta)
        return 0

    def _leave_private(self, core: int, meta: LineMeta) -> None:
        """The line is gone from both private levels: notify the directory."""
        line = meta.tag
        self._msg(line)
        if meta.dirty:
            self._llc_write(line, meta.data)
        d = self.directory.get(line)
        if d is not None:
            d.sharers.discard(core)
            if d.owner == core:
                d.owner = None
            if not d.sharers:
                del self.directory[line]

    # ------------------------------------------------------------------- LLC
    def _llc_get(self, line: int):
        """LLC meta for ``line`` (filled from memory on a miss) and extra latency."""
        llc = self.llc
        meta = llc.lookup(line)
        if meta is not None:
            self.counters.llc_hits += 1
            llc.touch(line)
            return meta, 0
        self.counters.llc_misses += 1
        data = self.memory.get(line)
        meta = LineMeta(line, list(data) if data is not None else [0] * WORDS_PER_LINE)
        self._llc_insert(meta)
        return meta, self.mem_lat

    def _llc_insert(self, meta: LineMeta) -> None:
        victim = self.select_victim(0, LLC, meta.tag & self.llc.mask)
        if victim is not None:
            if self.eviction_observer is not None:
                self.eviction_observer(LLC, None, victim)
            self.llc.remove(victim.tag)
            if victim.dirty:
                self.memory[victim.tag] = victim.data
                self.counters.memory_writebacks += 1
        self.llc.insert(meta)

    def _llc_write(self, line: int, data) -> None:
        meta = self.llc.lookup(line)
        if meta is None:
            self._llc_insert(LineMeta(line, list(data), dirty=True))
        else:
            meta.data = list(data)
            meta.dirty = True
            self.llc.touch(line)

    def llc_read_line(self, line: int):
        """Non-coherent LLC read used by CData fetches and merges."""
        meta, extra = self._llc_get(line)
        return list(meta.data), extra

    def llc_write_line(self, line: int, data) -> None:
        self._llc_write(line, data)

    # ----------------------------------------------------------- LLC locks
    def lock_llc_line(self, core: int, line: int) -> tuple[bool, int]:
        """Try to lock ``line`` in the LLC for a merge; returns (acquired, latency)."""
        holder = self.llc_locks.get(line)
        if holder is not None and holder != core:
            self.counters.lock_conflicts += 1
            return False, 0
        extra = 0
        if self.llc.lookup(line) is None:
            _, extra = self._llc_get(line)
        self.llc_locks[line] = core
        return True, extra

    def unlock_llc_line(self, core: int, line: int) -> None:
        if self.llc_locks.get(line) != core:
            raise UnlockWithoutLock(f"core {core} does not hold LLC line {line:#x}")
        del self.llc_locks[line]

    # ------------------------------------------------------------ inspection
    def peek_line(self, line: int) -> list:
        """Current globally visible value of a line (no side effects)."""
        d = self.directory.get(line)
        if d is not None and d.owner is not None:
            m = self.l1[d.owner].lookup(line) or self.l2[d.owner].lookup(line)
            if m is not None:
                return list(m.data)
        meta = self.llc.lookup(line)
        if meta is not None:
            return list(meta.data)
        data = self.memory.get(line)
        return list(data) if data is not None else [0] * WORDS_PER_LINE

    def peek_word(self, addr: int):
        return self.peek_line(addr >> 6)[(addr >> 3) & 7]

    def private_state(self, core: int, line: int) -> str:
        m = self.l1[core].lookup(line) or self.l2[core].lookup(line)
        return m.mesi_state if m is not None and not m.ccache_bit else I

    def check_swmr(self) -> None:
        """Assert single-writer/multiple-reader over every coherent line."""
        states: dict[int, dict[int, str]] = {}
        for c in range(self.cores):
            for cache in (self.l1[c], self.l2[c]):
                for m in cache.lines():
                    if m.ccache_bit:
                        continue
                    prev = states.setdefault(m.tag, {}).get(c)
                    if prev is not None and prev != m.mesi_state:
                        raise AssertionError(f"core {c} L1/L2 disagree on {m.tag:#x}")
                    states[m.tag][c] = m.mesi_state
        for line, per_core in states.items():
            writers = [c for c, st in per_core.items() if st in (M, E)]
            if len(writers) > 1 or (writers and len(per_core) > 1):
                raise AssertionError(f"SWMR violated on line {line:#x}: {per_core}")
            d = self.directory.get(line)
            if d is None or set(per_core) - d.sharers:
                raise AssertionError(f"directory out of sync on line {line:#x}")
            if line in self.cdata_lines:
                raise AssertionError(f"CData line {line:#x} held coherently")
