"""On-demand privatization: c_read/c_write, the source buffer, merge registers.

A c_read/c_write miss fetches the line with no coherence action, installs
it in L1 with the CCache bit set and keeps a pristine copy in the source
buffer.  A merge locks the LLC line, stages (source, updated, memory) in
the merge registers, runs the line's merge function and writes the memory
register back to the LLC.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple, Optional

from .config import CCacheConfig, WORDS_PER_LINE
from .errors import (LineLocked, MergeFunctionOutOfBounds, MergeSlotEmpty,
                     NoMergeInFlight, NotCData, SourceBufferFull,
                     CoherentAccessToCData, WriteToReadOnlyRegister)
from .hierarchy import LineMeta, MemoryHierarchy
from . import merges

MFRF_SLOTS = 4


class MReg(IntEnum):
    SRC = merges.SRC
    UPD = merges.UPD
    MEM = merges.MEM


class CResult(NamedTuple):
    value: object
    latency: int


class MergeResult(NamedTuple):
    merged: int
    latency: int


@dataclass(frozen=True)
class MergeLatencyModel:
    fixed_merge_overhead_cycles: int = 170
    mreg_access_cycles: int = 1


class MergeRegisters:
    """Three line-sized registers; src/upd are read-only to the merge function."""

    def __init__(self):
        self.regs: list = [None, None, None]
        self.active = False
        self.line: Optional[int] = None
        self.accesses = 0
        self.alu_cycles = 0

    def stage(self, line, src, upd, mem) -> None:
        self.regs = [tuple(src), tuple(upd), list(mem)]
        self.line = line
        self.active = True
        self.accesses = 0
        self.alu_cycles = 0

    def clear(self) -> None:
        self.regs = [None, None, None]
        self.active = False
        self.line = None

    def rd_mreg(self, reg, i: int):
        if not self.active:
            raise NoMergeInFlight("rd_mreg outside a merge")
        self.accesses += 1
        return self.regs[reg][i]

    def wr_mreg(self, reg, value, i: int) -> None:
        if not self.active:
            raise NoMergeInFlight("wr_mreg outside a merge")
        if reg != MReg.MEM:
            raise WriteToReadOnlyRegister(f"merge register {MReg(reg).name} is read-only")
        self.accesses += 1
        self.regs[MReg.MEM][i] = value

    def rd_line(self, reg) -> tuple:
        """All eight words of a register; costs eight register accesses."""
        if not self.active:
            raise NoMergeInFlight("rd_mreg outside a merge")
        self.accesses += WORDS_PER_LINE
        return tuple(self.regs[reg])

    def wr_line(self, reg, values) -> None:
        """Overwrite the memory register; costs one access per word written."""
        if not self.active:
            raise NoMergeInFlight("wr_mreg outside a merge")
        if reg != MReg.MEM:
            raise WriteToReadOnlyRegister(f"merge register {MReg(reg).name} is read-only")
        values = list(values)
        self.accesses += len(values)
        self.regs[MReg.MEM][:len(values)] = values

    def alu(self, n: int = 1) -> None:
        self.alu_cycles += n

    @property
    def mem(self) -> list:
        return self.regs[MReg.MEM]


class SourceBuffer:
    """Fully associative store of pre-update line copies.

    ``entries`` is kept in LRU order (flush candidates); ``lines()`` reports
    insertion order, which is the order a hard merge walks the buffer.
    """

    def __init__(self, capacity: int = 8, hit_latency_cycles: int = 3):
        self.capacity = capacity
        self.hit_latency_cycles = hit_latency_cycles
        self.entries: "OrderedDict[int, tuple]" = OrderedDict()
        self.seq: dict[int, int] = {}
        self._next = 0

    def __contains__(self, line) -> bool:
        return line in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def full(self) -> bool:
        return len(self.entries) >= self.capacity

    def get(self, line) -> Optional[tuple]:
        return self.entries.get(line)

    def insert(self, line, data) -> None:
        assert line not in self.entries and len(self.entries) < self.capacity
        self.entries[line] = tuple(data)
        self.seq[line] = self._next
        self._next += 1

    def touch(self, line) -> None:
        self.entries.move_to_end(line)

    def invalidate(self, line) -> None:
        del self.entries[line]
        del self.seq[line]

    def lines(self) -> list:
        return sorted(self.entries, key=self.seq.__getitem__)


class Mfrf:
    def __init__(self):
        self.slots: list = [None] * MFRF_SLOTS

    def get(self, slot):
        fn = self.slots[slot]
        if fn is None:
            raise MergeSlotEmpty(f"MFRF slot {slot} is empty")
        return fn


class CCacheUnit:
    """Per-core CCache state."""

    def __init__(self, core: int, cfg: CCacheConfig):
        self.core = core
        self.sb = SourceBuffer(cfg.sb_entries, cfg.sb_hit_latency_cycles)
        self.mfrf = Mfrf()
        self.regs = MergeRegisters()
        self.staged_extra = 0


class CCacheController:
    """The seven CCache primitives over a shared MemoryHierarchy."""

    def __init__(self, hierarchy: MemoryHierarchy, cfg: Optional[CCacheConfig] = None):
        self.h = hierarchy
        self.cfg = (cfg or CCacheConfig()).validate()
        self.latency = MergeLatencyModel(self.cfg.fixed_merge_overhead_cycles,
                                         self.cfg.mreg_access_cycles)
        self.units = [CCacheUnit(c, self.cfg) for c in range(hierarchy.cores)]
        self.counters = hierarchy.counters
        self.hit_latency = max(hierarchy.l1_lat, self.cfg.sb_hit_latency_cycles)
        hierarchy.merge_on_evict = self.on_evict_mergeable

    # ------------------------------------------------------------ registration
    def merge_init(self, core: int, fn, slot: int) -> None:
        if not 0 <= slot < MFRF_SLOTS:
            raise MergeSlotEmpty(f"MFRF slot {slot} out of range")
        self.units[core].mfrf.slots[slot] = merges.resolve(fn)

    # ----------------------------------------------------------------- COps
    def c_read(self, core: int, addr: int, slot: int) -> CResult:
        return self._c_access(core, addr, slot, False, None)

    def c_write(self, core: int, addr: int, value, slot: int) -> int:
        return self._c_access(core, addr, slot, True, value).latency

    def _c_access(self, core, addr, slot, write, value) -> CResult:
        h = self.h
        if h.merge_guard[core]:
            raise MergeFunctionOutOfBounds(f"core {core} issued a COp inside a merge function")
        unit = self.units[core]
        if not 0 <= slot < MFRF_SLOTS or unit.mfrf.slots[slot] is None:
            raise MergeSlotEmpty(f"MFRF slot {slot} is empty")
        line = addr >> 6
        w = (addr >> 3) & 7
        if line not in h.cdata_lines:
            raise NotCData(f"core {core}: COp to non-CData line {line:#x}")
        ctr = self.counters
        l1 = h.l1[core]
        sb = unit.sb
        m = l1.lookup(line)
        if m is not None:
            if not m.ccache_bit:
                raise CoherentAccessToCData(f"line {line:#x} cached coherently")
            l1.sets[line & l1.mask].move_to_end(line)
            sb.entries.move_to_end(line)
            ctr.l1_hits += 1
            m.mergeable_bit = False
            m.merge_type = slot
            if write:
                m.data[w] = value
                m.dirty = True
                return CResult(None, self.hit_latency)
            return CResult(m.data[w], self.hit_latency)

        # miss: every check that can refuse the access happens before any mutation
        holder = h.llc_locks.get(line)
        if holder is not None and holder != core:
            raise LineLocked(line, holder)
        victim = h._l1_victim_checked(core, line)
        flush = None
        if sb.full() and not (victim is not None and victim.ccache_bit):
            flush = self._sb_flush_candidate(core)
        if h.l2[core].lookup(line) is not None:
            raise CoherentAccessToCData(f"line {line:#x} cached coherently in L2")
        ctr.l1_misses += 1
        ctr.l2_misses += 1
        lat = h.l1_lat + h.l2_lat + h.llc_lat
        lat += h._evict_l1(core, victim)
        if flush is not None:
            lat += self.merge_line(core, flush)
        data, extra = h.llc_read_line(line)
        lat += extra
        meta = LineMeta(line, data, ccache_bit=True, merge_type=slot)
        l1.insert(meta)
        sb.insert(line, data)
        if write:
            meta.data[w] = value
            meta.dirty = True
            return CResult(None, lat)
        return CResult(meta.data[w], lat)

    def _sb_flush_candidate(self, core: int) -> int:
        """LRU source-buffer entry whose line is mergeable, else SourceBufferFull."""
        h = self.h
        l1 = h.l1[core]
        for line in self.units[core].sb.entries:
            if l1.lookup(line).mergeable_bit:
                holder = h.llc_locks.get(line)
                if holder is not None and holder != core:
                    raise LineLocked(line, holder)
                return line
        raise SourceBufferFull(f"core {core}: source buffer full of non-mergeable lines")

    # ------------------------------------------------------- merge registers
    def rd_mreg(self, core: int, reg, i: int):
        return self.units[core].regs.rd_mreg(reg, i)

    def wr_mreg(self, core: int, reg, value, i: int) -> None:
        self.units[core].regs.wr_mreg(reg, value, i)

    # ---------------------------------------------------------------- merges
    def soft_merge(self, core: int) -> int:
        l1 = self.h.l1[core]
        for line in self.units[core].sb.entries:
            l1.lookup(line).mergeable_bit = True
        return self.h.cfg.non_memory_instruction_cycles

    def merge(self, core: int) -> MergeResult:
        """Hard merge of every valid source-buffer entry, then flash clear."""
        before = self.counters.merges_executed
        lat = 0
        for line in self.units[core].sb.lines():
            lat += self.merge_line(core, line)
        return MergeResult(self.counters.merges_executed - before, lat)

    def merge_line(self, core: int, line: int) -> int:
        status, lat = self.merge_begin(core, line)
        if status == "done":
            return lat
        if status == "blocked":
            raise LineLocked(line, self.h.llc_locks.get(line))
        return lat + self.merge_finish(core)

    def merge_begin(self, core: int, line: int):
        """First half of a line merge: lock the LLC line and stage registers.

        Returns ("done", latency) when the clean-line shortcut applies,
        ("blocked", 0) when another core holds the LLC line, or
        ("staged", 0) with the registers populated and the lock held.
        """
        h = self.h
        unit = self.units[core]
        meta = h.l1[core].lookup(line)
        src = unit.sb.get(line)
        assert meta is not None and meta.ccache_bit and src is not None, \
            f"core {core}: no privatized copy of {line:#x}"
        if unit.regs.active:
            raise MergeFunctionOutOfBounds(f"core {core}: merge already in flight")
        if not meta.dirty and self.cfg.dirty_merge:
            self._retire(core, line)
            self.counters.merges_skipped_clean += 1
            self.counters.source_buffer_evictions += 1
            return "done", 0
        acquired, extra = h.lock_llc_line(core, line)
        if not acquired:
            return "blocked", 0
        unit.regs.stage(line, src, meta.data, h.llc.lookup(line).data)
        unit.staged_extra = extra
        return "staged", 0

    def merge_finish(self, core: int) -> int:
        """Second half: run the function, write back, retire the entry, unlock."""
        h = self.h
        unit = self.units[core]
        regs = unit.regs
        line = regs.line
        meta = h.l1[core].lookup(line)
        fn = unit.mfrf.get(meta.merge_type)
        h.merge_guard[core] = True
        try:
            fn.run(regs)
        finally:
            h.merge_guard[core] = False
        result = regs.mem
        if len(result) != WORDS_PER_LINE:
            raise MergeFunctionOutOfBounds(f"{fn.name} resized the memory register")
        h.llc_write_line(line, result)
        cost = regs.accesses * self.latency.mreg_access_cycles + regs.alu_cycles
        regs.clear()
        self._retire(core, line)
        h.unlock_llc_line(core, line)
        self.counters.merges_executed += 1
        self.counters.source_buffer_evictions += 1
        extra, unit.staged_extra = unit.staged_extra, 0
        return extra + cost + self.latency.fixed_merge_overhead_cycles

    def _retire(self, core: int, line: int) -> None:
        self.units[core].sb.invalidate(line)
        meta = self.h.l1[core].remove(line)
        meta.ccache_bit = False
        meta.mergeable_bit = False

    def on_evict_mergeable(self, core: int, line: int) -> int:
        """L1 chose a mergeable CData line as victim: merge it, freeing the way."""
        return self.merge_line(core, line)

    # ------------------------------------------------------------ invariants
    def check_invariants(self, core: int) -> None:
        l1 = self.h.l1[core]
        privatized = {m.tag for m in l1.lines() if m.ccache_bit}
        buffered = set(self.units[core].sb.entries)
        if privatized != buffered:
            raise AssertionError(f"core {core}: L1 CData {sorted(privatized)} != "
                                 f"source buffer {sorted(buffered)}")
        for m in l1.lines():
            if m.mergeable_bit and not m.ccache_bit:
                raise AssertionError(f"core {core}: mergeable bit without CCache bit")
