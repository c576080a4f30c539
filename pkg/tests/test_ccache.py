import random

import pytest
from hypothesis import given, strategies as st

from ccachesim.ccache import CCacheController, MReg
from ccachesim.config import CCacheConfig, desk_config
from ccachesim.errors import (MergeSlotEmpty, NoMergeInFlight, NotCData, SetPinned,
                              SourceBufferFull, UnknownMergeFunction, WriteToReadOnlyRegister)
from ccachesim.hierarchy import LOAD, MemoryHierarchy
from ccachesim.merges import AddDiff, MinMerge, OrMerge

from conftest import tiny_config

CDATA = 1000   # first CData line used by these tests


def make(cores=2, cfg=None, ccfg=None, nlines=4096):
    h = MemoryHierarchy(cfg or desk_config(cores))
    cc = CCacheController(h, ccfg)
    h.declare_cdata(CDATA, nlines)
    for c in range(h.cores):
        cc.merge_init(c, "add_diff", 0)
    return h, cc


def a(line, word=0):
    return (CDATA + line) * 64 + word * 8


def test_merge_init_examples():
    h, cc = make()
    assert isinstance(cc.units[0].mfrf.get(0), AddDiff)
    cc.merge_init(0, "or_merge", 1)
    cc.merge_init(0, "min_merge", 1)
    assert isinstance(cc.units[0].mfrf.get(1), MinMerge)
    with pytest.raises(UnknownMergeFunction):
        cc.merge_init(0, "bogus_id", 2)
    with pytest.raises(MergeSlotEmpty):
        cc.c_read(0, a(0), 3)


def test_c_read_miss_then_hit():
    h, cc = make()
    h.poke_line(CDATA, [5, 6, 7, 8, 9, 10, 11, 12])
    h._llc_get(CDATA)                      # make the line LLC-resident
    msgs = h.counters.directory_messages
    r = cc.c_read(0, a(0, 2), 0)
    assert (r.value, r.latency) == (7, 84)
    meta = h.l1[0].lookup(CDATA)
    assert meta.ccache_bit and not meta.mergeable_bit and meta.merge_type == 0
    assert cc.units[0].sb.get(CDATA) == (5, 6, 7, 8, 9, 10, 11, 12)
    r = cc.c_read(0, a(0, 2), 0)
    assert (r.value, r.latency) == (7, 4)
    assert len(cc.units[0].sb) == 1
    assert h.counters.directory_messages == msgs


def test_c_read_clears_mergeable():
    h, cc = make()
    cc.c_read(0, a(0), 0)
    cc.soft_merge(0)
    assert h.l1[0].lookup(CDATA).mergeable_bit
    cc.c_read(0, a(0), 0)
    assert not h.l1[0].lookup(CDATA).mergeable_bit


def test_c_write_miss_from_memory_keeps_pre_write_source():
    h, cc = make()
    h.poke_line(CDATA, [1] * 8)
    lat = cc.c_write(0, a(0), 99, 0)
    assert lat == 4 + 10 + 70 + 300
    assert cc.units[0].sb.get(CDATA)[0] == 1
    meta = h.l1[0].lookup(CDATA)
    assert meta.data[0] == 99 and meta.dirty
    assert cc.c_write(0, a(0), 100, 0) == 4


def test_two_cores_write_privately_without_directory():
    h, cc = make()
    cc.c_write(0, a(0), 3, 0)
    cc.c_write(1, a(0), 4, 0)
    assert h.l1[0].lookup(CDATA).data[0] == 3
    assert h.l1[1].lookup(CDATA).data[0] == 4
    assert CDATA not in h.directory
    assert h.counters.directory_messages == 0
    assert h.counters.invalidation_messages == 0


def test_merge_registers():
    h, cc = make()
    regs = cc.units[0].regs
    with pytest.raises(NoMergeInFlight):
        regs.rd_mreg(MReg.SRC, 0)
    regs.stage(CDATA, [5] + [0] * 7, [0] * 8, [0] * 8)
    assert regs.rd_mreg(MReg.SRC, 0) == 5
    regs.wr_mreg(MReg.MEM, 11, 0)
    assert regs.rd_mreg(MReg.MEM, 0) == 11
    with pytest.raises(WriteToReadOnlyRegister):
        regs.wr_mreg(MReg.SRC, 1, 0)
    with pytest.raises(WriteToReadOnlyRegister):
        regs.wr_mreg(MReg.UPD, 1, 0)
    assert regs.accesses == 3


def test_soft_merge_examples():
    h, cc = make()
    assert cc.soft_merge(0) == 1          # nothing privatized: no-op
    for k in range(3):
        cc.c_read(0, a(k), 0)
    cc.soft_merge(0)
    assert all(h.l1[0].lookup(CDATA + k).mergeable_bit for k in range(3))
    cc.c_write(0, a(1), 9, 0)
    assert [h.l1[0].lookup(CDATA + k).mergeable_bit for k in range(3)] == [True, False, True]


def test_merge_examples():
    h, cc = make()
    assert tuple(cc.merge(0)) == (0, 0)
    cc.c_write(0, a(0), 2, 0)
    cc.c_write(0, a(1), 3, 0)
    cc.c_read(0, a(2), 0)
    res = cc.merge(0)
    assert res.merged == 2
    # per line: fixed overhead + 24 register reads + 8 writes + 8 ALU ops
    assert res.latency == 2 * (170 + 24 + 8 + 8)
    assert h.counters.merges_skipped_clean == 1
    assert len(cc.units[0].sb) == 0
    assert not any(m.ccache_bit for m in h.l1[0].lines())
    assert h.peek_word(a(0)) == 2 and h.peek_word(a(1)) == 3
    assert h.llc.lookup(CDATA).dirty


def test_merge_line_add_diff_formula():
    h, cc = make()
    h.poke_line(CDATA, [5] * 8)
    cc.c_read(0, a(0), 0)                 # src = 5
    cc.c_write(0, a(0), 9, 0)             # upd = 9
    h.llc_write_line(CDATA, [7] * 8)      # memory moved on meanwhile
    cc.merge_line(0, CDATA)
    assert h.peek_word(a(0)) == 11
    assert h.peek_line(CDATA)[1:] == [7] * 7


def test_clean_merge_takes_no_lock_and_writes_nothing():
    h, cc = make()
    cc.c_read(0, a(0), 0)
    h.lock_llc_line(1, CDATA)             # another core holds the LLC line
    assert cc.merge_line(0, CDATA) == 0
    assert h.counters.lock_conflicts == 0
    assert h.counters.merges_executed == 0


def test_clean_merge_without_dirty_optimization():
    h, cc = make(ccfg=CCacheConfig(dirty_merge=False))
    cc.c_read(0, a(0), 0)
    assert cc.merge(0).merged == 1


def test_second_merger_sees_first_result_and_blocks_while_locked():
    h, cc = make()
    cc.c_write(0, a(0), 4, 0)
    cc.c_write(1, a(0), 6, 0)
    assert cc.merge_begin(0, CDATA)[0] == "staged"
    assert cc.merge_begin(1, CDATA) == ("blocked", 0)
    assert h.counters.lock_conflicts == 1
    cc.merge_finish(0)
    assert cc.merge_begin(1, CDATA)[0] == "staged"
    assert cc.units[1].regs.regs[MReg.MEM][0] == 4
    cc.merge_finish(1)
    assert h.peek_word(a(0)) == 10


def test_merge_order_is_insertion_order():
    h, cc = make()
    cc.merge_init(0, "or_merge", 1)
    for k in (3, 1, 2):
        cc.c_write(0, a(k), 1, 0)
    cc.c_read(0, a(3), 0)                 # LRU touch must not reorder the merge walk
    assert cc.units[0].sb.lines() == [CDATA + 3, CDATA + 1, CDATA + 2]


def test_evict_mergeable_clean_line_counts_eviction():
    cfg = tiny_config(cores=1)
    h, cc = make(cfg=cfg)
    nsets = cfg.l1.sets
    lines = [k * nsets for k in range(8)]
    for line in lines:
        cc.c_read(0, a(line), 0)
    cc.soft_merge(0)
    # allocate one more CData line in the same set: evicts the LRU mergeable line
    cc.c_read(0, a(8 * nsets), 0)
    assert h.counters.source_buffer_evictions >= 1
    assert h.counters.merges_executed == 0
    assert h.l1[0].lookup(CDATA + lines[0]) is None


def test_non_mergeable_never_evicted_set_pinned():
    cfg = tiny_config(cores=1)
    h, cc = make(cfg=cfg, ccfg=CCacheConfig(sb_entries=16))
    nsets = cfg.l1.sets
    for k in range(8):
        cc.c_write(0, a(k * nsets), 1, 0)
    with pytest.raises(SetPinned):
        cc.c_read(0, a(8 * nsets), 0)
    # failed access left every structure untouched
    cc.check_invariants(0)
    assert len(cc.units[0].sb) == 8


def test_source_buffer_full():
    h, cc = make(ccfg=CCacheConfig(sb_entries=2))
    cc.c_write(0, a(0), 1, 0)
    cc.c_write(0, a(1), 1, 0)
    with pytest.raises(SourceBufferFull):
        cc.c_write(0, a(2), 1, 0)
    cc.soft_merge(0)
    cc.c_write(0, a(2), 1, 0)             # flushes the LRU mergeable entry
    assert h.counters.merges_executed == 1
    cc.check_invariants(0)


def test_not_cdata():
    h, cc = make()
    with pytest.raises(NotCData):
        cc.c_read(0, 64 * 5, 0)


@given(st.lists(st.tuples(st.integers(0, 1), st.sampled_from("rwsmx"), st.integers(0, 40),
                          st.integers(-5, 5)), max_size=120))
def test_bijection_and_zero_coherence_under_random_cops(ops):
    cfg = tiny_config(cores=2)
    h, cc = make(cfg=cfg, ccfg=CCacheConfig(sb_entries=6))
    for c in range(2):
        cc.merge_init(c, "add_diff", 0)
    touched = [set(), set()]
    totals = {}
    for core, kind, line, delta in ops:
        if kind in "rw":
            if line not in touched[core] and len(touched[core]) >= 3:
                cc.soft_merge(core)
                touched[core] = set()
            touched[core].add(line)
            v = cc.c_read(core, a(line), 0).value
            if kind == "w":
                cc.c_write(core, a(line), v + delta, 0)
                totals[line] = totals.get(line, 0) + delta
        elif kind == "s":
            cc.soft_merge(core)
            touched[core] = set()
        elif kind == "m":
            cc.merge(core)
            touched[core] = set()
        else:
            h.access(core, 64 * line, LOAD)     # plain traffic for eviction pressure
        for c in range(2):
            cc.check_invariants(c)
    for c in range(2):
        cc.merge(c)
    for line, total in totals.items():
        assert h.peek_word(a(line)) == total
    assert h.counters.cdata_directory_messages == 0
    assert h.counters.cdata_invalidation_messages == 0
    assert all(CDATA + line not in h.directory for line in range(41))
