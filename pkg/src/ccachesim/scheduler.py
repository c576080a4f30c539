"""Deterministic interleaving of per-core operation streams.

A core program is a generator that yields operation tuples and receives
the loaded value (or None) back:

    ("ld", addr)                  coherent load  -> value
    ("st", addr, value)           coherent store
    ("cr", addr, slot)            c_read         -> value
    ("cw", addr, value, slot)     c_write
    ("cpu", n)                    n non-memory instructions
    ("lock", addr) / ("unlock", addr)   test-and-test-and-set lock word
    ("soft_merge",) / ("merge",)  CCache merges
    ("merge_init", fn, slot)
    ("barrier",)

Cores take turns round-robin, one operation per turn.  Each core owns a
cycle clock; an operation's latency is charged to it.  A core that acquires
a lock or leaves a barrier has its clock advanced to the release time, so
waiting shows up as cycles even though spinning is not charged per turn.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

from .ccache import MergeResult
from .errors import DeadlockDetected, LineLocked


@dataclass
class CoreState:
    clock: int = 0
    charged: int = 0
    compute: int = 0
    waited: int = 0
    ops: int = 0
    done: bool = False
    at_barrier: bool = False
    op: Optional[tuple] = None
    merge_lines: Optional[list] = None
    merge_staged: bool = False
    merge_merged: int = 0
    merge_latency: int = 0


class Scheduler:
    def __init__(self, machine, programs):
        self.m = machine
        self.h = machine.hierarchy
        self.cc = machine.ccache
        self.cpu_cycles = machine.cache_cfg.non_memory_instruction_cycles
        self._access = machine.hierarchy._access
        self.programs: list[Iterator] = list(programs)
        self.cores = [CoreState() for _ in self.programs]
        self.lock_release: dict[int, int] = {}
        self.cursor = 0
        self.idle_steps = 0
        self.observer = None  # optional callable(scheduler, core, op) after each step
        for c in range(len(self.programs)):
            self._advance(c, None)

    # ------------------------------------------------------------ plumbing
    def _advance(self, c: int, value) -> None:
        st = self.cores[c]
        try:
            st.op = self.programs[c].send(value)
        except StopIteration:
            st.op = None
            st.done = True
            self._maybe_release_barrier()

    def _unfinished(self) -> list[int]:
        return [c for c, st in enumerate(self.cores) if not st.done]

    def _maybe_release_barrier(self) -> None:
        live = self._unfinished()
        if not live or not all(self.cores[c].at_barrier for c in live):
            return
        t = max(self.cores[c].clock for c in live)
        for c in live:
            st = self.cores[c]
            st.waited += t - st.clock
            st.clock = t
            st.at_barrier = False
        for c in live:
            self._advance(c, None)

    def _charge(self, st: CoreState, lat: int) -> None:
        st.clock += lat
        st.charged += lat

    def _sync_to(self, st: CoreState, t: int) -> None:
        if t > st.clock:
            st.waited += t - st.clock
            st.clock = t

    # ---------------------------------------------------------------- step
    def step(self) -> bool:
        """Run one operation of the next unfinished core; False when all are done."""
        n = len(self.cores)
        for k in range(n):
            c = (self.cursor + k) % n
            if not self.cores[c].done:
                break
        else:
            return False
        self.cursor = (c + 1) % n
        if self._execute(c):
            self.idle_steps = 0
        else:
            self._idle()
        if self.observer is not None:
            self.observer(self, c)
        return True

    def _idle(self) -> None:
        self.idle_steps += 1
        if self.idle_steps >= len(self._unfinished()):
            raise DeadlockDetected(
                f"no core progressed for a full round; pending ops: "
                f"{[(i, st.op) for i, st in enumerate(self.cores) if not st.done]}")

    def run(self) -> list[int]:
        if self.observer is not None:
            while self.step():
                pass
            return self.clocks
        cores = self.cores
        n = len(cores)
        execute = self._execute
        c = self.cursor
        while True:
            for k in range(n):
                if not cores[c].done:
                    break
                c = c + 1 if c + 1 < n else 0
            else:
                break
            nxt = c + 1 if c + 1 < n else 0
            self.cursor = nxt
            if execute(c):
                self.idle_steps = 0
            else:
                self._idle()
            c = nxt
        return self.clocks

    def _execute(self, c: int) -> bool:
        st = self.cores[c]
        op = st.op
        kind = op[0]
        try:
            if kind == "ld":
                lat, _, result = self._access(c, op[1], False)
                st.clock += lat
                st.charged += lat
            elif kind == "st":
                lat = self._access(c, op[1], True, op[2])[0]
                st.clock += lat
                st.charged += lat
                result = None
            elif kind == "cpu":
                cyc = op[1] * self.cpu_cycles
                st.clock += cyc
                st.compute += cyc
                result = None
            elif kind == "cr":
                result, lat = self.cc.c_read(c, op[1], op[2])
                st.clock += lat
                st.charged += lat
            elif kind == "cw":
                lat = self.cc.c_write(c, op[1], op[2], op[3])
                st.clock += lat
                st.charged += lat
                result = None
            elif kind == "lock":
                return self._lock(c, st, op[1])
            elif kind == "unlock":
                self._charge(st, self._access(c, op[1], True, 0)[0])
                self.lock_release[op[1]] = st.clock
                result = None
            elif kind == "merge":
                return self._merge_step(c, st)
            elif kind == "soft_merge":
                cyc = self.cc.soft_merge(c)
                st.clock += cyc
                st.compute += cyc
                result = None
            elif kind == "barrier":
                if st.at_barrier:
                    return False
                st.at_barrier = True
                st.ops += 1
                self._maybe_release_barrier()
                return True
            elif kind == "merge_init":
                self.cc.merge_init(c, op[1], op[2])
                result = None
            else:
                raise ValueError(f"unknown operation {op!r}")
        except LineLocked:
            return False
        st.ops += 1
        try:
            st.op = self.programs[c].send(result)
        except StopIteration:
            st.op = None
            st.done = True
            self._maybe_release_barrier()
        return True

    def _lock(self, c: int, st: CoreState, addr: int) -> bool:
        lat, _, held = self._access(c, addr, False)
        if held != 0:
            self.m.counters.fgl_lock_retries += 1
            return False
        lat += self._access(c, addr, True, 1)[0]
        self._sync_to(st, self.lock_release.get(addr, 0))
        self._charge(st, lat)
        st.ops += 1
        self._advance(c, None)
        return True

    def _merge_step(self, c: int, st: CoreState) -> bool:
        cc = self.cc
        if st.merge_lines is None:
            st.merge_lines = cc.units[c].sb.lines()
            st.merge_staged = False
            st.merge_merged = 0
            st.merge_latency = 0
        if st.merge_staged:
            lat = cc.merge_finish(c)
            self._charge(st, lat)
            st.merge_latency += lat
            st.merge_merged += 1
            st.merge_staged = False
            st.merge_lines.pop(0)
        elif st.merge_lines:
            status, lat = cc.merge_begin(c, st.merge_lines[0])
            if status == "blocked":
                return False
            if status == "done":
                self._charge(st, lat)
                st.merge_lines.pop(0)
            else:
                st.merge_staged = True
        if not st.merge_lines and not st.merge_staged:
            result = MergeResult(st.merge_merged, st.merge_latency)
            st.merge_lines = None
            st.ops += 1
            self._advance(c, result)
        return True

    # ------------------------------------------------------------- results
    @property
    def clocks(self) -> list[int]:
        return [st.clock for st in self.cores]
