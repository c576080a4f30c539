"""Shared workload plumbing: configuration, merge cadence, the run driver."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

from ..config import CacheConfig, CCacheConfig, ConfigError, desk_config
from ..errors import SimulationError
from ..machine import Machine
from ..metrics import SimReport
from ..scheduler import Scheduler

VARIANTS = ("fgl", "dup", "ccache")


@dataclass(frozen=True)
class WorkloadConfig:
    name: str
    variant: str
    working_set_fraction: float = 0.25
    cores: int = 4
    seed: int = 1
    dtype: str = "int"            # kmeans element kind: int | float
    update: str = "add"           # kv update: add | saturating | complex
    merge_cadence: Optional[int] = None   # CData touches between soft merges
    merge_on_evict: bool = True   # False: hard merge at every cadence point
    capacity_guard: bool = True   # merge before exceeding source-buffer capacity
    # kv
    keys: Optional[int] = None    # default: sized from the working set
    accesses_per_key: int = 16
    threshold: int = 255
    # kmeans
    points: Optional[int] = None  # default: sized from the working set
    k: int = 4
    dims: int = 8
    iterations: Optional[int] = None
    approx_drop: float = 0.0
    # graphs
    graph_kind: Optional[str] = None
    scale: Optional[int] = None
    edge_factor: int = 16
    damping: float = 0.85
    source: Optional[int] = None  # bfs start vertex; default drawn from the seed

    def validate(self) -> "WorkloadConfig":
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if not 0 < self.working_set_fraction:
            raise ConfigError("working_set_fraction must be positive")
        if self.cores < 1:
            raise ConfigError("cores must be >= 1")
        return self


class MergeCadence:
    """Decides when a CCache program merges between commutative updates.

    Called before each update with the CData lines it will touch.  A soft
    merge (or a hard merge, when merge-on-evict is disabled) is requested
    every ``every`` touches, and also before the number of distinct lines
    privatized since the last merge would exceed ``limit``.
    """

    def __init__(self, every: int, limit: int, soft: bool = True, guard: bool = True):
        self.every = every
        self.limit = limit
        self.op = ("soft_merge",) if soft else ("merge",)
        self.guard = guard
        self.count = 0
        self.lines: set = set()

    def before(self, lines, touches: int):
        """Return the merge op to issue first, or None."""
        due = self.count >= self.every
        if not due and self.guard:
            new = self.lines.union(lines)
            due = len(new) > self.limit
        if due:
            self.count = 0
            self.lines = set(lines)
            self.count = touches
            return self.op
        self.lines.update(lines)
        self.count += touches
        return None

    def reset(self) -> None:
        self.count = 0
        self.lines = set()


def cadence_for(wcfg: WorkloadConfig, machine: Machine) -> MergeCadence:
    sb = machine.ccache_cfg.sb_entries
    every = wcfg.merge_cadence if wcfg.merge_cadence is not None else sb * 4
    limit = min(sb, machine.cache_cfg.l1.ways - 1)
    return MergeCadence(every, limit, soft=wcfg.merge_on_evict, guard=wcfg.capacity_guard)


def split_range(n: int, parts: int, align: int = 1) -> list[tuple[int, int]]:
    """Contiguous near-equal chunks of range(n); boundaries multiples of ``align``."""
    units = -(-n // align)
    out = []
    for p in range(parts):
        lo = units * p // parts * align
        hi = min(n, units * (p + 1) // parts * align)
        out.append((min(lo, n), hi))
    return out


def max_lines_per_set(first_line: int, nlines: int, nsets: int) -> int:
    if nlines <= 0:
        return 0
    return math.ceil(nlines / nsets) if nlines >= nsets else 1


def rel_error(a, b) -> float:
    """max |a-b| / max(1, |b|) elementwise; complex values allowed."""
    worst = 0.0
    for x, y in zip(a, b):
        e = abs(x - y) / max(1.0, abs(y))
        if e > worst:
            worst = e
    return worst


@dataclass
class RunResult:
    report: SimReport
    final: dict
    oracle: dict
    machine: Machine
    scheduler: Scheduler


def run_workload(wcfg: WorkloadConfig, cache: Optional[CacheConfig] = None,
                 ccache: Optional[CCacheConfig] = None,
                 reference_llc_bytes: Optional[int] = None,
                 observer=None, graph=None) -> RunResult:
    """Build, simulate and check one workload run.

    The input size is ``working_set_fraction`` of ``reference_llc_bytes``
    (default: the simulated LLC), so shrinking the LLC alone keeps inputs fixed.
    ``graph`` replaces the generated input of the graph workloads.
    """
    from . import WORKLOADS

    wcfg.validate()
    cache = replace(cache or desk_config(wcfg.cores), core_count=wcfg.cores).validate()
    ccache = (ccache or CCacheConfig()).validate()
    ref = reference_llc_bytes or cache.llc.capacity_bytes
    ws_bytes = int(wcfg.working_set_fraction * ref)
    try:
        cls = WORKLOADS[wcfg.name]
    except KeyError:
        raise ConfigError(f"unknown workload {wcfg.name!r}") from None
    machine = Machine(cache, ccache)
    wl = cls(wcfg, ws_bytes) if graph is None else cls(wcfg, ws_bytes, graph=graph)
    wl.setup(machine)
    sched = Scheduler(machine, [wl.program(c) for c in range(wcfg.cores)])
    sched.observer = observer
    sched.run()
    final = wl.final_state(machine)
    oracle = wl.oracle()
    ok, err = wl.compare(final, oracle)
    quality = wl.quality(final) if hasattr(wl, "quality") else None
    report = make_report(wcfg, cache, ccache, ws_bytes, machine, sched,
                         oracle_pass=ok, max_error=err, quality=quality)
    return RunResult(report, final, oracle, machine, sched)


def make_report(wcfg, cache, ccache, ws_bytes, machine, sched, oracle_pass=None,
                max_error=0.0, quality=None, error="") -> SimReport:
    clocks = tuple(sched.clocks) if sched is not None else ()
    ctr = machine.counters.snapshot() if machine is not None else {}
    sb = ccache.sb_entries
    return SimReport(
        workload=wcfg.name, variant=wcfg.variant, dtype=wcfg.dtype, update=wcfg.update,
        seed=wcfg.seed, cores=wcfg.cores,
        working_set_fraction=float(wcfg.working_set_fraction), working_set_bytes=ws_bytes,
        llc_bytes=cache.llc.capacity_bytes, sb_entries=sb,
        merge_cadence=wcfg.merge_cadence if wcfg.merge_cadence is not None else sb * 4,
        merge_on_evict=wcfg.merge_on_evict, dirty_merge=ccache.dirty_merge,
        max_cycles=max(clocks) if clocks else 0, core_cycles=clocks,
        peak_bytes_allocated=machine.alloc.peak_bytes if machine is not None else 0,
        oracle_pass=oracle_pass, max_error=float(max_error), quality=quality, error=error,
        **ctr,
    )


def failed_report(wcfg, cache, ccache, exc: Exception) -> SimReport:
    cache = replace(cache or desk_config(wcfg.cores), core_count=wcfg.cores)
    ccache = ccache or CCacheConfig()
    return make_report(wcfg, cache, ccache, 0, None, None, oracle_pass=False,
                       error=f"{type(exc).__name__}: {exc}")


__all__ = ["WorkloadConfig", "MergeCadence", "run_workload", "RunResult", "split_range",
           "rel_error", "SimulationError", "VARIANTS"]
