"""Run counters, the per-run report record and CSV emission."""
from __future__ import annotations

import csv
import dataclasses
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .errors import MismatchedReports, ZeroCycleRun


@dataclass
class Counters:
    l1_hits: int = 0
    l1_misses: int = 0
    l2_hits: int = 0
    l2_misses: int = 0
    llc_hits: int = 0
    llc_misses: int = 0
    directory_messages: int = 0
    invalidation_messages: int = 0
    # protocol traffic whose line address holds CData; must stay zero
    cdata_directory_messages: int = 0
    cdata_invalidation_messages: int = 0
    memory_writebacks: int = 0
    merges_executed: int = 0
    merges_skipped_clean: int = 0
    source_buffer_evictions: int = 0
    lock_conflicts: int = 0
    fgl_lock_retries: int = 0

    def snapshot(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class SimReport:
    workload: str
    variant: str
    dtype: str
    update: str
    seed: int
    cores: int
    working_set_fraction: float
    working_set_bytes: int
    llc_bytes: int
    sb_entries: int
    merge_cadence: int
    merge_on_evict: bool
    dirty_merge: bool
    max_cycles: int
    core_cycles: tuple = ()
    l1_hits: int = 0
    l1_misses: int = 0
    l2_hits: int = 0
    l2_misses: int = 0
    llc_hits: int = 0
    llc_misses: int = 0
    directory_messages: int = 0
    invalidation_messages: int = 0
    cdata_directory_messages: int = 0
    cdata_invalidation_messages: int = 0
    memory_writebacks: int = 0
    merges_executed: int = 0
    merges_skipped_clean: int = 0
    source_buffer_evictions: int = 0
    lock_conflicts: int = 0
    fgl_lock_retries: int = 0
    peak_bytes_allocated: int = 0
    oracle_pass: bool | None = None
    max_error: float = 0.0
    quality: float | None = None
    error: str = ""

    @property
    def total_cycles(self) -> int:
        return self.max_cycles

    def config_key(self) -> tuple:
        return (self.workload, self.dtype, self.update, self.seed, self.cores,
                self.working_set_fraction)


COLUMNS = tuple(f.name for f in dataclasses.fields(SimReport))


def normalize_per_kilocycle(counter: int, total_cycles: int) -> float:
    """Events per 1000 cycles of the slowest core."""
    if total_cycles <= 0:
        raise ZeroCycleRun("cannot normalise over a zero-cycle run")
    return counter * 1000.0 / total_cycles


def speedup(baseline: SimReport, candidate: SimReport) -> float:
    if baseline.config_key() != candidate.config_key():
        raise MismatchedReports(
            f"reports describe different runs: {baseline.config_key()} vs {candidate.config_key()}")
    if candidate.max_cycles <= 0:
        raise ZeroCycleRun("candidate run has zero cycles")
    return baseline.max_cycles / candidate.max_cycles


def _cell(value) -> str:
    if isinstance(value, tuple):
        return ";".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def reports_to_csv(reports: Iterable[SimReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in reports:
        w.writerow([_cell(getattr(r, c)) for c in COLUMNS])
    return buf.getvalue()


def emit_csv(reports: Iterable[SimReport], path) -> Path:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True)
    path.write_text(reports_to_csv(reports))
    return path
