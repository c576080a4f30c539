"""Command-line front end: build an experiment plan, run it, write CSV."""
from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Optional, Sequence

from .config import (CacheConfig, CCacheConfig, ConfigError, apply_overrides, desk_config,
                     load_config_file)
from .errors import SimulationError
from .metrics import SimReport, emit_csv, reports_to_csv
from .workloads import VARIANTS, WORKLOADS, WorkloadConfig, run_workload
from .workloads.base import failed_report

DTYPE_WORKLOADS = {"kmeans"}
UPDATE_WORKLOADS = {"kv"}


@dataclass
class ExperimentPlan:
    """Cross product of workloads, variants, working-set sizes and seeds."""

    workloads: list = field(default_factory=list)
    variants: list = field(default_factory=lambda: list(VARIANTS))
    ws_fractions: list = field(default_factory=lambda: [0.25])
    seeds: list = field(default_factory=lambda: [1])
    dtypes: list = field(default_factory=lambda: ["int"])
    updates: list = field(default_factory=lambda: ["add"])
    cores: int = 4
    cache: Optional[CacheConfig] = None
    ccache: CCacheConfig = field(default_factory=CCacheConfig)
    # LLC capacity used by the ccache variant only (half-LLC study); inputs
    # are still sized from the unmodified LLC
    llc_override_bytes: Optional[int] = None
    workload_params: dict = field(default_factory=dict)

    def base_cache(self) -> CacheConfig:
        return replace(self.cache or desk_config(self.cores), core_count=self.cores).validate()

    def combinations(self):
        """Yield (WorkloadConfig, CacheConfig, reference LLC bytes) per run."""
        base = self.base_cache()
        ref = base.llc.capacity_bytes
        for name, variant, ws, seed in product(self.workloads, self.variants,
                                               self.ws_fractions, self.seeds):
            dtypes = self.dtypes if name in DTYPE_WORKLOADS else [_native_dtype(name)]
            updates = self.updates if name in UPDATE_WORKLOADS else ["add"]
            for dtype, update in product(dtypes, updates):
                wcfg = WorkloadConfig(name=name, variant=variant, working_set_fraction=ws,
                                      cores=self.cores, seed=seed, dtype=dtype, update=update,
                                      **self.workload_params)
                cache = base
                if variant == "ccache" and self.llc_override_bytes:
                    cache = base.with_llc_bytes(self.llc_override_bytes)
                yield wcfg, cache, ref


def _native_dtype(name: str) -> str:
    return "float" if name == "pagerank" else "int"


def run(plan: ExperimentPlan) -> list[SimReport]:
    """Execute every combination on a fresh machine; errors become failed rows."""
    reports = []
    for wcfg, cache, ref in plan.combinations():
        try:
            res = run_workload(wcfg, cache, plan.ccache, reference_llc_bytes=ref)
            reports.append(res.report)
        except SimulationError as exc:
            reports.append(failed_report(wcfg, cache, plan.ccache, exc))
    return reports


def all_passed(reports: Sequence[SimReport]) -> bool:
    return all(r.oracle_pass is not False and not r.error for r in reports)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ccachesim",
        description="Simulate FGL, DUP and CCache variants of the benchmark kernels and emit CSV.")
    ap.add_argument("--config", help="key=value file with architecture and plan settings")
    ap.add_argument("--workload", nargs="*", choices=sorted(WORKLOADS), default=[],
                    help="workloads to run")
    ap.add_argument("--variant", nargs="+", choices=VARIANTS, default=list(VARIANTS))
    ap.add_argument("--ws-fraction", nargs="+", type=float, default=[0.25],
                    help="input size as a fraction of LLC capacity")
    ap.add_argument("--seed", nargs="+", type=int, default=[1])
    ap.add_argument("--dtype", nargs="+", choices=("int", "float"), default=["int"],
                    help="kmeans element kind")
    ap.add_argument("--update", nargs="+", choices=("add", "saturating", "complex"),
                    default=["add"], help="kv update kind")
    ap.add_argument("--cores", type=int, default=4)
    ap.add_argument("--llc-bytes", type=int, help="LLC capacity for every variant")
    ap.add_argument("--ccache-llc-bytes", type=int,
                    help="LLC capacity for the ccache variant only; inputs keep their size")
    ap.add_argument("--sb-entries", type=int, help="source buffer entries")
    ap.add_argument("--merge-cadence", type=int, help="CData touches between soft merges")
    ap.add_argument("--no-merge-on-evict", action="store_true",
                    help="hard merge at every cadence point instead of soft_merge")
    ap.add_argument("--no-dirty-merge", action="store_true", help="merge clean lines too")
    ap.add_argument("--iterations", type=int, help="kmeans/pagerank iteration count")
    ap.add_argument("--approx-drop", type=float, default=0.0,
                    help="kmeans ccache: drop each merge with this probability")
    ap.add_argument("--out", help="CSV path (default: stdout)")
    return ap


_LIST_KEYS = {"workload", "variant", "ws_fraction", "seed", "dtype", "update"}


def _config_defaults(path: str, parser: argparse.ArgumentParser):
    """Architecture keys go to the machine; plan keys become parser defaults."""
    values = load_config_file(path)
    known = {a.dest for a in parser._actions}
    plan_keys = {k: v for k, v in values.items() if k in known}
    arch = {k: v for k, v in values.items() if k not in known}
    cache, ccache, leftovers = apply_overrides(desk_config(), CCacheConfig(), arch)
    if leftovers:
        raise ConfigError(f"{path}: unknown keys {sorted(leftovers)}")
    for k in _LIST_KEYS & plan_keys.keys():
        v = plan_keys[k]
        plan_keys[k] = [x.strip() for x in v.split(",")] if isinstance(v, str) else [v]
        if k == "ws_fraction":
            plan_keys[k] = [float(x) for x in plan_keys[k]]
        elif k == "seed":
            plan_keys[k] = [int(x) for x in plan_keys[k]]
    return cache, ccache, plan_keys


def plan_from_args(argv: Optional[Sequence[str]] = None) -> tuple[ExperimentPlan, Optional[str]]:
    parser = build_parser()
    pre, _ = parser.parse_known_args(argv)
    cache, ccache = None, CCacheConfig()
    if pre.config:
        cache, ccache, defaults = _config_defaults(pre.config, parser)
        parser.set_defaults(**defaults)
    args = parser.parse_args(argv)
    if args.cores < 1:
        parser.error("--cores must be >= 1")
    cache = replace(cache or desk_config(args.cores), core_count=args.cores)
    if args.llc_bytes:
        cache = cache.with_llc_bytes(args.llc_bytes)
    if args.sb_entries is not None:
        ccache = replace(ccache, sb_entries=args.sb_entries)
    if args.no_dirty_merge:
        ccache = replace(ccache, dirty_merge=False)
    params = {}
    if args.merge_cadence is not None:
        params["merge_cadence"] = args.merge_cadence
    if args.no_merge_on_evict:
        params["merge_on_evict"] = False
    if args.iterations is not None:
        params["iterations"] = args.iterations
    if args.approx_drop:
        params["approx_drop"] = args.approx_drop
    plan = ExperimentPlan(workloads=list(args.workload), variants=list(args.variant),
                          ws_fractions=list(args.ws_fraction), seeds=list(args.seed),
                          dtypes=list(args.dtype), updates=list(args.update), cores=args.cores,
                          cache=cache, ccache=ccache.validate(),
                          llc_override_bytes=args.ccache_llc_bytes, workload_params=params)
    return plan, args.out


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        plan, out = plan_from_args(argv)
        reports = run(plan)
    except ConfigError as exc:
        print(f"ccachesim: {exc}", file=sys.stderr)
        return 2
    if out:
        emit_csv(reports, out)
    else:
        sys.stdout.write(reports_to_csv(reports))
    for r in reports:
        if r.error:
            print(f"ccachesim: {r.workload}/{r.variant} seed {r.seed}: {r.error}", file=sys.stderr)
    return 0 if all_passed(reports) else 1


if __name__ == "__main__":
    sys.exit(main())
