"""Benchmark kernels, each in fine-grained-lock, duplication and CCache form."""
from .bfs import BFSWorkload
from .base import VARIANTS, MergeCadence, RunResult, WorkloadConfig, run_workload
from .kmeans import KMeansWorkload
from .kv import KVWorkload
from .pagerank import PageRankWorkload

WORKLOADS = {
    "kv": KVWorkload,
    "kmeans": KMeansWorkload,
    "pagerank": PageRankWorkload,
    "bfs": BFSWorkload,
}

__all__ = ["WORKLOADS", "VARIANTS", "MergeCadence", "RunResult", "WorkloadConfig",
           "run_workload"]
