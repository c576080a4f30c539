import numpy as np
import pytest

from ccachesim.config import CCacheConfig, desk_config
from ccachesim.errors import ConfigError, SetPinned, SourceBufferFull
from ccachesim.workloads import WorkloadConfig, run_workload
from ccachesim.workloads.base import MergeCadence, split_range
from ccachesim.workloads.bfs import serial_oracle as bfs_oracle
from ccachesim.workloads.graphs import from_edges
from ccachesim.workloads.kv import KVWorkload

VARIANTS = ("fgl", "dup", "ccache")


def run(name, variant, **kw):
    return run_workload(WorkloadConfig(name, variant, **kw))


# ------------------------------------------------------------------ helpers
def test_split_range_covers_and_aligns():
    parts = split_range(100, 3, align=8)
    assert parts[0][0] == 0 and parts[-1][1] == 100
    assert all(lo % 8 == 0 for lo, _ in parts)
    assert sum(hi - lo for lo, hi in parts) == 100


def test_cadence_every_and_guard():
    cad = MergeCadence(every=4, limit=2)
    assert cad.before([1], 1) is None
    assert cad.before([2], 1) is None
    assert cad.before([3], 1) == ("soft_merge",)     # a third distinct line
    cad = MergeCadence(every=3, limit=100, soft=False)
    ops = [cad.before([1], 1) for _ in range(7)]
    assert ops.count(("merge",)) == 2


# ----------------------------------------------------------------------- kv
def test_kv_total_accesses_is_sixteen_times_keys():
    wl = KVWorkload(WorkloadConfig("kv", "ccache", keys=1000), 0)
    assert sum(len(ks) for ks, _ in wl.streams) == 16_000


@pytest.mark.parametrize("variant", VARIANTS)
def test_kv_single_core_exact(variant):
    res = run("kv", variant, keys=64, cores=1)
    assert res.report.oracle_pass and res.final["values"] == res.oracle["values"]
    assert sum(res.final["values"]) == 16 * 64


def test_kv_eight_cores_ccache_seed7():
    res = run("kv", "ccache", keys=4096, cores=8, seed=7)
    assert res.final["values"] == res.oracle["values"]
    assert res.report.cdata_directory_messages == 0


@pytest.mark.parametrize("update", ["saturating", "complex"])
@pytest.mark.parametrize("variant", VARIANTS)
def test_kv_update_kinds(update, variant):
    res = run("kv", variant, keys=256, update=update, threshold=12)
    assert res.report.oracle_pass, res.report.max_error
    if update == "saturating":
        assert max(res.final["values"]) == 12


def test_kv_saturating_observes_memory_copy():
    # two cores each add 10 to one key from private copies; clamp at 15
    res = run("kv", "ccache", keys=8, cores=2, update="saturating", threshold=15)
    assert res.final["values"] == res.oracle["values"]
    assert all(v <= 15 for v in res.final["values"])


def test_kv_footprints():
    fp = {v: run("kv", v, keys=512, cores=8).report.peak_bytes_allocated for v in VARIANTS}
    assert fp["dup"] == 8 * fp["ccache"]
    assert fp["fgl"] == 2 * fp["ccache"]


def test_kv_too_large_cadence_surfaces_set_pinned():
    with pytest.raises(SetPinned):
        run_workload(WorkloadConfig("kv", "ccache", keys=8192, merge_cadence=10**9,
                                    capacity_guard=False),
                     ccache=CCacheConfig(sb_entries=64))


def test_kv_too_large_cadence_surfaces_full_source_buffer():
    with pytest.raises(SourceBufferFull):
        run("kv", "ccache", keys=8192, merge_cadence=10**9, capacity_guard=False)


def test_kv_keys_below_cores_rejected():
    with pytest.raises(ConfigError):
        run("kv", "fgl", keys=2, cores=4)


def test_kv_determinism():
    a = run("kv", "ccache", keys=512, seed=3).report
    b = run("kv", "ccache", keys=512, seed=3).report
    assert a == b


# ------------------------------------------------------------------- kmeans
@pytest.mark.parametrize("variant", VARIANTS)
def test_kmeans_single_cluster_is_centroid(variant):
    res = run("kmeans", variant, points=64, k=1, iterations=1)
    assert res.final["centers"][0] == res.oracle["centers"][0]


def test_kmeans_single_cluster_centroid_value():
    from ccachesim.workloads.kmeans import KMeansWorkload
    wl = KMeansWorkload(WorkloadConfig("kmeans", "fgl", points=50, k=1, iterations=1), 0)
    pts = np.asarray(wl.points, dtype=np.int64)
    expect = [int(x) for x in pts.sum(axis=0) // len(pts)]
    res = run("kmeans", "ccache", points=50, k=1, iterations=1)
    assert res.final["centers"][0] == expect


@pytest.mark.parametrize("variant", VARIANTS)
def test_kmeans_int_exact(variant):
    res = run("kmeans", variant, points=1024, dims=8, k=8, iterations=3)
    assert res.final["centers"] == res.oracle["centers"]


@pytest.mark.parametrize("variant", VARIANTS)
def test_kmeans_float_close(variant):
    res = run("kmeans", variant, dtype="float", points=512, k=4, iterations=2)
    assert res.report.oracle_pass and res.report.max_error <= 1e-6


def test_kmeans_wide_points_span_lines():
    res = run("kmeans", "ccache", points=200, dims=12, k=3, iterations=2)
    assert res.report.oracle_pass


def test_kmeans_w_minus_one_validation():
    with pytest.raises(ConfigError):
        run("kmeans", "ccache", points=64, k=16, dims=64)


def test_kmeans_approx_drop_degrades_quality():
    exact = run("kmeans", "ccache", points=1024, k=8, iterations=3).report
    lossy = run("kmeans", "ccache", points=1024, k=8, iterations=3, approx_drop=0.1).report
    assert lossy.oracle_pass is None
    assert lossy.quality >= exact.quality


# ----------------------------------------------------------------- pagerank
@pytest.mark.parametrize("variant", VARIANTS)
def test_pagerank_two_cycle_symmetric(variant):
    g = from_edges(2, [0, 1], [1, 0])
    res = run_workload(WorkloadConfig("pagerank", variant, iterations=1, cores=2), graph=g)
    r = res.final["rank"]
    assert r[0] == r[1] == pytest.approx(1.0)


@pytest.mark.parametrize("variant", VARIANTS)
def test_pagerank_uniform_scale10(variant):
    res = run("pagerank", variant, graph_kind="uniform", scale=10)
    assert res.report.oracle_pass and res.report.max_error <= 1e-6


@pytest.mark.parametrize("iters", [1, 2, 3])
def test_pagerank_rank_sum_conserved(iters):
    res = run("pagerank", "ccache", graph_kind="rmat", scale=7, iterations=iters)
    n = len(res.final["rank"])
    assert abs(sum(res.final["rank"]) - n) <= 1e-6 * n


def test_pagerank_dirty_merge_skips_read_only_lines():
    rep = run("pagerank", "ccache", scale=7).report
    assert rep.merges_skipped_clean > rep.merges_executed


# ---------------------------------------------------------------------- bfs
@pytest.mark.parametrize("variant", VARIANTS)
def test_bfs_star(variant):
    n = 70
    g = from_edges(n, [0] * (n - 1), list(range(1, n)))
    res = run_workload(WorkloadConfig("bfs", variant, source=0), graph=g)
    assert res.final["depth"] == [0] + [1] * (n - 1)
    bits = res.final["bitmap"]
    assert bits[0] == (1 << 64) - 2 and bits[1] == (1 << (n - 64)) - 1


@pytest.mark.parametrize("variant", VARIANTS)
def test_bfs_kronecker_scale10(variant):
    res = run("bfs", variant, graph_kind="kronecker", scale=10, seed=3)
    assert res.final["bitmap"] == res.oracle["bitmap"]
    assert res.final["depth"] == res.oracle["depth"]


def test_bfs_disconnected_vertex_never_set():
    g = from_edges(10, [0, 1, 2], [1, 2, 3])
    res = run_workload(WorkloadConfig("bfs", "ccache", source=0), graph=g)
    assert res.final["bitmap"][0] == 0b1110
    assert res.final["depth"][5] == -1


def test_bfs_path_levels_are_distances():
    n = 20
    g = from_edges(n, list(range(n - 1)), list(range(1, n)))
    assert bfs_oracle(g, 0)["depth"] == list(range(n))
    res = run_workload(WorkloadConfig("bfs", "fgl", source=0), graph=g)
    assert res.final["depth"] == list(range(n))


def test_bfs_dup_container_footprint_grows():
    rep = run("bfs", "dup", scale=8).report
    base = run("bfs", "ccache", scale=8).report
    assert rep.peak_bytes_allocated > base.peak_bytes_allocated


def test_unknown_workload():
    with pytest.raises(ConfigError):
        run("nope", "fgl")
    with pytest.raises(ConfigError):
        run("kv", "bogus")


def test_desk_config_default_used():
    res = run("kv", "fgl", keys=64)
    assert res.report.llc_bytes == desk_config().llc.capacity_bytes
