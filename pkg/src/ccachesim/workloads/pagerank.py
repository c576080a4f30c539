"""PageRank power iteration with a fixed iteration count."""
from __future__ import annotations

import math

import numpy as np

from ..config import WORDS_PER_LINE
from .base import WorkloadConfig, cadence_for, rel_error, split_range
from .graphs import Graph, gen_graph

DEFAULT_ITERATIONS = 10
# CSR offsets + targets + rank + accumulator + inverse out-degree
WORDS_PER_VERTEX = 4


def rank_update(base: float, damping: float, incoming: float) -> float:
    return base + damping * incoming


class PageRankWorkload:
    """rank'[v] = (1-d) + d*D/n + d * sum_{u->v} rank[u]/outdeg(u).

    D is the rank held by vertices without out-edges, spread evenly so the
    rank sum stays n.  FGL and CCache gather contributions over contiguous
    in-edge ranges into a shared accumulator; DUP double-buffers the rank
    array and has each core write only its own vertices.
    """

    def __init__(self, wcfg: WorkloadConfig, ws_bytes: int, graph: Graph = None):
        self.w = wcfg
        self.iters = wcfg.iterations if wcfg.iterations is not None else DEFAULT_ITERATIONS
        self.d = wcfg.damping
        if graph is not None:
            self.g = graph
        elif wcfg.scale is not None:
            self.g = gen_graph(wcfg.graph_kind or "uniform", wcfg.scale, wcfg.edge_factor, wcfg.seed)
        else:
            per_vertex = 8 * (WORDS_PER_VERTEX + wcfg.edge_factor)
            scale = max(3, round(math.log2(max(ws_bytes, per_vertex * 8) / per_vertex)))
            self.g = gen_graph(wcfg.graph_kind or "uniform", scale, wcfg.edge_factor, wcfg.seed)
        self.gt = self.g.transpose()
        self.n = self.g.n
        outdeg = self.g.out_degree()
        self.inv = [1.0 / x if x else 0.0 for x in outdeg.tolist()]
        self.dangling = [v for v, x in enumerate(outdeg.tolist()) if x == 0]
        self.in_off = self.gt.offsets.tolist()
        self.in_src = self.gt.targets.tolist()

    # ----------------------------------------------------------------- setup
    def setup(self, m) -> None:
        self.m = m
        v = self.w.variant
        cd = v == "ccache"
        n = self.n
        self.off_r = m.alloc.alloc("pr.in_offsets", 8 * (n + 1), init=self.in_off)
        self.src_r = m.alloc.alloc("pr.in_sources", 8 * len(self.in_src), init=self.in_src)
        self.inv_r = m.alloc.alloc("pr.inv_outdeg", 8 * n, init=self.inv)
        self.params = m.alloc.alloc("pr.params", 64, init=[0.0])
        if v == "dup":
            self.ranks = [m.alloc.alloc("pr.rank0", 8 * n, init=[1.0] * n),
                          m.alloc.alloc("pr.rank1", 8 * n, init=[1.0] * n)]
            return
        self.rank = m.alloc.alloc("pr.rank", 8 * n, cdata=cd, init=[1.0] * n)
        self.acc = m.alloc.alloc("pr.acc", 8 * n, cdata=cd, init=[0.0] * n)
        if v == "fgl":
            self.locks = m.alloc.alloc("pr.locks", 64 * self.acc.nlines)
        else:
            self.cadence = [cadence_for(self.w, m) for _ in range(self.w.cores)]

    def program(self, c: int):
        return getattr(self, f"_prog_{self.w.variant}")(c)

    def _vertex_block(self, c):
        return split_range(self.n, self.w.cores, WORDS_PER_LINE)[c]

    def _set_base(self, read_rank):
        """Core 0: sum rank over dangling vertices, publish the base term."""
        dmass = 0.0
        for v in self.dangling:
            dmass += yield from read_rank(v)
        yield ("cpu", len(self.dangling) + 4)
        base = (1.0 - self.d) + self.d * dmass / self.n
        yield ("st", self.params.addr(0), base)

    # FGL / CCache share the gather + finalize structure ---------------------
    def _gather(self, c, read_rank, add_acc):
        lo, hi = split_range(len(self.in_src), self.w.cores)[c]
        if lo >= hi:
            return
        v = self._first_vertex(lo)
        end = yield ("ld", self.off_r.addr(v + 1))
        part = 0.0
        touched = False
        for e in range(lo, hi):
            while e >= end:
                if touched:
                    yield from add_acc(v, part)
                part, touched = 0.0, False
                v += 1
                end = yield ("ld", self.off_r.addr(v + 1))
            u = yield ("ld", self.src_r.addr(e))
            r = yield from read_rank(u)
            inv = yield ("ld", self.inv_r.addr(u))
            yield ("cpu", 2)
            part += r * inv
            touched = True
        if touched:
            yield from add_acc(v, part)

    def _first_vertex(self, e):
        # host-side binary search standing in for the partitioning step
        return int(np.searchsorted(self.gt.offsets, e, side="right")) - 1

    def _fgl_rank(self, u):
        return (yield ("ld", self.rank.addr(u)))

    def _fgl_add(self, v, part):
        lock = self.locks.line_addr(v // WORDS_PER_LINE)
        yield ("lock", lock)
        a = self.acc.addr(v)
        x = yield ("ld", a)
        yield ("st", a, x + part)
        yield ("unlock", lock)

    def _prog_fgl(self, c):
        for _ in range(self.iters):
            if c == 0:
                yield from self._set_base(self._fgl_rank)
            yield ("barrier",)
            yield from self._gather(c, self._fgl_rank, self._fgl_add)
            yield ("barrier",)
            base = yield ("ld", self.params.addr(0))
            lo, hi = self._vertex_block(c)
            for v in range(lo, hi):
                a = yield ("ld", self.acc.addr(v))
                yield ("cpu", 2)
                yield ("st", self.rank.addr(v), rank_update(base, self.d, a))
                yield ("st", self.acc.addr(v), 0.0)
            yield ("barrier",)

    def _cc_rank(self, c):
        cad = self.cadence[c]
        rank = self.rank

        def read(u):
            op = cad.before((rank.first_line + u // WORDS_PER_LINE,), 1)
            if op is not None:
                yield op
            return (yield ("cr", rank.addr(u), 0))
        return read

    def _cc_add(self, c):
        cad = self.cadence[c]
        acc = self.acc

        def add(v, part):
            op = cad.before((acc.first_line + v // WORDS_PER_LINE,), 2)
            if op is not None:
                yield op
            a = acc.addr(v)
            x = yield ("cr", a, 0)
            yield ("cw", a, x + part, 0)
        return add

    def _boundary(self, c):
        yield ("merge",)
        self.cadence[c].reset()
        yield ("barrier",)

    def _prog_ccache(self, c):
        yield ("merge_init", "add_diff", 0)
        read_rank = self._cc_rank(c)
        add_acc = self._cc_add(c)
        cad = self.cadence[c]
        for _ in range(self.iters):
            if c == 0:
                yield from self._set_base(read_rank)
            yield from self._boundary(c)
            yield from self._gather(c, read_rank, add_acc)
            yield from self._boundary(c)
            base = yield ("ld", self.params.addr(0))
            lo, hi = self._vertex_block(c)
            for v in range(lo, hi):
                line = v // WORDS_PER_LINE
                op = cad.before((self.acc.first_line + line, self.rank.first_line + line), 3)
                if op is not None:
                    yield op
                a = yield ("cr", self.acc.addr(v), 0)
                yield ("cpu", 2)
                yield ("cw", self.rank.addr(v), rank_update(base, self.d, a), 0)
                yield ("cw", self.acc.addr(v), 0.0, 0)
            yield from self._boundary(c)

    # DUP: Jacobi double buffer, vertex partitioned ---------------------------
    def _prog_dup(self, c):
        for it in range(self.iters):
            cur, nxt = self.ranks[it % 2], self.ranks[(it + 1) % 2]
            if c == 0:
                yield from self._set_base(lambda u: self._ld(cur, u))
            yield ("barrier",)
            base = yield ("ld", self.params.addr(0))
            lo, hi = self._vertex_block(c)
            if lo < hi:
                start = yield ("ld", self.off_r.addr(lo))
            for v in range(lo, hi):
                end = yield ("ld", self.off_r.addr(v + 1))
                s = 0.0
                for e in range(start, end):
                    u = yield ("ld", self.src_r.addr(e))
                    r = yield ("ld", cur.addr(u))
                    inv = yield ("ld", self.inv_r.addr(u))
                    yield ("cpu", 2)
                    s += r * inv
                yield ("st", nxt.addr(v), rank_update(base, self.d, s))
                start = end
            yield ("barrier",)

    def _ld(self, region, i):
        return (yield ("ld", region.addr(i)))

    # ---------------------------------------------------------------- results
    def final_state(self, m) -> dict:
        region = self.ranks[self.iters % 2] if self.w.variant == "dup" else self.rank
        return {"rank": m.read_region(region, self.n)}

    def oracle(self) -> dict:
        return serial_oracle(self)

    def compare(self, final, oracle):
        err = rel_error(final["rank"], oracle["rank"])
        return err <= 1e-6, err


def serial_oracle(wl: PageRankWorkload) -> dict:
    """Dense numpy power iteration over the original edge list."""
    n, d = wl.n, wl.d
    src, dst = wl.g.edges()
    outdeg = wl.g.out_degree().astype(np.float64)
    inv = np.divide(1.0, outdeg, out=np.zeros(n), where=outdeg > 0)
    rank = np.ones(n)
    dangling = outdeg == 0
    for _ in range(wl.iters):
        base = (1.0 - d) + d * rank[dangling].sum() / n
        contrib = np.zeros(n)
        np.add.at(contrib, dst, rank[src] * inv[src])
        rank = base + d * contrib
    return {"rank": rank.tolist()}
