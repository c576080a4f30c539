"""Level-synchronous BFS with a shared successor bitmap."""
from __future__ import annotations

import math
from collections import deque

import numpy as np

from ..config import WORDS_PER_LINE
from ..errors import ConfigError
from .base import WorkloadConfig, cadence_for, split_range
from .graphs import Graph, gen_graph

# CSR offsets + targets + depth, bitmaps are negligible
WORDS_PER_VERTEX = 2
UNVISITED = -1


class BFSWorkload:
    """Traversal sets one bitmap bit per newly seen successor; at each level
    boundary cores scan their slice of the bitmap, assign depths to bits not
    yet visited and collect the next frontier.

    The bitmap is cumulative: a bit, once set, stays set.  The source vertex
    is never set.  The frontier lists themselves are host-side bookkeeping.
    """

    def __init__(self, wcfg: WorkloadConfig, ws_bytes: int, graph: Graph = None):
        self.w = wcfg
        if graph is not None:
            self.g = graph
        else:
            if wcfg.scale is not None:
                scale = wcfg.scale
            else:
                per_vertex = 8 * (WORDS_PER_VERTEX + wcfg.edge_factor)
                scale = max(3, round(math.log2(max(ws_bytes, per_vertex * 8) / per_vertex)))
            self.g = gen_graph(wcfg.graph_kind or "kronecker", scale, wcfg.edge_factor, wcfg.seed)
        self.n = self.g.n
        if wcfg.source is not None:
            if not 0 <= wcfg.source < self.n:
                raise ConfigError(f"source {wcfg.source} outside [0, {self.n})")
            self.source = wcfg.source
        else:
            candidates = np.flatnonzero(self.g.out_degree() > 0)
            rng = np.random.default_rng(wcfg.seed)
            self.source = int(rng.choice(candidates)) if candidates.size else 0
        self.nwords = -(-self.n // 64)
        self.offsets = self.g.offsets.tolist()
        self.targets = self.g.targets.tolist()

    # ----------------------------------------------------------------- setup
    def setup(self, m) -> None:
        self.m = m
        v = self.w.variant
        n = self.n
        self.off_r = m.alloc.alloc("bfs.offsets", 8 * (n + 1), init=self.offsets)
        self.tgt_r = m.alloc.alloc("bfs.targets", 8 * max(1, len(self.targets)), init=self.targets)
        depth = [UNVISITED] * n
        depth[self.source] = 0
        self.depth = m.alloc.alloc("bfs.depth", 8 * n, init=depth)
        self.bitmap = m.alloc.alloc("bfs.bitmap", 8 * self.nwords, cdata=(v == "ccache"))
        visited = [0] * self.nwords
        visited[self.source // 64] = 1 << (self.source % 64)
        self.visited = m.alloc.alloc("bfs.visited", 8 * self.nwords, init=visited)
        self.frontiers = {0: [[self.source] if c == 0 else [] for c in range(self.w.cores)]}
        if v == "fgl":
            self.locks = m.alloc.alloc("bfs.locks", 64 * self.bitmap.nlines)
        elif v == "dup":
            self.apply_lock = m.alloc.alloc("bfs.apply_lock", 64)
            # address space for each thread-local container; footprint is
            # accounted as the containers grow
            self.lists = []
            for c in range(self.w.cores):
                r = m.alloc.alloc(f"bfs.updates{c}", 8 * max(1, len(self.targets)))
                m.alloc.account(-r.nbytes)
                self.lists.append(r)
            self.capacity = [0] * self.w.cores
        else:
            self.cadence = [cadence_for(self.w, m) for _ in range(self.w.cores)]

    def program(self, c: int):
        return self._prog(c)

    # -------------------------------------------------------------- programs
    def _frontier_slice(self, c, level):
        full = [v for part in self.frontiers[level] for v in part]
        lo, hi = split_range(len(full), self.w.cores)[c]
        return full[lo:hi]

    def _grow(self, c, length):
        # doubling vector: capacity in words
        cap = self.capacity[c]
        if length > cap:
            new = max(WORDS_PER_LINE, cap * 2)
            while new < length:
                new *= 2
            self.m.alloc.account(8 * (new - cap))
            self.capacity[c] = new

    def _set_bit(self, c, v):
        wi, bit = divmod(v, 64)
        a = self.bitmap.addr(wi)
        variant = self.w.variant
        if variant == "fgl":
            lock = self.locks.line_addr(wi // WORDS_PER_LINE)
            yield ("lock", lock)
            x = yield ("ld", a)
            yield ("st", a, x | (1 << bit))
            yield ("unlock", lock)
        else:
            op = self.cadence[c].before((self.bitmap.first_line + wi // WORDS_PER_LINE,), 2)
            if op is not None:
                yield op
            x = yield ("cr", a, 0)
            yield ("cw", a, x | (1 << bit), 0)

    def _boundary(self, c):
        if self.w.variant == "ccache":
            yield ("merge",)
            self.cadence[c].reset()
        yield ("barrier",)

    def _prog(self, c):
        variant = self.w.variant
        if variant == "ccache":
            yield ("merge_init", "or_merge", 0)
        level = 0
        while True:
            pending = 0
            for u in self._frontier_slice(c, level):
                start = yield ("ld", self.off_r.addr(u))
                end = yield ("ld", self.off_r.addr(u + 1))
                for e in range(start, end):
                    v = yield ("ld", self.tgt_r.addr(e))
                    dv = yield ("ld", self.depth.addr(v))
                    yield ("cpu", 2)
                    if dv != UNVISITED:
                        continue
                    if variant == "dup":
                        self._grow(c, pending + 1)
                        yield ("st", self.lists[c].addr(pending), v)
                        pending += 1
                    else:
                        yield from self._set_bit(c, v)
            yield from self._boundary(c)
            if variant == "dup":
                # apply the thread-local updates under one global lock
                lock = self.apply_lock.addr(0)
                yield ("lock", lock)
                for i in range(pending):
                    v = yield ("ld", self.lists[c].addr(i))
                    a = self.bitmap.addr(v // 64)
                    x = yield ("ld", a)
                    yield ("st", a, x | (1 << (v % 64)))
                yield ("unlock", lock)
                yield ("barrier",)
            # scan my slice of the bitmap for newly discovered vertices
            found = []
            lo, hi = split_range(self.nwords, self.w.cores, WORDS_PER_LINE)[c]
            for wi in range(lo, hi):
                if variant == "ccache":
                    op = self.cadence[c].before((self.bitmap.first_line + wi // WORDS_PER_LINE,), 1)
                    if op is not None:
                        yield op
                    b = yield ("cr", self.bitmap.addr(wi), 0)
                else:
                    b = yield ("ld", self.bitmap.addr(wi))
                yield ("cpu", 1)
                if not b:
                    continue
                vis = yield ("ld", self.visited.addr(wi))
                new = b & ~vis
                if not new:
                    continue
                yield ("st", self.visited.addr(wi), vis | new)
                while new:
                    low = new & -new
                    v = wi * 64 + low.bit_length() - 1
                    new ^= low
                    yield ("st", self.depth.addr(v), level + 1)
                    found.append(v)
            self.frontiers.setdefault(level + 1, [None] * self.w.cores)[c] = found
            yield from self._boundary(c)
            level += 1
            if not any(self.frontiers[level]):
                break

    # ---------------------------------------------------------------- results
    def final_state(self, m) -> dict:
        return {"depth": m.read_region(self.depth, self.n),
                "bitmap": m.read_region(self.bitmap, self.nwords)}

    def oracle(self) -> dict:
        return serial_oracle(self.g, self.source)

    def compare(self, final, oracle):
        ok = final["depth"] == oracle["depth"] and final["bitmap"] == oracle["bitmap"]
        err = sum(a != b for a, b in zip(final["depth"], oracle["depth"]))
        return ok, float(err)


def serial_oracle(g: Graph, source: int) -> dict:
    """Queue-based BFS; bitmap holds every reached vertex except the source."""
    depth = [UNVISITED] * g.n
    depth[source] = 0
    q = deque([source])
    while q:
        u = q.popleft()
        for v in g.neighbors(u).tolist():
            if depth[v] == UNVISITED:
                depth[v] = depth[u] + 1
                q.append(v)
    words = [0] * (-(-g.n // 64))
    for v, d in enumerate(depth):
        if d > 0:
            words[v // 64] |= 1 << (v % 64)
    return {"depth": depth, "bitmap": words}
