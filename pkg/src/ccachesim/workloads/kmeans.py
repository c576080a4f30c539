"""K-means with shared per-cluster sum and count accumulators."""
from __future__ import annotations

import numpy as np

from ..config import WORDS_PER_LINE
from ..errors import ConfigError
from ..merges import approx_drop
from .base import WorkloadConfig, cadence_for, rel_error, split_range

DEFAULT_ITERATIONS = 3


class KMeansWorkload:
    """Points are partitioned across cores; each iteration assigns points to the
    nearest center and accumulates per-cluster sums and counts, then core 0
    recomputes the centers at the phase boundary.

    Integer datasets use floor division for the new centers; an empty cluster
    keeps its previous center.
    """

    def __init__(self, wcfg: WorkloadConfig, ws_bytes: int):
        if wcfg.dtype not in ("int", "float"):
            raise ConfigError(f"kmeans dtype must be int or float, not {wcfg.dtype!r}")
        if wcfg.k < 1 or wcfg.dims < 1:
            raise ConfigError("k and dims must be >= 1")
        self.w = wcfg
        self.k = wcfg.k
        self.dims = wcfg.dims
        self.iters = wcfg.iterations if wcfg.iterations is not None else DEFAULT_ITERATIONS
        self.is_int = wcfg.dtype == "int"
        self.lpp = -(-self.dims // WORDS_PER_LINE)          # lines per point / per center
        self.stride = self.lpp * WORDS_PER_LINE
        if wcfg.points is not None:
            self.n = wcfg.points
        else:
            self.n = max(ws_bytes // (64 * self.lpp), self.k, wcfg.cores)
        if self.n < self.k:
            raise ConfigError(f"kmeans needs at least k={self.k} points")
        rng = np.random.default_rng(wcfg.seed)
        truth = rng.uniform(0, 1000, size=(self.k, self.dims))
        label = rng.integers(0, self.k, size=self.n)
        pts = truth[label] + rng.normal(0, 60, size=(self.n, self.dims))
        if self.is_int:
            self.points = [[int(x) for x in row] for row in np.rint(pts).astype(np.int64)]
        else:
            self.points = [[float(x) for x in row] for row in pts]
        self.init_centers = [list(p) for p in self.points[:self.k]]
        self.zero = 0 if self.is_int else 0.0
        self.count_lines = -(-self.k // WORDS_PER_LINE)

    # ----------------------------------------------------------------- setup
    def _flat(self, rows):
        out = []
        for r in rows:
            out.extend(r + [self.zero] * (self.stride - self.dims))
        return out

    def setup(self, m) -> None:
        self.m = m
        v = self.w.variant
        cd = v == "ccache"
        self.pts = m.alloc.alloc("km.points", 8 * self.stride * self.n, init=self._flat(self.points))
        self.centers = m.alloc.alloc("km.centers", 8 * self.stride * self.k,
                                     init=self._flat(self.init_centers))
        zeros_sum = [self.zero] * (self.stride * self.k)
        self.sums = m.alloc.alloc("km.sums", 8 * self.stride * self.k, cdata=cd, init=zeros_sum)
        self.counts = m.alloc.alloc("km.counts", 8 * self.k, cdata=cd)
        if v == "fgl":
            self.locks = m.alloc.alloc("km.locks", 64 * (self.k * self.lpp + self.count_lines))
        elif v == "dup":
            self.psums = [m.alloc.alloc(f"km.psums{c}", 8 * self.stride * self.k, init=zeros_sum)
                          for c in range(self.w.cores)]
            self.pcounts = [m.alloc.alloc(f"km.pcounts{c}", 8 * self.k) for c in range(self.w.cores)]
        elif cd:
            self._check_w_minus_one(m)
            self.cadence = [cadence_for(self.w, m) for _ in range(self.w.cores)]
            fn = "add_diff" if self.is_int else "vec_add_float"
            if self.w.approx_drop > 0:
                self.fns = [approx_drop(fn, self.w.approx_drop, seed=self.w.seed * 1000 + c)
                            for c in range(self.w.cores)]
            else:
                self.fns = [fn] * self.w.cores

    def _check_w_minus_one(self, m) -> None:
        l1 = m.cache_cfg.l1
        per_set: dict[int, int] = {}
        for region in (self.sums, self.counts):
            for i in range(region.nlines):
                s = (region.first_line + i) % l1.sets
                per_set[s] = per_set.get(s, 0) + 1
        if max(per_set.values()) > l1.ways - 1:
            raise ConfigError(f"{self.k}x{self.dims} accumulators put more than "
                              f"{l1.ways - 1} lines in one L1 set")

    # -------------------------------------------------------------- programs
    def program(self, c: int):
        return getattr(self, f"_prog_{self.w.variant}")(c)

    def _my_points(self, c):
        lo, hi = split_range(self.n, self.w.cores)[c]
        return range(lo, hi)

    def _load_row(self, region, row_index):
        row = []
        for d in range(self.dims):
            row.append((yield ("ld", region.addr(row_index * self.stride + d))))
        return row

    def _load_centers(self):
        centers = []
        for j in range(self.k):
            centers.append((yield from self._load_row(self.centers, j)))
        return centers

    def _nearest(self, p, centers):
        best, bd = 0, None
        for j, cen in enumerate(centers):
            dist = 0
            for a, b in zip(p, cen):
                dist += (a - b) * (a - b)
            if bd is None or dist < bd:
                best, bd = j, dist
        return best

    def _new_center(self, sums, count, old):
        if count == 0:
            return old
        if self.is_int:
            return [s // count for s in sums]
        return [s / count for s in sums]

    def _store_center(self, j, row):
        for d in range(self.dims):
            yield ("st", self.centers.addr(j * self.stride + d), row[d])

    def _sum_lines(self, j):
        return [self.sums.first_line + j * self.lpp + q for q in range(self.lpp)]

    def _count_line(self, j):
        return self.counts.first_line + j // WORDS_PER_LINE

    def _iteration(self, c, accumulate):
        """Load centers, then assign and accumulate every owned point."""
        centers = yield from self._load_centers()
        for i in self._my_points(c):
            p = yield from self._load_row(self.pts, i)
            yield ("cpu", 3 * self.k * self.dims)
            yield from accumulate(c, self._nearest(p, centers), p)
        return centers

    # FGL: one lock per accumulator line
    def _acc_fgl(self, c, j, p):
        for q in range(self.lpp):
            lock = self.locks.line_addr(j * self.lpp + q)
            yield ("lock", lock)
            for d in range(q * WORDS_PER_LINE, min(self.dims, (q + 1) * WORDS_PER_LINE)):
                a = self.sums.addr(j * self.stride + d)
                v = yield ("ld", a)
                yield ("st", a, v + p[d])
            yield ("unlock", lock)
        lock = self.locks.line_addr(self.k * self.lpp + j // WORDS_PER_LINE)
        yield ("lock", lock)
        v = yield ("ld", self.counts.addr(j))
        yield ("st", self.counts.addr(j), v + 1)
        yield ("unlock", lock)

    def _prog_fgl(self, c):
        for _ in range(self.iters):
            centers = yield from self._iteration(c, self._acc_fgl)
            yield ("barrier",)
            if c == 0:
                for j in range(self.k):
                    cnt = yield ("ld", self.counts.addr(j))
                    yield ("st", self.counts.addr(j), 0)
                    sums = []
                    for d in range(self.dims):
                        a = self.sums.addr(j * self.stride + d)
                        sums.append((yield ("ld", a)))
                        yield ("st", a, self.zero)
                    yield ("cpu", self.dims)
                    yield from self._store_center(j, self._new_center(sums, cnt, centers[j]))
            yield ("barrier",)

    # DUP: private accumulators per core, reduced by core 0
    def _acc_dup(self, c, j, p):
        ps = self.psums[c]
        for d in range(self.dims):
            a = ps.addr(j * self.stride + d)
            v = yield ("ld", a)
            yield ("st", a, v + p[d])
        a = self.pcounts[c].addr(j)
        v = yield ("ld", a)
        yield ("st", a, v + 1)

    def _prog_dup(self, c):
        for _ in range(self.iters):
            for j in range(self.k):
                for d in range(self.dims):
                    yield ("st", self.psums[c].addr(j * self.stride + d), self.zero)
                yield ("st", self.pcounts[c].addr(j), 0)
            centers = yield from self._iteration(c, self._acc_dup)
            yield ("barrier",)
            if c == 0:
                for j in range(self.k):
                    cnt = 0
                    sums = [self.zero] * self.dims
                    for o in range(self.w.cores):
                        cnt += yield ("ld", self.pcounts[o].addr(j))
                        for d in range(self.dims):
                            sums[d] += yield ("ld", self.psums[o].addr(j * self.stride + d))
                    yield ("cpu", self.dims * self.w.cores)
                    yield from self._store_center(j, self._new_center(sums, cnt, centers[j]))
            yield ("barrier",)

    # CCache: accumulators are CData merged with add_diff / vec_add_float
    def _acc_ccache(self, c, j, p):
        lines = self._sum_lines(j) + [self._count_line(j)]
        op = self.cadence[c].before(lines, 2 * (self.dims + 1))
        if op is not None:
            yield op
        for d in range(self.dims):
            a = self.sums.addr(j * self.stride + d)
            v = yield ("cr", a, 0)
            yield ("cw", a, v + p[d], 0)
        a = self.counts.addr(j)
        v = yield ("cr", a, 0)
        yield ("cw", a, v + 1, 0)

    def _prog_ccache(self, c):
        yield ("merge_init", self.fns[c], 0)
        cad = self.cadence[c]
        for _ in range(self.iters):
            centers = yield from self._iteration(c, self._acc_ccache)
            yield ("soft_merge",)
            yield ("merge",)
            cad.reset()
            yield ("barrier",)
            if c == 0:
                cnts = []
                for q in range(self.count_lines):
                    op = cad.before([self.counts.first_line + q], 16)
                    if op is not None:
                        yield op
                    for j in range(q * WORDS_PER_LINE, min(self.k, (q + 1) * WORDS_PER_LINE)):
                        a = self.counts.addr(j)
                        cnts.append((yield ("cr", a, 0)))
                        yield ("cw", a, 0, 0)
                for j in range(self.k):
                    sums = []
                    for q, line in enumerate(self._sum_lines(j)):
                        op = cad.before([line], 16)
                        if op is not None:
                            yield op
                        for d in range(q * WORDS_PER_LINE, min(self.dims, (q + 1) * WORDS_PER_LINE)):
                            a = self.sums.addr(j * self.stride + d)
                            sums.append((yield ("cr", a, 0)))
                            yield ("cw", a, self.zero, 0)
                    yield ("cpu", self.dims)
                    yield from self._store_center(j, self._new_center(sums, cnts[j], centers[j]))
                yield ("merge",)
                cad.reset()
            yield ("barrier",)

    # ---------------------------------------------------------------- results
    def final_state(self, m) -> dict:
        raw = m.read_region(self.centers, self.stride * self.k)
        return {"centers": [raw[j * self.stride:j * self.stride + self.dims] for j in range(self.k)]}

    def oracle(self) -> dict:
        return serial_oracle(self)

    def compare(self, final, oracle):
        if self.w.approx_drop > 0:
            return None, 0.0   # lossy by construction; judged by quality instead
        got = [x for row in final["centers"] for x in row]
        want = [x for row in oracle["centers"] for x in row]
        err = rel_error(got, want)
        if self.is_int:
            return got == want, err
        return err <= 1e-6, err

    def quality(self, final) -> float:
        """Mean squared distance from each point to its nearest final center."""
        pts = np.asarray(self.points, dtype=np.float64)
        cen = np.asarray(final["centers"], dtype=np.float64)
        d = ((pts[:, None, :] - cen[None, :, :]) ** 2).sum(axis=2)
        return float(d.min(axis=1).mean())


def serial_oracle(wl: KMeansWorkload) -> dict:
    """Single-threaded Lloyd iterations over the same points and initial centers."""
    centers = [list(c) for c in wl.init_centers]
    for _ in range(wl.iters):
        sums = [[wl.zero] * wl.dims for _ in range(wl.k)]
        counts = [0] * wl.k
        for p in wl.points:
            j = min(range(wl.k), key=lambda j: (sum((a - b) ** 2 for a, b in zip(p, centers[j])), j))
            counts[j] += 1
            for d in range(wl.dims):
                sums[j][d] += p[d]
        for j in range(wl.k):
            if counts[j]:
                centers[j] = [s // counts[j] if wl.is_int else s / counts[j] for s in sums[j]]
    return {"centers": centers}
