"""Synthetic directed graphs in CSR form, plus a small binary file format."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError

MAGIC = b"CCSRGR01"
RMAT_ABCD = (0.57, 0.19, 0.19, 0.05)
GRAPH_KINDS = ("rmat", "kronecker", "uniform", "ssca")


@dataclass
class Graph:
    n: int
    offsets: np.ndarray   # int64, length n+1
    targets: np.ndarray   # int64, length m
    kind: str = "custom"

    @property
    def m(self) -> int:
        return int(self.targets.shape[0])

    def out_degree(self) -> np.ndarray:
        return np.diff(self.offsets)

    def neighbors(self, v: int) -> np.ndarray:
        return self.targets[self.offsets[v]:self.offsets[v + 1]]

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        src = np.repeat(np.arange(self.n, dtype=np.int64), self.out_degree())
        return src, self.targets.copy()

    def transpose(self) -> "Graph":
        src, dst = self.edges()
        return from_edges(self.n, dst, src, self.kind)


def from_edges(n: int, src, dst, kind: str = "custom") -> Graph:
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    order = np.lexsort((dst, src))
    counts = np.bincount(src, minlength=n)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return Graph(n, offsets, dst[order], kind)


def _rmat_edges(rng, scale: int, m: int, abcd=RMAT_ABCD):
    a, b, c, _ = abcd
    src = np.zeros(m, dtype=np.int64)
    dst = np.zeros(m, dtype=np.int64)
    for bit in range(scale):
        r = rng.random(m)
        down = r >= a + b
        right = ((r >= a) & (r < a + b)) | (r >= a + b + c)
        src |= down.astype(np.int64) << bit
        dst |= right.astype(np.int64) << bit
    return src, dst


def _ssca_edges(rng, n: int, m: int, max_clique: int):
    # vertices grouped into random-size cliques; most edges stay inside one
    sizes = []
    total = 0
    while total < n:
        s = int(rng.integers(1, max_clique + 1))
        sizes.append(min(s, n - total))
        total += sizes[-1]
    starts = np.cumsum([0] + sizes[:-1])
    clique_of = np.repeat(np.arange(len(sizes)), sizes)
    src = rng.integers(0, n, size=m)
    cl = clique_of[src]
    intra = rng.random(m) < 0.9
    lo = starts[cl]
    span = np.asarray(sizes)[cl]
    dst = np.where(intra, lo + (rng.random(m) * span).astype(np.int64), rng.integers(0, n, size=m))
    return src.astype(np.int64), dst.astype(np.int64)


def gen_graph(kind: str, scale: int, edge_factor: int = 16, seed: int = 0) -> Graph:
    """2**scale vertices and edge_factor * 2**scale directed edges."""
    if kind not in GRAPH_KINDS:
        raise ConfigError(f"unknown graph kind {kind!r}; expected one of {GRAPH_KINDS}")
    if scale < 1 or edge_factor < 1:
        raise ConfigError("scale and edge_factor must be >= 1")
    n = 1 << scale
    m = edge_factor * n
    rng = np.random.default_rng(seed)
    if kind in ("rmat", "kronecker"):
        src, dst = _rmat_edges(rng, scale, m)
        if kind == "kronecker":
            perm = rng.permutation(n)
            src, dst = perm[src], perm[dst]
    elif kind == "uniform":
        src = rng.integers(0, n, size=m)
        dst = rng.integers(0, n, size=m)
    else:
        src, dst = _ssca_edges(rng, n, m, max(2, 1 << (scale // 3)))
    return from_edges(n, src, dst, kind)


def save_graph(g: Graph, path) -> Path:
    path = Path(path)
    with path.open("wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<qq", g.n, g.m))
        f.write(g.offsets.astype("<i8").tobytes())
        f.write(g.targets.astype("<i8").tobytes())
    return path


def load_graph(path) -> Graph:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ConfigError(f"{path}: not a CSR graph file")
    n, m = struct.unpack_from("<qq", raw, 8)
    off = 24
    offsets = np.frombuffer(raw, dtype="<i8", count=n + 1, offset=off).astype(np.int64)
    off += 8 * (n + 1)
    targets = np.frombuffer(raw, dtype="<i8", count=m, offset=off).astype(np.int64)
    if offsets[-1] != m:
        raise ConfigError(f"{path}: offsets do not match edge count")
    return Graph(int(n), offsets, targets, "file")
