"""Software merge functions: (source, updated, memory) -> new memory line.

Each function sees one 64-byte line as eight words.  ``apply`` is the pure
form used by oracles and property tests; ``run`` executes the same
reduction through the merge registers, which is how the simulated core
invokes it and how its cycle cost is measured.
"""
from __future__ import annotations

import random
from typing import Optional, Sequence

from .config import WORDS_PER_LINE
from .errors import ConfigError, UnknownMergeFunction, ZeroSourceFactor

SRC, UPD, MEM = 0, 1, 2

ELEMENT_KINDS = ("int64", "float64", "bit", "complex")


class MergeFunction:
    name = "abstract"
    element_kind = "int64"
    reads = (SRC, UPD, MEM)

    def apply(self, src: Sequence, upd: Sequence, mem: Sequence) -> tuple:
        raise NotImplementedError

    def run(self, regs) -> None:
        """Execute through the merge registers: one register access per word
        read or written, one ALU op per word."""
        blank = (0,) * WORDS_PER_LINE
        staged = [blank, blank, blank]
        for reg in self.reads:
            staged[reg] = regs.rd_line(reg)
        out = self.apply(*staged)
        regs.alu(WORDS_PER_LINE)
        regs.wr_line(MEM, out)

    def __repr__(self):
        return f"<merge {self.name}>"


class AddDiff(MergeFunction):
    name = "add_diff"

    def apply(self, src, upd, mem):
        return tuple(m + (u - s) for s, u, m in zip(src, upd, mem))


class VecAddFloat(MergeFunction):
    name = "vec_add_float"
    element_kind = "float64"

    def apply(self, src, upd, mem):
        return tuple(float(m) + (float(u) - float(s)) for s, u, m in zip(src, upd, mem))


class OrMerge(MergeFunction):
    name = "or_merge"
    element_kind = "bit"
    reads = (UPD, MEM)

    def apply(self, src, upd, mem):
        # bits are only ever set, so the source copy is not needed
        return tuple(m | u for u, m in zip(upd, mem))


class MinMerge(MergeFunction):
    name = "min_merge"
    reads = (UPD, MEM)

    def apply(self, src, upd, mem):
        return tuple(u if u < m else m for u, m in zip(upd, mem))


class SaturatingAdd(MergeFunction):
    """Add the core's delta but never let memory exceed ``threshold``.

    The clamp looks at the in-memory value, not the private copy, so a
    later merge cannot push a value that another core already saturated.
    """

    name = "saturating_add"

    def __init__(self, threshold=255):
        self.threshold = threshold

    def apply(self, src, upd, mem):
        t = self.threshold
        return tuple(min(t, m + (u - s)) for s, u, m in zip(src, upd, mem))

    def __repr__(self):
        return f"<merge saturating_add threshold={self.threshold}>"


class ComplexMul(MergeFunction):
    """Word pairs are (re, im); the update is the ratio upd/src."""

    name = "complex_mul"
    element_kind = "complex"

    def apply(self, src, upd, mem):
        out = []
        for j in range(0, WORDS_PER_LINE, 2):
            s = complex(src[j], src[j + 1])
            if s == 0:
                raise ZeroSourceFactor(f"source element {j // 2} is zero")
            r = complex(mem[j], mem[j + 1]) * (complex(upd[j], upd[j + 1]) / s)
            out += (r.real, r.imag)
        return tuple(out)


class ApproxDrop(MergeFunction):
    """Drop each whole-line merge with probability ``p``; otherwise defer to ``base``."""

    def __init__(self, base: MergeFunction, p: float, seed: int = 0):
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"drop probability {p} outside [0, 1]")
        self.base = base
        self.p = p
        self.seed = seed
        self.rng = random.Random(seed)
        self.dropped = 0
        self.invocations = 0
        self.name = f"approx_drop({base.name})"
        self.element_kind = base.element_kind
        self.reads = base.reads

    def _drop(self) -> bool:
        self.invocations += 1
        if self.rng.random() < self.p:
            self.dropped += 1
            return True
        return False

    def apply(self, src, upd, mem):
        if self._drop():
            return tuple(mem)
        return self.base.apply(src, upd, mem)

    def run(self, regs):
        if self._drop():
            regs.alu(1)
            return
        self.base.run(regs)


def approx_drop(base, p: float, seed: int = 0) -> ApproxDrop:
    return ApproxDrop(resolve(base), p, seed)


CATALOG = {
    "add_diff": AddDiff,
    "vec_add_float": VecAddFloat,
    "or_merge": OrMerge,
    "min_merge": MinMerge,
    "saturating_add": SaturatingAdd,
    "complex_mul": ComplexMul,
}


def resolve(fn, **params) -> MergeFunction:
    """Catalog lookup by name; MergeFunction instances pass through."""
    if isinstance(fn, MergeFunction):
        return fn
    try:
        cls = CATALOG[fn]
    except (KeyError, TypeError):
        raise UnknownMergeFunction(f"no merge function named {fn!r}") from None
    return cls(**params)


def merge_in_order(fn: MergeFunction, mem: Sequence, pairs) -> tuple:
    """Fold a sequence of (src, upd) merges into ``mem``; oracle helper."""
    mem = tuple(mem)
    for src, upd in pairs:
        mem = fn.apply(src, upd, mem)
    return mem


def check_read_only(fn: MergeFunction, src, upd, mem) -> Optional[tuple]:
    """Run ``apply`` on list copies and fail if it mutated any argument."""
    s, u, m = list(src), list(upd), list(mem)
    out = fn.apply(s, u, m)
    if s != list(src) or u != list(upd) or m != list(mem):
        raise AssertionError(f"{fn.name} mutated its inputs")
    return out
