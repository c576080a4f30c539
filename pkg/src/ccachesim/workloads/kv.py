"""Key-value histogram: many cores update randomly chosen values in one array."""
from __future__ import annotations

import cmath

import numpy as np

from ..config import WORDS_PER_LINE
from ..errors import ConfigError
from ..merges import SaturatingAdd
from .base import WorkloadConfig, cadence_for, rel_error, split_range

UPDATES = ("add", "saturating", "complex")
N_ROTATIONS = 16


class KVWorkload:
    """Each access applies one commutative update to ``values[key]``.

    ``add`` increments an int64, ``saturating`` increments with a clamp at
    ``threshold``, ``complex`` multiplies a complex value by a unit rotation.
    """

    def __init__(self, wcfg: WorkloadConfig, ws_bytes: int):
        if wcfg.update not in UPDATES:
            raise ConfigError(f"unknown kv update {wcfg.update!r}")
        self.w = wcfg
        self.cplx = wcfg.update == "complex"
        self.words_per_value = 2 if self.cplx else 1
        self.per_line = WORDS_PER_LINE // self.words_per_value
        if wcfg.keys is not None:
            if wcfg.keys < wcfg.cores:
                raise ConfigError(f"kv needs keys >= cores, got {wcfg.keys}")
            self.keys = wcfg.keys
        else:
            keys = ws_bytes // (8 * self.words_per_value) // self.per_line * self.per_line
            self.keys = max(keys, self.per_line * wcfg.cores)
        total = wcfg.accesses_per_key * self.keys
        self.streams = []
        for c, (lo, hi) in enumerate(split_range(total, wcfg.cores)):
            rng = np.random.default_rng([wcfg.seed, c])
            ks = rng.integers(0, self.keys, size=hi - lo)
            rot = rng.integers(0, N_ROTATIONS, size=hi - lo) if self.cplx else None
            self.streams.append((ks.tolist(), rot.tolist() if rot is not None else None))
        # key generation plus the update arithmetic, charged up front
        self.op_cycles = 2 + (4 if self.cplx else 1)
        self.rotations = [cmath.exp(2j * cmath.pi * r / N_ROTATIONS) for r in range(N_ROTATIONS)]

    # ----------------------------------------------------------------- setup
    def _init_words(self):
        if self.cplx:
            # padding elements too: a zero source would poison complex_mul
            padded = -(-self.keys // self.per_line) * self.per_line
            return [1.0, 0.0] * padded
        return None

    def setup(self, m) -> None:
        self.m = m
        v = self.w.variant
        nbytes = 8 * self.words_per_value * self.keys
        self.values = m.alloc.alloc("kv.values", nbytes, cdata=(v == "ccache"),
                                    init=self._init_words())
        self.nlines = self.values.nlines
        if v == "fgl":
            self.locks = m.alloc.alloc("kv.locks", 64 * self.nlines)
        elif v == "dup":
            self.copies = [self.values] + [
                m.alloc.alloc(f"kv.copy{c}", nbytes, init=self._init_words())
                for c in range(1, self.w.cores)]
        elif v == "ccache":
            self.cadence = [cadence_for(self.w, m) for _ in range(self.w.cores)]

    def merge_fn(self):
        if self.w.update == "saturating":
            return SaturatingAdd(self.w.threshold)
        return "complex_mul" if self.cplx else "add_diff"

    # --------------------------------------------------------------- programs
    def _addr(self, region, key: int, part: int = 0) -> int:
        return region.addr(key * self.words_per_value + part)

    def _line(self, key: int) -> int:
        return key // self.per_line

    def program(self, c: int):
        return getattr(self, f"_prog_{self.w.variant}")(c)

    def _new_value(self, old, rot, clamp: bool):
        if self.cplx:
            z = complex(*old) * self.rotations[rot]
            return (z.real, z.imag)
        if clamp:
            return (min(self.w.threshold, old[0] + 1),)
        return (old[0] + 1,)

    def _update(self, c, region, key, rot, clamp, cop=False):
        vals = []
        for p in range(self.words_per_value):
            a = self._addr(region, key, p)
            vals.append((yield ("cr", a, 0) if cop else ("ld", a)))
        new = self._new_value(vals, rot, clamp)
        for p in range(self.words_per_value):
            a = self._addr(region, key, p)
            yield ("cw", a, new[p], 0) if cop else ("st", a, new[p])

    def _accesses(self, c):
        keys, rots = self.streams[c]
        for i, k in enumerate(keys):
            yield k, (rots[i] if rots is not None else None)

    def _prog_fgl(self, c):
        clamp = self.w.update == "saturating"
        for key, rot in self._accesses(c):
            yield ("cpu", self.op_cycles)
            lock = self.locks.line_addr(self._line(key))
            yield ("lock", lock)
            yield from self._update(c, self.values, key, rot, clamp)
            yield ("unlock", lock)
        yield ("barrier",)

    def _prog_ccache(self, c):
        yield ("merge_init", self.merge_fn(), 0)
        cad = self.cadence[c]
        for key, rot in self._accesses(c):
            yield ("cpu", self.op_cycles)
            op = cad.before((self._line(key),), 2 * self.words_per_value)
            if op is not None:
                yield op
            # the private copy is never clamped; the merge function saturates
            yield from self._update(c, self.values, key, rot, False, cop=True)
        yield ("merge",)
        cad.reset()
        yield ("barrier",)

    def _prog_dup(self, c):
        mine = self.copies[c]
        for key, rot in self._accesses(c):
            yield ("cpu", self.op_cycles)
            yield from self._update(c, mine, key, rot, False)
        yield ("barrier",)
        # parallel reduction: each core folds every copy over a slice of lines
        lo, hi = split_range(self.nlines, self.w.cores)[c]
        for key in range(lo * self.per_line, min(hi * self.per_line, self.keys)):
            acc = []
            for p in range(self.words_per_value):
                acc.append((yield ("ld", self._addr(self.values, key, p))))
            for other in self.copies[1:]:
                vals = []
                for p in range(self.words_per_value):
                    vals.append((yield ("ld", self._addr(other, key, p))))
                yield ("cpu", 4 if self.cplx else 1)
                if self.cplx:
                    z = complex(*acc) * complex(*vals)
                    acc = [z.real, z.imag]
                else:
                    acc = [acc[0] + vals[0]]
            if self.w.update == "saturating":
                acc = [min(self.w.threshold, acc[0])]
            for p in range(self.words_per_value):
                yield ("st", self._addr(self.values, key, p), acc[p])
        yield ("barrier",)

    # ---------------------------------------------------------------- results
    def final_state(self, m) -> dict:
        raw = m.read_region(self.values, self.keys * self.words_per_value)
        if self.cplx:
            return {"values": [complex(raw[2 * i], raw[2 * i + 1]) for i in range(self.keys)]}
        return {"values": raw}

    def oracle(self) -> dict:
        return serial_oracle(self)

    def compare(self, final, oracle):
        got, want = final["values"], oracle["values"]
        if self.cplx:
            err = rel_error(got, want)
            return err <= 1e-6, err
        err = float(max((abs(a - b) for a, b in zip(got, want)), default=0))
        return got == want, err


def serial_oracle(wl: KVWorkload) -> dict:
    """Replay every access stream sequentially with plain numpy arithmetic."""
    keys = wl.keys
    if wl.cplx:
        angle = np.zeros(keys, dtype=np.int64)
        for ks, rots in wl.streams:
            np.add.at(angle, np.asarray(ks, dtype=np.int64), np.asarray(rots, dtype=np.int64))
        vals = np.exp(2j * np.pi * (angle % N_ROTATIONS) / N_ROTATIONS)
        return {"values": [complex(v) for v in vals]}
    counts = np.zeros(keys, dtype=np.int64)
    for ks, _ in wl.streams:
        np.add.at(counts, np.asarray(ks, dtype=np.int64), 1)
    if wl.w.update == "saturating":
        counts = np.minimum(counts, wl.w.threshold)
    return {"values": [int(x) for x in counts]}
