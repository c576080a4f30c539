import itertools
import math

import pytest
from hypothesis import given, strategies as st

from ccachesim.errors import ConfigError, UnknownMergeFunction, ZeroSourceFactor
from ccachesim.merges import (CATALOG, SaturatingAdd, approx_drop, check_read_only,
                              merge_in_order, resolve)

Z = (0,) * 8


def line(*head, fill=0):
    return tuple(head) + (fill,) * (8 - len(head))


def cx(*pairs):
    out = []
    for z in pairs:
        out += [z.real, z.imag]
    out += [1.0, 0.0] * (4 - len(pairs))
    return tuple(out)


def test_add_diff_examples():
    f = resolve("add_diff")
    assert f.apply(line(5), line(9), line(7))[0] == 11
    assert f.apply(line(4), line(4), line(7)) == line(7)


def test_add_diff_three_cores_all_orders():
    f = resolve("add_diff")
    pairs = [(Z, line(1))] * 3
    for perm in itertools.permutations(pairs):
        assert merge_in_order(f, Z, perm)[0] == 3


def test_or_merge_examples():
    f = resolve("or_merge")
    assert f.apply(Z, line(0b1000), line(0b0010))[0] == 0b1010
    assert f.apply(Z, Z, line(0b0110)) == line(0b0110)


def test_saturating_examples():
    f = SaturatingAdd(255)
    assert f.apply(line(0), line(10), line(250))[0] == 255
    assert f.apply(line(0), line(3), line(5))[0] == 8
    pairs = [(Z, line(200)), (Z, line(100))]
    for perm in itertools.permutations(pairs):
        assert merge_in_order(f, Z, perm)[0] == 255


def test_complex_mul_examples():
    f = resolve("complex_mul")
    out = f.apply(cx(1), cx(2j), cx(3))
    assert complex(out[0], out[1]) == 6j
    assert f.apply(cx(1 + 1j), cx(1 + 1j), cx(2 - 1j)) == cx(2 - 1j)
    for perm in itertools.permutations([(cx(1), cx(2j)), (cx(1), cx(3))]):
        m = merge_in_order(f, cx(1), perm)
        assert abs(complex(m[0], m[1]) - 6j) < 1e-9
    with pytest.raises(ZeroSourceFactor):
        f.apply(cx(0), cx(1), cx(1))


def test_vec_add_float_and_min_examples():
    assert resolve("vec_add_float").apply(line(1.5, fill=0.0), line(2.5, fill=0.0),
                                          line(10.0, fill=0.0))[0] == 11.0
    f = resolve("min_merge")
    assert f.apply(Z, line(3), line(5))[0] == 3
    assert f.apply(Z, line(math.inf), line(5))[0] == 5


def test_unknown_function():
    with pytest.raises(UnknownMergeFunction):
        resolve("nope")


word = st.integers(-(2**40), 2**40)
line_st = st.tuples(*[word] * 8)
pair_st = st.tuples(line_st, line_st)


@pytest.mark.parametrize("name", ["add_diff", "or_merge", "min_merge", "saturating_add"])
@given(mem=line_st, pairs=st.lists(pair_st, min_size=1, max_size=4))
def test_integer_merges_are_order_independent(name, mem, pairs):
    f = resolve(name)
    if name == "or_merge":
        mem = tuple(abs(x) for x in mem)
        pairs = [(s, tuple(abs(x) | m for x, m in zip(u, mem))) for s, u in pairs]
    if name == "saturating_add":
        # saturating counts only grow and start below the threshold
        mem = tuple(abs(x) % 200 for x in mem)
        pairs = [(s, tuple(a + abs(b) % 100 for a, b in zip(s, u))) for s, u in pairs]
    results = {merge_in_order(f, mem, perm) for perm in itertools.permutations(pairs)}
    assert len(results) == 1


@given(src=line_st, upd=line_st, mem=line_st)
def test_merges_are_read_only(src, upd, mem):
    for name in ("add_diff", "or_merge", "min_merge", "saturating_add", "vec_add_float"):
        check_read_only(resolve(name), list(src), list(upd), list(mem))


def test_approx_drop_bounds_and_identity():
    with pytest.raises(ConfigError):
        approx_drop("add_diff", 1.5)
    base = resolve("add_diff")
    never = approx_drop("add_diff", 0.0, seed=3)
    always = approx_drop("add_diff", 1.0, seed=3)
    for k in range(50):
        s, u, m = line(k), line(k + 3), line(2 * k)
        assert never.apply(s, u, m) == base.apply(s, u, m)
        assert always.apply(s, u, m) == m


def test_approx_drop_binomial():
    f = approx_drop("add_diff", 0.1, seed=2024)
    for _ in range(10_000):
        f.apply(Z, line(1), Z)
    assert f.invocations == 10_000
    assert abs(f.dropped - 1000) <= 3 * 30


def test_approx_drop_deterministic():
    runs = []
    for _ in range(2):
        f = approx_drop("add_diff", 0.3, seed=11)
        m = Z
        for _ in range(200):
            m = f.apply(Z, line(1), m)
        runs.append(m)
    assert runs[0] == runs[1]


def test_catalog_complete():
    assert set(CATALOG) == {"add_diff", "vec_add_float", "or_merge", "min_merge",
                            "saturating_add", "complex_mul"}
