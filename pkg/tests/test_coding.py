import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dforge.coding import (
    CodePrefix,
    DepthExhausted,
    TinyFamily,
    decode,
    encode,
    exponent,
    exponent_table,
    exponent_threshold,
    flatness_certificate,
    in_T_surrogate,
    profile_of,
)
from dforge.ternary import BlockSchedule, InsufficientDepth, TernaryPoint, random_point

SCHED = BlockSchedule.minimal(7)


def test_encode_prefix_and_zero_blocks():
    x = TernaryPoint((2,) * 16)
    s = CodePrefix((2, 0, 2))
    z = encode(0, s, x, SCHED, depth=8)
    assert z.digits[:3] == (2, 0, 2)
    # positions 3 (block 2, j=1) and beyond come from x's blocks 0, 1
    # through phi(0, j); position 1 would be block 1 -> x block -1 -> 0,
    # but it is covered by the prefix here.
    z2 = encode(0, CodePrefix(), x, SCHED, depth=4)
    assert z2.digits[0] == 0 and z2.digits[1] == 0  # blocks 0, 1 are zero


def test_encode_copies_through_pairing():
    # x block 0 = position 0; x block 1 = position 1; x block 2 = positions 2..3
    x = TernaryPoint((2, 0, 2, 0) + (0,) * 12)
    z = encode(0, CodePrefix(), x, SCHED, depth=16)
    # output block 2 (positions 2..3), slot j reads x block 0 slot phi(0, j):
    # phi(0,0)=0 -> x(0)=2; phi(0,1)=1 >= blocklen(0)=1 -> 0
    assert z.digits[2] == 2 and z.digits[3] == 0
    # output block 3 (positions 4..15), slot j reads x block 1 slot phi(0, j):
    # phi(0,0)=0 -> x(1)=0
    assert z.digits[4] == 0
    # output block 4 (positions 16..255) would read x block 2: depth stops before


def test_encode_insufficient_depth():
    x = TernaryPoint((2, 2))  # blocks 0 and 1 only
    with pytest.raises(InsufficientDepth):
        encode(0, CodePrefix(), x, SCHED, depth=17)  # block 4 slot 0 needs x block 2


def _tiny_member(rng, depth=256, bound=1):
    """Words whose every block has content length <= bound (T-surrogate)."""
    digits = [0] * depth
    for k in range(5):
        lo = SCHED.gamma[k]
        hi = min(SCHED.gamma[k + 1], depth)
        span = min(bound, hi - lo)
        for j in range(span):
            digits[lo + j] = 2 * rng.randrange(2)
    return TernaryPoint(tuple(digits))


def test_decode_roundtrip_tiny_members():
    rng = random.Random(1105)
    for trial in range(8):
        ys = [_tiny_member(rng) for _ in range(3)]
        res = decode(ys, SCHED)
        for i, y in enumerate(ys):
            z = encode(i, res.prefixes[i], res.x, SCHED, depth=y.depth)
            assert z.digits == y.digits, f"trial {trial} input {i}"


def test_decode_roundtrip_arbitrary_words():
    # Round trip holds for arbitrary inputs too: the prefix soaks up whatever
    # the diagonal bound cannot carry.
    rng = random.Random(7)
    ys = [random_point(256, rng) for _ in range(3)]
    res = decode(ys, SCHED)
    for i, y in enumerate(ys):
        z = encode(i, res.prefixes[i], res.x, SCHED, depth=y.depth)
        assert z.digits == y.digits


def test_decode_psi_cap():
    rng = random.Random(3)
    ys = [_tiny_member(rng) for _ in range(2)]
    res = decode(ys, SCHED)
    for k, p in enumerate(res.psi):
        assert 0 <= p <= SCHED.block_len(k)


def test_decode_depth_exhausted():
    ys = [TernaryPoint((2, 0, 2))]  # depth 3 < gamma(3) = 4
    with pytest.raises(DepthExhausted):
        decode(ys, SCHED)


def test_exponent_frozen_values():
    assert exponent(2, 1, SCHED) == -11
    assert exponent(1, 2, SCHED) == 1
    table = exponent_table(1, 4, SCHED)
    assert table[2] == -11
    assert table[4] == -65536 + 1 + 256
    assert exponent_threshold(1, SCHED) == 1  # e(1,1) = -4+1+2 = -1 < 0
    assert exponent_threshold(2, SCHED) == 2  # e(1,2) = +1, e(2,2) = -16+1+8 = -7


def test_flatness_certificate_clean():
    rng = random.Random(2024)
    rep = flatness_certificate(0, CodePrefix(), 1, SCHED, depth=64, pairs=300, rng=rng)
    assert rep.ok
    assert rep.pairs_checked > 250
    assert rep.exponents[2] == -11


def test_flatness_certificate_nonzero_index():
    rng = random.Random(99)
    rep = flatness_certificate(2, CodePrefix((2, 2)), 2, SCHED, depth=64, pairs=200, rng=rng)
    assert rep.ok


def test_tiny_family_values_and_closure():
    f = TinyFamily.constant(3)
    assert f(0) == 3 and f(100) == 3
    g = TinyFamily.log_power(Fraction(1), 1)
    assert g(0) == 1  # ceil(log2(2)) = 1
    assert g(2) == 2  # ceil(log2(4)) = 2
    assert g(14) == 4  # ceil(log2(16)) = 4
    g2 = g.pow(2)
    assert g2(14) == 16
    g3 = g.shift(5)
    assert g3(9) == 5 + g(14)


def test_tiny_family_rejects_bad():
    with pytest.raises(ValueError):
        TinyFamily("rootish", Fraction(1))
    with pytest.raises(ValueError):
        TinyFamily.constant(2).pow(-1)


def test_in_T_surrogate_and_profile():
    rng = random.Random(5)
    x = _tiny_member(rng, bound=1)
    assert in_T_surrogate(x, SCHED, TinyFamily.constant(1))
    prof = profile_of(x, SCHED)
    assert all(v <= 1 for v in prof.values)
    # a word with a fat block 4 fails the constant-1 family
    digits = list(x.digits)
    digits[16:20] = [2, 2, 2, 2]
    fat = TernaryPoint(tuple(digits))
    assert not in_T_surrogate(fat, SCHED, TinyFamily.constant(1))


@given(st.integers(0, 30), st.integers(1, 3))
@settings(max_examples=60)
def test_exponent_monotone_eventually(k, q):
    # within the stored table, once negative at the threshold it stays negative
    k0 = exponent_threshold(q, SCHED)
    kmax = SCHED.levels - 3
    for kk in range(k0, kmax + 1):
        assert exponent(kk, q, SCHED) < 0
