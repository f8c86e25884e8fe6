import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dforge.ternary import (
    BlockSchedule,
    EqualWithinDepth,
    InsufficientDepth,
    TernaryPoint,
    block,
    block_digit,
    delta,
    ell,
    pair_phi,
    unpair,
)

words = st.lists(st.sampled_from([0, 2]), min_size=1, max_size=60).map(
    lambda ds: TernaryPoint(tuple(ds))
)


def test_point_validation():
    with pytest.raises(ValueError):
        TernaryPoint((1,))
    with pytest.raises(ValueError):
        TernaryPoint(())
    p = TernaryPoint((2, 0, 2))
    assert p.depth == 3
    assert p.value() == 2 + Fraction(2, 9)


def test_word_roundtrip():
    p = TernaryPoint((2, 0, 2, 2, 0))
    assert p.word_str() == "2.0220"
    assert TernaryPoint.parse("2.0220") == p
    assert TernaryPoint.parse("0") == TernaryPoint((0,))


def test_digit_depth_guard():
    p = TernaryPoint((0, 2))
    with pytest.raises(InsufficientDepth):
        p.digit(2)


def test_delta_basic():
    x = TernaryPoint((0, 2, 2, 0))
    y = TernaryPoint((0, 2, 0, 0))
    assert delta(x, y) == 2
    with pytest.raises(EqualWithinDepth):
        delta(x, x)
    with pytest.raises(EqualWithinDepth):
        delta(x, TernaryPoint((0, 2)))  # agree on the stored common part


@given(words, words)
@settings(max_examples=300)
def test_delta_distance_bounds(x, y):
    # 3^-delta <= |x - y| <= 3^(-delta+1), with unstored tails read as 0:
    # pad to a common depth so value() and delta() see the same words.
    n = max(x.depth, y.depth)
    xp = TernaryPoint(x.digits + (0,) * (n - x.depth))
    yp = TernaryPoint(y.digits + (0,) * (n - y.depth))
    try:
        d = delta(xp, yp)
    except EqualWithinDepth:
        assert xp.value() == yp.value()
        return
    gap = abs(xp.value() - yp.value())
    assert Fraction(1, 3**d) <= gap <= Fraction(3, 3**d)


def test_schedule_minimal_prefix():
    s = BlockSchedule.minimal(6)
    assert s.gamma == (0, 1, 2, 4, 16, 256)
    s7 = BlockSchedule.minimal(7)
    assert s7.gamma[6] == 256 * 256


def test_schedule_validation():
    with pytest.raises(ValueError):
        BlockSchedule((1, 2))
    with pytest.raises(ValueError):
        BlockSchedule((0, 2, 2))
    with pytest.raises(ValueError):
        BlockSchedule((0, 3, 8))  # 8 < 9


def test_blocks_and_ell():
    s = BlockSchedule.minimal(6)
    digits = [0] * 256
    digits[0] = 2          # block 0 = positions [0, 1)
    digits[2] = 2          # block 2 = positions [2, 4)
    digits[16] = 2
    digits[17] = 2         # block 4 = positions [16, 256)
    x = TernaryPoint(tuple(digits))
    assert block(x, 0, s) == (2,)
    assert block(x, 1, s) == (0,)
    assert block(x, 2, s) == (2, 0)
    assert block(x, -1, s) == ()
    assert block_digit(x, -3, 11, s) == 0
    assert block_digit(x, 2, 0, s) == 2
    assert block_digit(x, 2, 99, s) == 0  # past the block end reads 0
    assert ell(x, 2, s) == 1
    assert ell(x, 4, s) == 2
    assert ell(x, 3, s) == 0
    assert ell(x, -1, s) == 0


def test_block_depth_guard():
    s = BlockSchedule.minimal(6)
    x = TernaryPoint((2, 0, 2))
    with pytest.raises(InsufficientDepth):
        block(x, 2, s)  # needs digits up to position 3
    with pytest.raises(InsufficientDepth):
        s.block_len(5)  # gamma(6) not stored


def test_pairing_frozen_values():
    assert pair_phi(0, 0) == 0
    assert pair_phi(0, 1) == 1
    assert pair_phi(1, 1) == 2
    assert pair_phi(1, 0) == 3
    assert pair_phi(0, 2) == 4
    assert pair_phi(2, 0) == 8


@given(st.integers(0, 400), st.integers(0, 400))
def test_pairing_shell_bounds(i, j):
    m = max(i, j)
    assert m * m <= pair_phi(i, j) < (m + 1) * (m + 1)


@given(st.integers(0, 200_000))
def test_pairing_bijection(n):
    i, j = unpair(n)
    assert pair_phi(i, j) == n


@given(st.integers(0, 300), st.integers(0, 300))
def test_pairing_injective_roundtrip(i, j):
    assert unpair(pair_phi(i, j)) == (i, j)


def test_level_of():
    s = BlockSchedule.minimal(6)
    assert s.level_of(0) == 0
    assert s.level_of(1) == 1
    assert s.level_of(3) == 2
    assert s.level_of(255) == 4
    with pytest.raises(InsufficientDepth):
        s.level_of(256)
