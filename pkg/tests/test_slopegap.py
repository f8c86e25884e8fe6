import itertools
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dforge.slopegap import (
    BoxSchedule,
    BoxTree,
    Classification,
    NotInTree,
    SameLeaf,
    ScheduleViolation,
    build_pair,
    classify_pair,
    delta_for_eps,
    slope,
)


def test_geometric_schedule_valid():
    s = BoxSchedule.geometric(10, 4)
    assert s.p[1] == Fraction(1, 100)
    assert s.q[1] == Fraction(1, 1000)


def test_schedule_violations():
    with pytest.raises(ScheduleViolation):
        BoxSchedule((Fraction(1), Fraction(1, 2)), (Fraction(2), Fraction(1, 4)))
    with pytest.raises(ScheduleViolation):  # 2*p1 < p0 fails
        BoxSchedule(
            (Fraction(1), Fraction(1, 2)),
            (Fraction(3, 4), Fraction(1, 4)),
        )
    with pytest.raises(ScheduleViolation):  # q/p ratio increases
        BoxSchedule(
            (Fraction(1), Fraction(1, 10)),
            (Fraction(1, 100), Fraction(1, 50)),
        )


def test_slope_bounds_frozen_ratio10():
    s = BoxSchedule.geometric(10, 4)
    assert s.small_max(1) == Fraction(25, 245)
    assert s.large_min(1) == Fraction(98, 10)
    # same constants at every level of a geometric schedule
    assert s.small_max(0) == Fraction(25, 245) == Fraction(5, 49)
    assert s.large_min(2) == Fraction(49, 5)


def test_small_max_below_large_min():
    s = BoxSchedule.geometric(10, 5)
    for n in range(4):
        assert s.small_max(n) < s.large_min(n)
    a = BoxSchedule.accelerating(3, 6)
    for n in range(5):
        assert a.small_max(n) < a.large_min(n)


def test_accelerating_bounds_run_away():
    s = BoxSchedule.accelerating(10, 6)
    for n in range(4):
        assert s.small_max(n + 1) < s.small_max(n)
        assert s.large_min(n + 1) > s.large_min(n)


def test_tree_intervals_nested_at_ends():
    t = build_pair(BoxSchedule.geometric(10, 4), depth=3)
    a, b = t.h_interval(())
    assert (a, b) == (0, 1)
    a0, b0 = t.h_interval((0,))
    a1, b1 = t.h_interval((1,))
    assert a0 == a and b1 == b
    assert b0 - a0 == Fraction(1, 100) == b1 - a1
    assert b0 < a1
    va, vb = t.v_interval((1, 0))
    assert vb - va == Fraction(1, 100_000)


def test_locate_and_gaps():
    t = build_pair(BoxSchedule.geometric(10, 4), depth=2)
    assert t.locate_h(Fraction(0)) == (0, 0)
    assert t.locate_h(Fraction(1)) == (1, 1)
    with pytest.raises(NotInTree):
        t.locate_h(Fraction(1, 2))  # in the level-0 gap
    with pytest.raises(NotInTree):
        t.locate_h(Fraction(2))


def test_classify_large_and_small():
    t = build_pair(BoxSchedule.geometric(10, 4), depth=3)
    # same I-child at level 0, different J-children there: large
    p0 = (t.h_interval((0, 0, 0))[0], t.v_interval((0, 0, 0))[0])
    p1 = (t.h_interval((0, 0, 1))[0], t.v_interval((1, 0, 0))[0])
    cls, n = classify_pair(t, p0, p1)
    assert cls is Classification.LARGE and n == 0
    # different I-children at level 0: small, whatever the J-children do
    p2 = (t.h_interval((1, 0, 0))[0], t.v_interval((1, 0, 0))[0])
    cls, n = classify_pair(t, p0, p2)
    assert cls is Classification.SMALL and n == 0
    with pytest.raises(SameLeaf):
        classify_pair(t, p0, (t.h_interval((0, 0, 0))[1], t.v_interval((0, 0, 0))[1]))


def _exhaustive_corner_check(tree: BoxTree, level: int):
    pts = tree.grid_corners(level)
    seen = 0
    for pt0, pt1 in itertools.combinations(pts, 2):
        if pt0[0] == pt1[0] or pt0[1] == pt1[1]:
            continue
        try:
            cls, n = classify_pair(tree, pt0, pt1)
        except SameLeaf:
            continue
        m = abs(slope(pt0, pt1))
        lo = tree.sched.small_max(n)
        hi = tree.sched.large_min(n)
        assert not (lo < m < hi), f"{pt0} {pt1} slope {m} inside ({lo}, {hi})"
        if cls is Classification.SMALL:
            assert m <= lo
        else:
            assert m >= hi
        seen += 1
    return seen


def test_exhaustive_corners_depth3():
    t = build_pair(BoxSchedule.geometric(10, 4), depth=3)
    # 16 corner abscissae x 16 corner ordinates; distinct-coordinate,
    # distinct-leaf pairs all satisfy the dichotomy
    assert _exhaustive_corner_check(t, 3) > 20_000


def test_translation_invariance():
    s = BoxSchedule.geometric(10, 4)
    t0 = build_pair(s, depth=3)
    t1 = build_pair(s, depth=3, h_origin=Fraction(7, 3), v_origin=Fraction(-5, 2))
    pts0 = t0.grid_corners(2)
    pts1 = t1.grid_corners(2)
    for a0, b0, a1, b1 in zip(pts0, pts0[1:], pts1, pts1[1:]):
        if a0[0] == b0[0] or a0[1] == b0[1]:
            continue
        try:
            c0 = classify_pair(t0, a0, b0)
        except SameLeaf:
            with pytest.raises(SameLeaf):
                classify_pair(t1, a1, b1)
            continue
        assert c0 == classify_pair(t1, a1, b1)


def test_delta_for_eps_accelerating():
    s = BoxSchedule.accelerating(10, 6)
    eps = Fraction(1, 1000)
    delta, n = delta_for_eps(s, eps)
    assert delta > 0 and n >= 1
    # every close-enough distinct-coordinate corner pair clears (eps, 1/eps)
    t = build_pair(s, depth=5)
    pts = t.grid_corners(4)
    checked = 0
    for pt0, pt1 in itertools.combinations(pts, 2):
        if pt0[0] == pt1[0] or pt0[1] == pt1[1]:
            continue
        if abs(pt0[0] - pt1[0]) >= delta or abs(pt0[1] - pt1[1]) >= delta:
            continue
        try:
            cls, m = classify_pair(t, pt0, pt1)
        except SameLeaf:
            continue
        assert m >= n
        g = abs(slope(pt0, pt1))
        assert g <= eps or g >= 1 / eps
        checked += 1
    assert checked > 0


def test_delta_for_eps_needs_decay():
    s = BoxSchedule.geometric(10, 6)
    with pytest.raises(ScheduleViolation):
        delta_for_eps(s, Fraction(1, 1000))


@given(st.integers(2, 12), st.integers(0, 2))
@settings(max_examples=40)
def test_geometric_bounds_formulae(ratio, n):
    s = BoxSchedule.geometric(ratio, 5)
    r = Fraction(ratio)
    assert s.small_max(n) == (1 / r) / (1 - 2 / r**2)
    assert s.large_min(n) == (1 / r - 2 / r**3) * r**2
