from fractions import Fraction

import pytest

from dforge.dspace import FuncRep
from dforge.engine import (
    ONE,
    Condition,
    Height,
    HeightConflict,
    LabeledPoint,
    NoAdmissiblePoint,
    NotClose,
    Pair,
    advance,
    amalgamate,
    compatible,
    compute_zeta,
    extend_with_target,
    feasible_window,
    leq,
    make_pair,
    run_construction,
    validate,
    zeta_close,
)
from dforge.rint import Enclosure, fraction_of, rounder

R = rounder(256)


def base_condition(e1: Fraction) -> Condition:
    # two pinned pairs over the bare base stack
    return Condition(
        (make_pair(0, 0, 0), make_pair(1, e1, 0, d_offset=3, e_offset=2)),
        0,
        FuncRep(),
    )


P_OK = base_condition(Fraction(3, 10))


def test_validate_trivial_condition():
    assert validate(ONE).ok


def test_validate_frozen_slope_gap_pass():
    # e=0.3 over f0(1) = 1 - pi/4 leaves slope ~0.08540, inside (0, 1/4)
    assert validate(P_OK).ok


def test_validate_frozen_slope_gap_fail():
    # e=0.9 leaves ~0.68540 >= 1/4
    report = validate(base_condition(Fraction(9, 10)))
    assert not report.ok
    assert [c.name for c in report.failed()] == ["slope-windows"]


def test_validate_rejects_misordered_values():
    cond = Condition(
        (make_pair(0, 0, 0), make_pair(1, Fraction(-1, 10), 0, d_offset=3, e_offset=2)),
        0,
        FuncRep(),
    )
    names = [c.name for c in validate(cond).failed()]
    assert "order-bijection" in names


def test_validate_rejects_duplicate_point_heights():
    cond = Condition(
        (make_pair(0, 0, 0), make_pair(1, Fraction(3, 10), 0, d_offset=1, e_offset=0)),
        0,
        FuncRep(),
    )
    names = [c.name for c in validate(cond).failed()]
    assert "label-distinctness" in names


def test_compute_zeta_frozen_trivial():
    # single point: modulus and gap entries are slack, the configured cap binds
    assert compute_zeta(ONE) == Fraction(1, 1 << 16)


def test_compute_zeta_frozen_two_points():
    # L=2, N=0: the 2L * zeta^(1/8) <= 2^-4 entry forces zeta <= 2^-48
    assert compute_zeta(P_OK) == Fraction(1, 1 << 48)


def test_compute_zeta_below_half_min_gap():
    for cond in (ONE, P_OK):
        z = compute_zeta(cond)
        dom = cond.domain
        if len(dom) >= 2:
            mu = min(b - a for a, b in zip(dom, dom[1:]))
            assert z < mu / 2


def test_zeta_close_self():
    z = compute_zeta(P_OK)
    assert zeta_close(P_OK, P_OK, z)
    assert zeta_close(ONE, ONE, compute_zeta(ONE))


def test_zeta_close_perturbed_pair():
    z = compute_zeta(P_OK)
    q = Condition(
        (
            make_pair(0, 0, 0),
            make_pair(1 + z / 4, Fraction(3, 10) + z * z / 8, 0, d_offset=5, e_offset=4),
        ),
        0,
        FuncRep(),
    )
    assert zeta_close(P_OK, q, z)


def test_zeta_close_negative_slope():
    z = compute_zeta(P_OK)
    q = Condition(
        (
            make_pair(0, 0, 0),
            make_pair(1 + z / 4, Fraction(3, 10) - z * z / 8, 0, d_offset=5, e_offset=4),
        ),
        0,
        FuncRep(),
    )
    assert not zeta_close(P_OK, q, z)


def test_zeta_close_same_point_needs_same_pair():
    z = compute_zeta(P_OK)
    q = Condition(
        (make_pair(0, 0, 0), make_pair(1, Fraction(3, 10), 0, d_offset=5, e_offset=4)),
        0,
        FuncRep(),
    )
    # matched point with fresh labels is a different pair, not a zeta-move
    assert not zeta_close(P_OK, q, z)


def test_advance_trivial():
    s = advance(ONE)
    assert s.N == 1
    assert len(s.rep.layers) == 1
    assert validate(s).ok
    g0 = s.rep.g_enclosure(Enclosure.exact(R, 0))
    assert fraction_of(g0.lo) == 0 and fraction_of(g0.hi) == 0
    assert leq(s, ONE)


def test_advance_two_point_condition_q3():
    s = advance(P_OK)
    assert s.N == 1 and validate(s).ok
    g1 = s.rep.g_enclosure(Enclosure.exact(R, 1))
    assert 0 < fraction_of(g1.lo) and fraction_of(g1.hi) < Fraction(1, 2)
    assert leq(s, P_OK)


def test_amalgamate_rejects_non_close():
    q = base_condition(Fraction(2, 5))
    with pytest.raises(NotClose):
        amalgamate(P_OK, q)


def test_leq_reflexive_and_chain():
    s1 = advance(ONE)
    s2 = advance(s1)
    assert leq(ONE, ONE) and leq(s1, s1)
    assert leq(s2, s1) and leq(s1, ONE)
    assert leq(s2, ONE)  # transitive closure holds directly
    assert not leq(ONE, s1)


def test_leq_mismatched_layers():
    # same stage count, comparable domains, different stage-0 kernels
    s_one = advance(ONE)
    s_two = advance(P_OK)
    assert not leq(s_two, s_one)


DPOOL = [
    LabeledPoint(Fraction(k, 1 << 12), Height(Fraction(0), k + 2))
    for k in range(4096, 6145)
]
E_TARGET = LabeledPoint(Fraction(3, 10), Height(Fraction(0), 1))


def test_extend_with_target_hits_preimage():
    q = extend_with_target(ONE, E_TARGET, DPOOL)
    assert validate(q).ok
    new = [pr for pr in q.sigma if pr.d.value != 0]
    assert len(new) == 1
    # f0(x) = x - arctan(x) = 0.3 at x ~ 1.1587; pool step 2^-12
    assert abs(new[0].d.value - Fraction(11587, 10000)) < Fraction(1, 100)
    assert new[0].e.value == Fraction(3, 10)


def test_extend_rejects_realized_value():
    q = extend_with_target(ONE, E_TARGET, DPOOL)
    again = LabeledPoint(Fraction(3, 10), Height(Fraction(0), 9000))
    with pytest.raises(ValueError):
        extend_with_target(q, again, DPOOL)


def test_extend_empty_pool_reports_window():
    with pytest.raises(NoAdmissiblePoint) as exc:
        extend_with_target(ONE, E_TARGET, [])
    assert exc.value.radius is not None and exc.value.radius > 0


def test_extend_all_label_clashes():
    clash = [LabeledPoint(Fraction(11587, 10000), Height(Fraction(0), 1))]
    with pytest.raises(HeightConflict):
        extend_with_target(ONE, E_TARGET, clash)


def test_feasible_window_pinned_point():
    with pytest.raises(NoAdmissiblePoint):
        feasible_window(P_OK, 1)


def test_compatible_examples():
    assert compatible([(0, 0)], [(1, Fraction(1, 2))], lambda t: t)
    assert not compatible([(0, 0)], [(1, Fraction(-1, 2))], lambda t: t)
    assert not compatible([(0, 0)], [(2, 3)], lambda t: t)  # increment over phi
    with pytest.raises(ZeroDivisionError):
        compatible([(0, 0)], [(0, Fraction(1, 2))], lambda t: t)


def test_run_construction_single_round():
    res = run_construction([Fraction(3, 10)], rounds=1)
    assert res.condition.N == 1
    assert validate(res.condition).ok
    (d, e), = res.realized
    fd = res.rep.f_enclosure(Enclosure.exact(R, d))
    err = max(abs(fraction_of(fd.lo) - e), abs(fraction_of(fd.hi) - e))
    assert err <= Fraction(1, 1 << 30)
