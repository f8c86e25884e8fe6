from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dforge.apcalc import KernelSum
from dforge.corrector import (
    Indeterminate,
    MassOutOfRange,
    PinnedPointConflict,
    build_correction,
    correctable,
    correctable_report,
    correction_bumps,
    fill_gap,
    structurally_sound,
)
from dforge.dspace import FuncRep, Layer, ThetaLayer
from dforge.rint import Enclosure, rounder

R = rounder(256)
IOTA = Fraction(1, 4)
BASE = FuncRep()


def enc(v):
    return Enclosure.exact(R, Fraction(v))


def test_structural_checks():
    assert structurally_sound([(0, 0), (1, Fraction(3, 10))])
    assert not structurally_sound([(1, Fraction(3, 10))])  # origin missing
    assert not structurally_sound([(0, 0), (1, 0)])  # heights not injective
    assert not structurally_sound([(0, 0), (1, Fraction(1, 2)), (2, Fraction(1, 4))])
    assert not structurally_sound([])


def test_correctable_frozen_pass():
    # target 0.3 over f(1) = 1 - pi/4 leaves slope ~0.08540 in (0, 1/4)
    assert correctable([(0, 0), (1, Fraction(3, 10))], BASE, IOTA)


def test_correctable_frozen_fail():
    # target 0.9 leaves ~0.68540 >= 1/4
    assert not correctable([(0, 0), (1, Fraction(9, 10))], BASE, IOTA)


def test_correctable_needs_positive_gap():
    # target below f(1): slope negative
    assert not correctable([(0, 0), (1, Fraction(1, 5))], BASE, IOTA)


def test_correctable_boundary_exact_rational():
    # with kappa = 0 and const = 1, f(x) = x exactly; slope == iota is FAIL
    rep = FuncRep(kappa=Fraction(0), const=Fraction(1))
    assert not correctable([(0, 0), (1, Fraction(5, 4))], rep, IOTA)
    assert correctable([(0, 0), (1, Fraction(9, 8))], rep, IOTA)


def test_correctable_indeterminate_at_precision_cap():
    with pytest.raises(Indeterminate):
        correctable([(0, 0), (1, Fraction(3, 10))], BASE, IOTA, prec=4, max_prec=4)


def test_report_details():
    rpt = correctable_report([(0, 0), (1, Fraction(3, 10)), (2, Fraction(21, 20))], BASE, IOTA)
    assert rpt.ok
    assert len(rpt.gaps) == 2
    assert all(0 < g.slope_lo <= g.slope_hi < 0.25 for g in rpt.gaps)
    assert abs(rpt.gaps[0].slope_hi - 0.0853981634) < 1e-9


# -- gap filling -------------------------------------------------------------


def test_fill_gap_frozen_geometry():
    bump = fill_gap(0, 1, Fraction(1, 1000), Fraction(1, 100))
    assert bump.mass() == Fraction(1, 1000)
    assert bump.height == Fraction(192, 166075)
    assert bump.height <= Fraction(4, 1000)
    lo, hi = bump.support
    assert lo == Fraction(1, 1024) and hi == 1 - Fraction(1, 1024)


def test_fill_gap_mass_window():
    with pytest.raises(MassOutOfRange):
        fill_gap(0, 1, Fraction(1, 100), Fraction(1, 100))  # mass == iota * w
    with pytest.raises(MassOutOfRange):
        fill_gap(0, 1, Fraction(0), Fraction(1, 100))
    with pytest.raises(MassOutOfRange):
        fill_gap(0, 2, Fraction(3, 100), Fraction(1, 100))


@given(
    st.fractions(min_value=Fraction(-8), max_value=Fraction(8)),
    st.fractions(min_value=Fraction(1, 64), max_value=Fraction(8)),
    st.integers(1, 63),
)
def test_fill_gap_properties(lo, width, t64):
    hi = lo + width
    iota = Fraction(1, 4)
    mass = iota * width * Fraction(t64, 64)
    bump = fill_gap(lo, hi, mass, iota)
    assert bump.mass() == mass
    assert bump.height < iota
    s_lo, s_hi = bump.support
    assert lo < s_lo < s_hi < hi


def test_build_correction_zero_mass_and_split():
    fills = build_correction(
        [0, 1], [Fraction(1, 1000)], Fraction(1, 100), interior=[Fraction(1, 3)]
    )
    assert len(fills) == 2
    assert fills[0].mass == Fraction(1, 3000)
    assert fills[1].mass == Fraction(2, 3000)
    assert sum(f.bump.mass() for f in fills) == Fraction(1, 1000)
    quiet = build_correction([0, 1, 2], [0, Fraction(1, 1000)], Fraction(1, 100))
    assert quiet[0].bump is None and quiet[1].bump is not None


def test_build_correction_guards():
    with pytest.raises(ValueError):
        build_correction([1, 0], [Fraction(1, 1000)], Fraction(1, 100))
    with pytest.raises(ValueError):
        build_correction([0, 1], [], Fraction(1, 100))
    with pytest.raises(MassOutOfRange):
        build_correction([0, 1], [Fraction(-1, 1000)], Fraction(1, 100))
    with pytest.raises(ValueError):
        build_correction([0, 1], [Fraction(1, 1000)], Fraction(1, 100), interior=[2])


def test_pinned_point_conflict():
    with pytest.raises(PinnedPointConflict):
        build_correction(
            [0, 1], [Fraction(1, 1000)], Fraction(1, 100), extra_pins=[Fraction(1, 2)]
        )
    # a pin exactly on the support edge is allowed
    fills = build_correction(
        [0, 1], [Fraction(1, 1000)], Fraction(1, 100), extra_pins=[Fraction(1, 1024)]
    )
    assert fills[0].bump is not None


def test_correction_end_to_end():
    points = [(Fraction(0), Fraction(0)), (Fraction(1), Fraction(3, 10))]
    mass = Fraction(853, 10000)
    fills = build_correction([0, 1], [mass], IOTA)
    layer = Layer(KernelSum(()), ThetaLayer(clip=False, eps=Fraction(0), bumps=correction_bumps(fills)))
    lifted = BASE.with_layer(layer)

    # pinned endpoints did not move
    g0 = lifted.g_enclosure(enc(0))
    assert g0.lo == 0 and g0.hi == 0
    base_g1 = BASE.g_enclosure(enc(1))
    lift_g1 = lifted.g_enclosure(enc(1))
    assert base_g1.lo == lift_g1.lo and base_g1.hi == lift_g1.hi
    f0 = lifted.f_enclosure(enc(0))
    assert f0.lo == 0 and f0.hi == 0

    # f(1) rose by exactly the mass and still sits under the target
    before = BASE.f_enclosure(enc(1))
    after = lifted.f_enclosure(enc(1))
    gained = after - before
    assert gained.contains(mass)
    assert float(gained.width) < 1e-60
    assert after.certainly_lt(Fraction(3, 10))
    residual = Enclosure.exact(R, Fraction(3, 10)) - after
    assert residual.certainly_gt(0)
    assert residual.certainly_lt(Fraction(1, 1000))

    # and the lifted rep is still correctable toward the same target
    assert correctable(points, lifted, IOTA)
