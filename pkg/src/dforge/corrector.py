"""Correctability and mass-conserving corrections.

A correction lifts a represented f so it passes just under a finite set of
targets: per gap between adjacent targets the deficit is filled by one
plateau bump whose mass equals the requested rational mass exactly and whose
height stays strictly below the slope cap iota.  Supports keep a guarded
margin away from the gap endpoints (the pinned points), so pinned values of
g and f never move by construction.

The predicate `correctable` asks, per adjacent target pair, whether the
leftover slope (delta e - delta f)/(delta d) lies strictly inside (0, iota);
summing the per-gap deficits telescopes the same window to every pair, so
adjacent pairs are all that is checked.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

from dforge.dspace import FuncRep, PiecewiseBump, plateau_bump
from dforge.rint import Decision, Enclosure, decide_in_open, rounder

Rational = Union[int, Fraction]
Point = tuple[Fraction, Fraction]


class Indeterminate(Exception):
    """The slope window could not be decided at the precision cap."""


class MassOutOfRange(Exception):
    """A requested gap mass is outside the open interval (0, iota * width)."""


class PinnedPointConflict(Exception):
    """A pinned point would land inside a correction bump's support."""


def _norm_points(points: Sequence[tuple[Rational, Rational]]) -> tuple[Point, ...]:
    out = tuple((Fraction(d), Fraction(e)) for d, e in points)
    return tuple(sorted(out))


def structurally_sound(points: Sequence[tuple[Rational, Rational]]) -> bool:
    """Finite, contains (0, 0), and is an order-preserving bijection."""
    pts = _norm_points(points)
    if not pts or (Fraction(0), Fraction(0)) not in pts:
        return False
    for (d0, e0), (d1, e1) in zip(pts, pts[1:]):
        if d0 == d1 or e0 >= e1:
            return False
    return True


@dataclass(frozen=True)
class GapReport:
    lo: Point
    hi: Point
    slope_lo: float
    slope_hi: float
    decision: Decision


@dataclass(frozen=True)
class CorrectabilityReport:
    points: tuple[Point, ...]
    iota: Fraction
    sound: bool
    gaps: tuple[GapReport, ...]

    @property
    def ok(self) -> bool:
        return self.sound and all(g.decision is Decision.PASS for g in self.gaps)


def correctable_report(
    points: Sequence[tuple[Rational, Rational]],
    rep: FuncRep,
    iota: Rational,
    stage: Optional[int] = None,
    prec: int = 256,
    max_prec: int = 1 << 13,
) -> CorrectabilityReport:
    """Check every adjacent pair for 0 < (delta e - delta f)/delta d < iota.

    Indeterminate gaps are retried at doubled precision up to max_prec and
    raise Indeterminate if still undecided.
    """
    iota = Fraction(iota)
    if iota <= 0:
        raise ValueError("iota must be positive")
    pts = _norm_points(points)
    sound = structurally_sound(points)
    gaps: list[GapReport] = []
    if sound:
        for (d0, e0), (d1, e1) in zip(pts, pts[1:]):
            p = prec
            while True:
                R = rounder(p)
                df = rep.f_increment(d0, d1, stage=stage, R=R)
                slope = (Enclosure.exact(R, e1 - e0) - df) / Enclosure.exact(R, d1 - d0)
                decision = decide_in_open(slope, 0, iota)
                if decision is not Decision.INDET or p >= max_prec:
                    break
                p *= 2
            gaps.append(
                GapReport(
                    lo=(d0, e0),
                    hi=(d1, e1),
                    slope_lo=float(slope.lo),
                    slope_hi=float(slope.hi),
                    decision=decision,
                )
            )
    return CorrectabilityReport(points=pts, iota=iota, sound=sound, gaps=tuple(gaps))


def correctable(
    points: Sequence[tuple[Rational, Rational]],
    rep: FuncRep,
    iota: Rational,
    stage: Optional[int] = None,
    prec: int = 256,
    max_prec: int = 1 << 13,
) -> bool:
    report = correctable_report(points, rep, iota, stage, prec, max_prec)
    if not report.sound:
        return False
    if any(g.decision is Decision.INDET for g in report.gaps):
        bad = [g for g in report.gaps if g.decision is Decision.INDET][0]
        raise Indeterminate(
            f"slope window undecided over [{float(bad.lo[0]):.6g}, {float(bad.hi[0]):.6g}]"
        )
    return report.ok


# -- correction geometry ----------------------------------------------------


@dataclass(frozen=True)
class GapFill:
    lo: Fraction
    hi: Fraction
    mass: Fraction
    bump: Optional[PiecewiseBump]


def fill_gap(lo: Rational, hi: Rational, mass: Rational, iota: Rational) -> PiecewiseBump:
    """One plateau bump inside (lo, hi) of exactly the given mass.

    Margins keep the support min(width/2^10, slack/(8 iota)) clear of both
    endpoints; the edge width is capped so the exact-height identity
    h = mass/(w' - (16/15) edge) stays strictly below iota.
    """
    lo, hi, mass, iota = Fraction(lo), Fraction(hi), Fraction(mass), Fraction(iota)
    w = hi - lo
    if w <= 0:
        raise ValueError("empty gap")
    if iota <= 0:
        raise ValueError("iota must be positive")
    if not 0 < mass < iota * w:
        raise MassOutOfRange(f"mass {mass} outside (0, {iota * w}) for width {w}")
    slack = iota * w - mass
    margin = min(w / 2**10, slack / (8 * iota))
    a = lo + margin
    b = hi - margin
    w2 = b - a
    slack2 = iota * w2 - mass  # >= (3/4) slack > 0
    edge = min(w2 / 8, Fraction(15, 32) * slack2 / iota)
    height = mass / (w2 - Fraction(16, 15) * edge)
    bump = plateau_bump(a, b, edge, height)
    assert bump.mass() == mass
    assert height < iota
    return bump


def build_correction(
    domain: Sequence[Rational],
    masses: Sequence[Rational],
    iota: Rational,
    interior: Sequence[Rational] = (),
    extra_pins: Sequence[Rational] = (),
) -> tuple[GapFill, ...]:
    """Fill each gap of the sorted domain with its requested mass.

    A zero mass leaves the gap untouched.  Interior points subdivide the gap
    that contains them, splitting the mass in proportion to subwidths (the
    mass/width ratio, hence positivity of the sub-slacks, is preserved).
    extra_pins must not end up inside any bump support.
    """
    iota = Fraction(iota)
    dom = [Fraction(d) for d in domain]
    if sorted(dom) != dom or len(set(dom)) != len(dom):
        raise ValueError("domain must be strictly increasing")
    if len(masses) != len(dom) - 1:
        raise ValueError("need one mass per gap")
    inner = sorted(Fraction(p) for p in interior)
    for p in inner:
        if p in dom:
            raise ValueError(f"interior point {p} duplicates a domain point")
        if not dom[0] < p < dom[-1]:
            raise ValueError(f"interior point {p} outside the domain hull")
    pins = [Fraction(p) for p in extra_pins]

    fills: list[GapFill] = []
    for (lo, hi), mass in zip(zip(dom, dom[1:]), (Fraction(m) for m in masses)):
        if mass < 0:
            raise MassOutOfRange(f"negative mass {mass}")
        cuts = [p for p in inner if lo < p < hi]
        ends = [lo, *cuts, hi]
        if mass == 0:
            fills.extend(GapFill(a, b, Fraction(0), None) for a, b in zip(ends, ends[1:]))
            continue
        if mass >= iota * (hi - lo):
            raise MassOutOfRange(f"mass {mass} too heavy for gap [{lo}, {hi}]")
        for a, b in zip(ends, ends[1:]):
            sub_mass = mass * (b - a) / (hi - lo)
            bump = fill_gap(a, b, sub_mass, iota)
            s_lo, s_hi = bump.support
            for p in pins:
                if s_lo < p < s_hi:
                    raise PinnedPointConflict(
                        f"pin {float(p):.6g} inside bump support "
                        f"[{float(s_lo):.6g}, {float(s_hi):.6g}]"
                    )
            fills.append(GapFill(a, b, sub_mass, bump))
    return tuple(fills)


def correction_bumps(fills: Sequence[GapFill]) -> tuple[PiecewiseBump, ...]:
    return tuple(f.bump for f in fills if f.bump is not None)
