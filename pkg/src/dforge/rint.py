"""Directed-rounding interval arithmetic on gmpy2.

Every certified inequality in this package is decided through an Enclosure:
a pair (lo, hi) of mpfr values with lo <= x <= hi guaranteed by outward
rounding.  Two persistent contexts per precision (round-down, round-up) do
all the work; exact rationals enter through mpq so no silent rounding can
happen on construction.

Decision policy: a strict inequality is PASS/FAIL only when the enclosure
clears the bound by more than four times its own width; anything tighter is
INDET and the caller either refines precision or reports Indeterminate.
"""

from __future__ import annotations

import enum
from fractions import Fraction
from typing import Callable, Union

import gmpy2
from gmpy2 import mpfr, mpq

Rational = Union[int, Fraction]

_ROUNDERS: dict[int, "Rounder"] = {}


class Rounder:
    """Paired round-down / round-up contexts at a fixed precision."""

    __slots__ = ("prec", "dn", "up", "one")

    def __init__(self, prec: int) -> None:
        self.prec = prec
        self.dn = gmpy2.context(precision=prec, round=gmpy2.RoundDown)
        self.up = gmpy2.context(precision=prec, round=gmpy2.RoundUp)
        # Multiplying by this exact mpfr 1 is the safe mpq -> mpfr injection
        # (mpq * mpq would stay exact mpq and defeat bounded precision).
        self.one = mpfr(1)

    def __repr__(self) -> str:
        return f"Rounder(prec={self.prec})"


def rounder(prec: int) -> Rounder:
    r = _ROUNDERS.get(prec)
    if r is None:
        r = _ROUNDERS[prec] = Rounder(prec)
    return r


def fraction_of(x: mpfr) -> Fraction:
    """Exact value of a finite mpfr as a Fraction."""
    n, d = x.as_integer_ratio()
    # as_integer_ratio returns mpz; mpq() rejects Fractions built on them
    return Fraction(int(n), int(d))


class Decision(enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    INDET = "indeterminate"


class Enclosure:
    """Closed interval [lo, hi] of mpfr, outward-rounded through a Rounder.

    Domain intervals (x-ranges) may carry infinite endpoints; value
    enclosures produced by the arithmetic here stay finite unless the
    inputs were infinite.
    """

    __slots__ = ("R", "lo", "hi")

    def __init__(self, R: Rounder, lo: mpfr, hi: mpfr) -> None:
        self.R = R
        self.lo = lo
        self.hi = hi
        if gmpy2.is_nan(lo) or gmpy2.is_nan(hi):
            raise ValueError("NaN endpoint in enclosure")
        if lo > hi:
            raise ValueError(f"inverted enclosure [{lo}, {hi}]")

    # -- construction -------------------------------------------------

    @staticmethod
    def exact(R: Rounder, v: Rational) -> "Enclosure":
        q = mpq(v)
        return Enclosure(R, R.dn.mul(q, R.one), R.up.mul(q, R.one))

    @staticmethod
    def hull2(a: "Enclosure", b: "Enclosure") -> "Enclosure":
        return Enclosure(a.R, min(a.lo, b.lo), max(a.hi, b.hi))

    @staticmethod
    def interval(R: Rounder, lo: Rational, hi: Rational) -> "Enclosure":
        a = Enclosure.exact(R, lo)
        b = Enclosure.exact(R, hi)
        return Enclosure(R, a.lo, b.hi)

    @staticmethod
    def ray(R: Rounder, lo: Rational) -> "Enclosure":
        """[lo, +inf), for tail certification."""
        a = Enclosure.exact(R, lo)
        return Enclosure(R, a.lo, mpfr("inf"))

    def __repr__(self) -> str:
        return f"Enc[{self.lo!s}, {self.hi!s}]"

    # -- basic queries -------------------------------------------------

    @property
    def width(self) -> mpfr:
        return self.R.up.sub(self.hi, self.lo)

    def mid_fraction(self) -> Fraction:
        if gmpy2.is_infinite(self.lo) or gmpy2.is_infinite(self.hi):
            raise ValueError("midpoint of infinite enclosure")
        return (fraction_of(self.lo) + fraction_of(self.hi)) / 2

    def is_point(self) -> bool:
        return self.lo == self.hi

    def contains(self, v: Rational) -> bool:
        q = mpq(v)
        return self.lo <= q <= self.hi

    # -- arithmetic ----------------------------------------------------

    def __neg__(self) -> "Enclosure":
        return Enclosure(self.R, -self.hi, -self.lo)

    def __add__(self, other) -> "Enclosure":
        o = _coerce(self.R, other)
        return Enclosure(self.R, self.R.dn.add(self.lo, o.lo), self.R.up.add(self.hi, o.hi))

    __radd__ = __add__

    def __sub__(self, other) -> "Enclosure":
        o = _coerce(self.R, other)
        return Enclosure(self.R, self.R.dn.sub(self.lo, o.hi), self.R.up.sub(self.hi, o.lo))

    def __rsub__(self, other) -> "Enclosure":
        return _coerce(self.R, other) - self

    def __mul__(self, other) -> "Enclosure":
        o = _coerce(self.R, other)
        dn, up = self.R.dn, self.R.up
        pairs = ((self.lo, o.lo), (self.lo, o.hi), (self.hi, o.lo), (self.hi, o.hi))
        lo = min(dn.mul(a, b) for a, b in pairs)
        hi = max(up.mul(a, b) for a, b in pairs)
        return Enclosure(self.R, lo, hi)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Enclosure":
        o = _coerce(self.R, other)
        if o.lo <= 0 <= o.hi:
            raise ZeroDivisionError(f"denominator enclosure {o} straddles 0")
        dn, up = self.R.dn, self.R.up
        pairs = ((self.lo, o.lo), (self.lo, o.hi), (self.hi, o.lo), (self.hi, o.hi))
        lo = min(dn.div(a, b) for a, b in pairs)
        hi = max(up.div(a, b) for a, b in pairs)
        return Enclosure(self.R, lo, hi)

    def __rtruediv__(self, other) -> "Enclosure":
        return _coerce(self.R, other) / self

    def abs(self) -> "Enclosure":
        if self.lo >= 0:
            return self
        if self.hi <= 0:
            return -self
        return Enclosure(self.R, mpfr(0), max(-self.lo, self.hi))

    def sqrt(self) -> "Enclosure":
        if self.lo < 0:
            raise ValueError(f"sqrt of enclosure {self} reaching below 0")
        return Enclosure(self.R, self.R.dn.sqrt(self.lo), self.R.up.sqrt(self.hi))

    def atan(self) -> "Enclosure":
        return Enclosure(self.R, self.R.dn.atan(self.lo), self.R.up.atan(self.hi))

    def max0(self) -> "Enclosure":
        """Enclosure of max(x, 0)."""
        z = mpfr(0)
        return Enclosure(self.R, max(self.lo, z), max(self.hi, z))

    def clamp_lo(self, v: Rational) -> "Enclosure":
        """Intersect with [v, +inf); v must actually be a valid lower bound."""
        e = Enclosure.exact(self.R, v)
        if e.lo > self.hi:
            raise ValueError("clamp empties enclosure")
        return Enclosure(self.R, max(self.lo, e.lo), self.hi)

    def sq_over_sq1(self) -> "Enclosure":
        """x^2/(x^2+1) evaluated as 1 - 1/(x^2+1); monotone in |x|, inf-safe."""
        a = self.abs()
        dn, up = self.R.dn, self.R.up
        t_lo = dn.add(dn.mul(a.lo, a.lo), mpq(1))
        if gmpy2.is_infinite(a.hi):
            inv_lo = mpfr(0)
        else:
            t_hi = up.add(up.mul(a.hi, a.hi), mpq(1))
            inv_lo = dn.div(mpq(1), t_hi)
        inv_hi = up.div(mpq(1), t_lo)
        return Enclosure(self.R, dn.sub(mpq(1), inv_hi), up.sub(mpq(1), inv_lo))

    def x_minus_atan(self) -> "Enclosure":
        """x - atan(x); monotone increasing (derivative x^2/(x^2+1) >= 0)."""
        dn, up = self.R.dn, self.R.up
        lo = dn.sub(self.lo, up.atan(self.lo))
        hi = up.sub(self.hi, dn.atan(self.hi))
        return Enclosure(self.R, lo, hi)

    def dist_from(self, a: Rational) -> "Enclosure":
        """|x - a| over this x-interval; inf-safe."""
        return (self - Enclosure.exact(self.R, a)).abs()

    def inv_sqrt1p(self, r: Rational) -> "Enclosure":
        """(1 + r*t)^(-1/2) over a nonnegative t-interval; decreasing, inf-safe."""
        dn, up = self.R.dn, self.R.up
        q = mpq(r)
        if self.lo < 0:
            raise ValueError("inv_sqrt1p needs nonnegative distance interval")
        if gmpy2.is_infinite(self.hi):
            lo = mpfr(0)
        else:
            # reciprocal: the denominator must round away from the result
            base_hi = up.add(up.mul(q, self.hi), mpq(1))
            lo = dn.div(mpq(1), up.sqrt(base_hi))
        base_lo = dn.add(dn.mul(q, self.lo), mpq(1))
        hi = up.div(mpq(1), dn.sqrt(base_lo))
        return Enclosure(self.R, lo, hi)

    def sqrt1p_m1(self, r: Rational) -> "Enclosure":
        """sqrt(1 + r*t) - 1 over a nonnegative t-interval; increasing."""
        dn, up = self.R.dn, self.R.up
        q = mpq(r)
        if self.lo < 0:
            raise ValueError("sqrt1p_m1 needs nonnegative distance interval")
        lo = dn.sub(dn.sqrt(dn.add(dn.mul(q, self.lo), mpq(1))), mpq(1))
        hi = up.sub(up.sqrt(up.add(up.mul(q, self.hi), mpq(1))), mpq(1))
        return Enclosure(self.R, lo, hi)

    # -- certified comparisons ------------------------------------------

    def decide_lt(self, bound: Rational) -> Decision:
        """Is x < bound?  PASS only with > 4x-width clearance."""
        q = mpq(bound)
        w4 = self.R.up.mul(self.width, mpq(4))
        if self.hi < q and self.R.dn.sub(q, self.hi) > w4:
            return Decision.PASS
        if self.lo >= q:
            return Decision.FAIL
        return Decision.INDET

    def decide_gt(self, bound: Rational) -> Decision:
        return (-self).decide_lt(-Fraction(bound))

    def certainly_lt(self, other) -> bool:
        o = _coerce(self.R, other)
        return self.hi < o.lo

    def certainly_le(self, other) -> bool:
        o = _coerce(self.R, other)
        return self.hi <= o.lo

    def certainly_gt(self, other) -> bool:
        o = _coerce(self.R, other)
        return self.lo > o.hi

    def certainly_ge(self, other) -> bool:
        o = _coerce(self.R, other)
        return self.lo >= o.hi


def _coerce(R: Rounder, v) -> Enclosure:
    if isinstance(v, Enclosure):
        if v.R is not R:
            raise ValueError("mixed-precision enclosure arithmetic")
        return v
    return Enclosure.exact(R, v)


def decide_in_open(enc: Enclosure, lo: Rational, hi: Rational) -> Decision:
    """Is x in the open interval (lo, hi)?  Combines the two one-sided rules."""
    a = enc.decide_gt(lo)
    b = enc.decide_lt(hi)
    if a is Decision.PASS and b is Decision.PASS:
        return Decision.PASS
    if a is Decision.FAIL or b is Decision.FAIL:
        return Decision.FAIL
    return Decision.INDET


def refine(
    fn: Callable[[Rounder], Decision],
    start_prec: int,
    max_prec: int = 1 << 14,
) -> Decision:
    """Run a decision procedure, doubling precision while it returns INDET."""
    prec = start_prec
    while True:
        d = fn(rounder(prec))
        if d is not Decision.INDET or prec >= max_prec:
            return d
        prec *= 2
