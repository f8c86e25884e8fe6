"""Represented layer functions with certified evaluation.

A FuncRep is the derivative-side object: base kappa*x^2/(x^2+1) plus layers
(psi_n, theta_n), where theta_n = [clip] max(0, psi_n - g_n) + eps_n*x^2/(x^2+1)
+ bumps, so that g_{n+1} = max(g_n - psi_n, 0) + eps_n*x^2/(x^2+1) + bumps
when the clip is on.  g needs only square roots; the running integral f
additionally needs atan and, across clipped layers, the integral of
max(0, psi_n - g_n).  That integral is computed from a cached certified
sign partition of h_n = psi_n - g_n: on certified-positive segments the
clip integral is (integral of psi_n) - (f at stage n) in closed form, on
certified-negative segments it is zero, and the few uncertain slivers
(bisected below a width cap) contribute only to the error bound.

Everything structural is exact rationals; evaluation returns directed
enclosures.  A separate float path feeds the adaptive Simpson oracle.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union

from dforge.apcalc import KernelSum
from dforge.rint import Decision, Enclosure, Rounder, fraction_of, rounder

Rational = Union[int, Fraction]

WORK_LO = Fraction(-128)
WORK_HI = Fraction(128)
BUMP_LO = Fraction(-64)
BUMP_HI = Fraction(64)


class CrossingIsolationFailure(Exception):
    """A sign change of psi - g could not be pinned below the width cap."""


class StageNotFound(Exception):
    """No stage m certifies g_m(x) >= g(x) - eps."""


# -- exact polynomial pieces ---------------------------------------------


def poly_eval(coeffs: Sequence[Fraction], x: Fraction) -> Fraction:
    acc = Fraction(0)
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def poly_antiderivative(coeffs: Sequence[Fraction]) -> tuple[Fraction, ...]:
    return (Fraction(0),) + tuple(c / (i + 1) for i, c in enumerate(coeffs))


def poly_eval_float(coeffs: Sequence[Fraction], x: float) -> float:
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + float(c)
    return acc


@dataclass(frozen=True)
class BumpPiece:
    """One polynomial piece; shape tags rise/flat/fall make interval
    evaluation exact through monotonicity."""

    lo: Fraction
    hi: Fraction
    coeffs: tuple[Fraction, ...]
    shape: str  # "rise" | "flat" | "fall"

    def __post_init__(self) -> None:
        if self.lo >= self.hi:
            raise ValueError("empty piece")
        if self.shape not in ("rise", "flat", "fall"):
            raise ValueError(f"unknown piece shape {self.shape}")

    def mass(self) -> Fraction:
        anti = poly_antiderivative(self.coeffs)
        return poly_eval(anti, self.hi) - poly_eval(anti, self.lo)

    def mass_between(self, u: Fraction, v: Fraction) -> Fraction:
        u = max(u, self.lo)
        v = min(v, self.hi)
        if u >= v:
            return Fraction(0)
        anti = poly_antiderivative(self.coeffs)
        return poly_eval(anti, v) - poly_eval(anti, u)

    def range_over(self, u: Fraction, v: Fraction) -> tuple[Fraction, Fraction]:
        """Exact value range over [u, v] within the piece (monotone shapes)."""
        u = max(u, self.lo)
        v = min(v, self.hi)
        a = poly_eval(self.coeffs, u)
        b = poly_eval(self.coeffs, v)
        return (min(a, b), max(a, b))


@dataclass(frozen=True)
class PiecewiseBump:
    """Contiguous nonnegative polynomial pieces, zero outside the support."""

    pieces: tuple[BumpPiece, ...]

    def __post_init__(self) -> None:
        if not self.pieces:
            raise ValueError("bump needs at least one piece")
        for a, b in zip(self.pieces, self.pieces[1:]):
            if a.hi != b.lo:
                raise ValueError("pieces must be contiguous")
            if poly_eval(a.coeffs, a.hi) != poly_eval(b.coeffs, b.lo):
                raise ValueError("pieces must agree at the seam")
        if poly_eval(self.pieces[0].coeffs, self.pieces[0].lo) != 0:
            raise ValueError("bump must vanish at the left support end")
        if poly_eval(self.pieces[-1].coeffs, self.pieces[-1].hi) != 0:
            raise ValueError("bump must vanish at the right support end")
        if not (BUMP_LO <= self.pieces[0].lo and self.pieces[-1].hi <= BUMP_HI):
            raise ValueError("bump support must stay inside [-64, 64]")

    @property
    def support(self) -> tuple[Fraction, Fraction]:
        return (self.pieces[0].lo, self.pieces[-1].hi)

    @property
    def height(self) -> Fraction:
        return max(
            max(poly_eval(p.coeffs, p.lo), poly_eval(p.coeffs, p.hi)) for p in self.pieces
        )

    def mass(self) -> Fraction:
        return sum((p.mass() for p in self.pieces), Fraction(0))

    def mass_between(self, u: Fraction, v: Fraction) -> Fraction:
        if u > v:
            raise ValueError("u > v")
        return sum((p.mass_between(u, v) for p in self.pieces), Fraction(0))

    def cumulative(self, x: Fraction) -> Fraction:
        """Signed integral from 0 to x, exact."""
        if x >= 0:
            return self.mass_between(Fraction(0), x)
        return -self.mass_between(x, Fraction(0))

    def value_fraction(self, x: Fraction) -> Fraction:
        lo, hi = self.support
        if not lo <= x <= hi:
            return Fraction(0)
        for p in self.pieces:
            if p.lo <= x <= p.hi:
                return poly_eval(p.coeffs, x)
        raise AssertionError("unreachable: contiguous pieces cover the support")

    def value_float(self, x: float) -> float:
        lo, hi = self.support
        if not float(lo) <= x <= float(hi):
            return 0.0
        for p in self.pieces:
            if float(p.lo) <= x <= float(p.hi):
                return poly_eval_float(p.coeffs, x)
        return 0.0

    def range_over(self, u: Fraction, v: Fraction) -> tuple[Fraction, Fraction]:
        """Exact value range over the interval [u, v]."""
        lo, hi = self.support
        vals_lo: list[Fraction] = []
        vals_hi: list[Fraction] = []
        if u < lo or v > hi:
            vals_lo.append(Fraction(0))
            vals_hi.append(Fraction(0))
        for p in self.pieces:
            if p.hi < u or p.lo > v:
                continue
            a, b = p.range_over(u, v)
            vals_lo.append(a)
            vals_hi.append(b)
        if not vals_lo:
            return (Fraction(0), Fraction(0))
        return (min(vals_lo), max(vals_hi))

    def value(self, x: Enclosure) -> Enclosure:
        u = fraction_of(x.lo) if math.isfinite(x.lo) else None
        v = fraction_of(x.hi) if math.isfinite(x.hi) else None
        lo, hi = self.support
        u = lo - 1 if u is None else u
        v = hi + 1 if v is None else v
        a, b = self.range_over(u, v)
        return Enclosure.interval(x.R, a, b)

    def cumulative_enclosure(self, x: Enclosure) -> Enclosure:
        u = fraction_of(x.lo)
        v = fraction_of(x.hi)
        return Enclosure.interval(x.R, self.cumulative(u), self.cumulative(v))


def plateau_bump(a: Fraction, b: Fraction, edge: Fraction, height: Fraction) -> PiecewiseBump:
    """Quartic rise t^2(2-t^2) over [a, a+edge], flat plateau, mirrored fall
    over [b-edge, b].  C^1, nonnegative, exact mass height*(b-a-(16/15)edge)."""
    a, b, edge, height = Fraction(a), Fraction(b), Fraction(edge), Fraction(height)
    if not (0 < edge and a + 2 * edge <= b):
        raise ValueError("edges must fit inside the support")
    if height <= 0:
        raise ValueError("height must be positive")

    def edge_coeffs(x0: Fraction, w: Fraction) -> tuple[Fraction, ...]:
        # height * (2 t^2 - t^4), t = (x - x0)/w, expanded in x
        out = [Fraction(0)] * 5
        # 2 t^2 term
        c2 = 2 * height / (w * w)
        out[0] += c2 * x0 * x0
        out[1] += -2 * c2 * x0
        out[2] += c2
        # -t^4 term
        c4 = -height / (w**4)
        out[0] += c4 * x0**4
        out[1] += c4 * -4 * x0**3
        out[2] += c4 * 6 * x0 * x0
        out[3] += c4 * -4 * x0
        out[4] += c4
        return tuple(out)

    rise = BumpPiece(a, a + edge, edge_coeffs(a, edge), "rise")
    fall = BumpPiece(b - edge, b, edge_coeffs(b, -edge), "fall")
    pieces: list[BumpPiece] = [rise]
    if a + edge < b - edge:
        pieces.append(BumpPiece(a + edge, b - edge, (height,), "flat"))
    pieces.append(fall)
    return PiecewiseBump(tuple(pieces))


# -- layers and partitions ------------------------------------------------


@dataclass(frozen=True)
class Segment:
    lo: Optional[Fraction]  # None = -inf
    hi: Optional[Fraction]  # None = +inf
    sign: int  # +1 certified h > 0, -1 certified h < 0, 0 unknown sliver


@dataclass(frozen=True)
class SignPartition:
    """Certified sign structure of h = psi - g over the whole line."""

    segments: tuple[Segment, ...]

    def __post_init__(self) -> None:
        segs = self.segments
        if not segs or segs[0].lo is not None or segs[-1].hi is not None:
            raise ValueError("partition must cover the line")
        for a, b in zip(segs, segs[1:]):
            if a.hi is None or b.lo is None or a.hi != b.lo:
                raise ValueError("partition segments must be contiguous")

    @property
    def boundaries(self) -> tuple[Fraction, ...]:
        return tuple(s.hi for s in self.segments[:-1])

    def locate(self, x: Fraction) -> int:
        i = bisect_right(self.boundaries, x)
        return i

    def positive_segments(self) -> list[int]:
        return [i for i, s in enumerate(self.segments) if s.sign != -1]


@dataclass(frozen=True)
class ThetaLayer:
    """clip -> max(0, psi_n - g_n); plus eps * x^2/(x^2+1); plus bumps."""

    clip: bool
    eps: Fraction
    bumps: tuple[PiecewiseBump, ...] = ()

    def __post_init__(self) -> None:
        if self.eps < 0:
            raise ValueError("eps must be >= 0")


@dataclass(frozen=True, eq=False)
class Layer:
    psi: KernelSum
    theta: ThetaLayer
    partition: Optional[SignPartition] = field(default=None, compare=False)

    def same_params(self, other: "Layer") -> bool:
        return self.psi == other.psi and self.theta == other.theta


@dataclass(frozen=True, eq=False)
class FuncRep:
    """kappa * x^2/(x^2+1) + const, then the layer recursion."""

    kappa: Fraction = Fraction(1)
    const: Fraction = Fraction(0)
    layers: tuple[Layer, ...] = ()
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.kappa < 0 or self.const < 0:
            raise ValueError("base parameters must be >= 0")

    @property
    def stages(self) -> int:
        return len(self.layers)

    def with_layer(self, layer: Layer) -> "FuncRep":
        return FuncRep(self.kappa, self.const, self.layers + (layer,))

    def prefix(self, n: int) -> "FuncRep":
        return FuncRep(self.kappa, self.const, self.layers[:n])

    def same_params(self, other: "FuncRep", upto: Optional[int] = None) -> bool:
        n = self.stages if upto is None else upto
        if upto is None and (other.stages != n or other.kappa != self.kappa
                             or other.const != self.const):
            return False
        if other.stages < n or self.stages < n:
            return False
        return all(self.layers[i].same_params(other.layers[i]) for i in range(n))

    # -- float path (oracle side) --------------------------------------

    def _float_table(self) -> list:
        tab = self._cache.get("floattab")
        if tab is None:
            tab = []
            for layer in self.layers:
                terms = []
                for t in layer.psi.terms:
                    if hasattr(t, "r"):
                        # decay rates outgrow float range at deep stages
                        rf = float(t.r) if t.r < (1 << 1020) else math.inf
                        terms.append((float(t.c), rf, float(t.a)))
                    else:
                        terms.append((float(t.c) / math.sqrt(1.0 + float(t.s)), None, None))
                tab.append(
                    (terms, layer.theta.clip, float(layer.theta.eps), layer.theta.bumps)
                )
            self._cache["floattab"] = tab
        return tab

    def g_float(self, x: float, stage: Optional[int] = None) -> float:
        n = self.stages if stage is None else stage
        rat = x * x / (x * x + 1.0)
        g = float(self.kappa) * rat + float(self.const)
        for terms, clip, eps, bumps in self._float_table()[:n]:
            p = 0.0
            for c, r, a in terms:
                if r is None:
                    p += c
                else:
                    d = abs(x - a)
                    p += c if d == 0.0 else c / math.sqrt(1.0 + r * d)
            g = g - p
            if clip:
                g = max(g, 0.0)
            g += eps * rat
            for b in bumps:
                g += b.value_float(x)
        return g

    # -- certified path --------------------------------------------------

    def g_stack(self, x: Enclosure) -> list[Enclosure]:
        """[g_0(x), ..., g_N(x)] as enclosures; x may be an interval."""
        rat = x.sq_over_sq1()
        g = rat * self.kappa + self.const
        out = [g]
        for layer in self.layers:
            g = g - layer.psi.value(x)
            if layer.theta.clip:
                g = g.max0()
            g = g + rat * layer.theta.eps
            for b in layer.theta.bumps:
                g = g + b.value(x)
            out.append(g)
        return out

    def g_enclosure(self, x: Enclosure, stage: Optional[int] = None) -> Enclosure:
        n = self.stages if stage is None else stage
        return self.prefix_eval(x, n)

    def prefix_eval(self, x: Enclosure, n: int) -> Enclosure:
        rat = x.sq_over_sq1()
        g = rat * self.kappa + self.const
        for layer in self.layers[:n]:
            g = g - layer.psi.value(x)
            if layer.theta.clip:
                g = g.max0()
            g = g + rat * layer.theta.eps
            for b in layer.theta.bumps:
                g = g + b.value(x)
        return g

    def f_stack(self, x: Enclosure, upto: Optional[int] = None) -> list[Enclosure]:
        """[f_0(x), ..., f_upto(x)], all anchored at f(0) = 0.

        x must be a finite (normally thin) enclosure.  Clip layers integrate
        through their certified sign partition; segment masses ask only for
        strictly lower stages, so the recursion is well founded.  Stacks are
        memoized per (x, precision): partition-boundary evaluations recur
        heavily during clip bookkeeping.
        """
        n_top = self.stages if upto is None else upto
        R = x.R
        key = ("fstack", fraction_of(x.lo), fraction_of(x.hi), R.prec)
        stack = self._cache.get(key)
        if stack is None:
            atan_part = x.x_minus_atan()
            stack = [atan_part * self.kappa + Enclosure.exact(R, self.const) * x]
            self._cache[key] = stack
        while len(stack) <= n_top:
            n = len(stack) - 1
            layer = self.layers[n]
            f = stack[n] - _psi_integral_from_zero(layer.psi, x)
            if layer.theta.clip:
                f = f + self._clip_cumulative(n, x)
            f = f + x.x_minus_atan() * layer.theta.eps
            for b in layer.theta.bumps:
                f = f + b.cumulative_enclosure(x)
            stack.append(f)
        return stack

    def f_enclosure(self, x: Enclosure, stage: Optional[int] = None) -> Enclosure:
        n = self.stages if stage is None else stage
        return self.f_stack(x, upto=n)[n]

    def f_float(self, x: float, stage: Optional[int] = None, prec: int = 192) -> float:
        R = rounder(prec)
        xf = Fraction(x)
        return float(self.f_enclosure(Enclosure.exact(R, xf), stage).mid_fraction())

    def f_increment(
        self,
        a: Fraction,
        b: Fraction,
        stage: Optional[int] = None,
        R: Optional[Rounder] = None,
    ) -> Enclosure:
        """Enclosure of the integral of g_stage over [a, b].

        f(b) - f(a) through f_stack picks up the width of every unknown
        sliver between 0 and the endpoints twice; integrating the segment
        directly keeps only the slivers inside [a, b], which is what makes
        slope windows across near-coincident points decidable.
        """
        n = self.stages if stage is None else stage
        if R is None:
            R = rounder(256)
        if a == b:
            return Enclosure.exact(R, 0)
        if a > b:
            return -self.f_increment(b, a, stage=n, R=R)
        key = ("finc", n, a, b, R.prec)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        ea, eb = Enclosure.exact(R, a), Enclosure.exact(R, b)
        datan = eb.x_minus_atan() - ea.x_minus_atan()
        total = datan * self.kappa + Enclosure.exact(R, self.const * (b - a))
        for m, layer in enumerate(self.layers[:n]):
            total = total - (layer.psi.antiderivative(eb) - layer.psi.antiderivative(ea))
            if layer.theta.clip:
                total = total + self._clip_increment(m, a, b, R)
            total = total + datan * layer.theta.eps
            for bump in layer.theta.bumps:
                total = total + (
                    bump.cumulative_enclosure(eb) - bump.cumulative_enclosure(ea)
                )
        self._cache[key] = total
        return total

    def _clip_increment(self, n: int, a: Fraction, b: Fraction, R: Rounder) -> Enclosure:
        """Enclosure of the integral of max(0, psi_n - g_n) over [a, b]."""
        layer = self.layers[n]
        part = layer.partition
        if part is None:
            raise CrossingIsolationFailure(
                f"layer {n} is clipped but carries no sign partition"
            )
        key = ("clipinc", n, a, b, R.prec)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        total = Enclosure.exact(R, 0)
        for i in range(part.locate(a), part.locate(b) + 1):
            seg = part.segments[i]
            slo = a if seg.lo is None else max(a, seg.lo)
            shi = b if seg.hi is None else min(b, seg.hi)
            if slo >= shi or seg.sign == -1:
                continue
            if seg.sign == +1:
                psi_part = layer.psi.integral(
                    Enclosure.exact(R, slo), Enclosure.exact(R, shi)
                )
                total = total + (psi_part - self.f_increment(slo, shi, stage=n, R=R))
            else:
                iv = Enclosure.interval(R, slo, shi)
                h = layer.psi.value(iv) - self.prefix_eval(iv, n)
                top = (h.max0() * Enclosure.exact(R, shi - slo)).hi
                total = total + Enclosure(R, Enclosure.exact(R, 0).lo, top)
        self._cache[key] = total
        return total

    # -- clip bookkeeping -------------------------------------------------

    def _seg_mass(self, n: int, i: int, R: Rounder) -> Enclosure:
        """Enclosure of the clip integral over segment i of layer n."""
        key = ("segmass", n, i, R.prec)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        layer = self.layers[n]
        seg = layer.partition.segments[i]
        if seg.sign == -1:
            val = Enclosure.exact(R, 0)
        elif seg.sign == +1:
            a = Enclosure.exact(R, seg.lo)
            b = Enclosure.exact(R, seg.hi)
            psi_part = layer.psi.integral(a, b)
            fa = self.f_stack(a, upto=n)[n]
            fb = self.f_stack(b, upto=n)[n]
            val = psi_part - (fb - fa)
        else:
            iv = Enclosure.interval(R, seg.lo, seg.hi)
            h = layer.psi.value(iv) - self.prefix_eval(iv, n)
            width = Enclosure.exact(R, seg.hi - seg.lo)
            val = Enclosure(R, Enclosure.exact(R, 0).lo, (width * h.max0()).hi)
        self._cache[key] = val
        return val

    def _clip_cumulative(self, n: int, x: Enclosure) -> Enclosure:
        """Enclosure of the signed integral from 0 to x of max(0, psi_n - g_n)."""
        R = x.R
        layer = self.layers[n]
        part = layer.partition
        if part is None:
            raise CrossingIsolationFailure(
                f"layer {n} is clipped but carries no sign partition"
            )
        xf = fraction_of(x.lo)
        xf_hi = fraction_of(x.hi)
        lo_val = self._clip_cum_at(n, xf, R)
        hi_val = self._clip_cum_at(n, xf_hi, R) if xf_hi != xf else lo_val
        return Enclosure(R, lo_val.lo, hi_val.hi)

    def _clip_cum_at(self, n: int, xf: Fraction, R: Rounder) -> Enclosure:
        key = ("clipcum", n, xf, R.prec)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        layer = self.layers[n]
        part = layer.partition
        sign = 1
        u, v = Fraction(0), xf
        if xf < 0:
            sign = -1
            u, v = xf, Fraction(0)
        total = Enclosure.exact(R, 0)
        i_lo, i_hi = part.locate(u), part.locate(v)
        for i in range(i_lo, i_hi + 1):
            seg = part.segments[i]
            slo = u if seg.lo is None else max(u, seg.lo)
            shi = v if seg.hi is None else min(v, seg.hi)
            if slo >= shi:
                continue
            if seg.sign == -1:
                continue
            full = (seg.lo is not None and seg.hi is not None
                    and slo == seg.lo and shi == seg.hi)
            if full:
                total = total + self._seg_mass(n, i, R)
            elif seg.sign == +1:
                a = Enclosure.exact(R, slo)
                b = Enclosure.exact(R, shi)
                psi_part = self.layers[n].psi.integral(a, b)
                fa = self.f_stack(a, upto=n)[n]
                fb = self.f_stack(b, upto=n)[n]
                total = total + (psi_part - (fb - fa))
            else:
                iv_enc = Enclosure.interval(R, slo, shi)
                h = layer.psi.value(iv_enc) - self.prefix_eval(iv_enc, n)
                top = (h.max0() * Enclosure.exact(R, shi - slo)).hi
                total = total + Enclosure(R, Enclosure.exact(R, 0).lo, top)
        if sign == -1:
            total = -total
        self._cache[key] = total
        return total

    # -- structural norms -------------------------------------------------

    def sup_norm_ledger(self, stage: Optional[int] = None) -> Fraction:
        """Exact bound B with g_stage < B pointwise: kappa + const +
        sum(eps_n + bump heights); the clip never raises the running sup."""
        n = self.stages if stage is None else stage
        b = self.kappa + self.const
        for layer in self.layers[:n]:
            b += layer.theta.eps
            for bump in layer.theta.bumps:
                b += bump.height
        return b


def _psi_integral_from_zero(psi: KernelSum, x: Enclosure) -> Enclosure:
    zero = Enclosure.exact(x.R, 0)
    return psi.antiderivative(x) - psi.antiderivative(zero)


# -- sign partition builder ------------------------------------------------


def build_sign_partition(
    rep: FuncRep,
    stage: int,
    psi: KernelSum,
    seeds: Sequence[tuple[Fraction, Fraction]],
    prec: int = 256,
    sliver_cap: Fraction = Fraction(1, 2**80),
    tail: Fraction = Fraction(1 << 20),
    max_segments: int = 4096,
) -> SignPartition:
    """Certify the sign structure of h = psi - g_stage.

    seeds are (center, radius) balls expected positive; each is grown by
    doubling while positivity certifies, then the complement is certified
    negative with adaptive bisection, leaving only slivers thinner than
    sliver_cap around each actual crossing.
    """
    R = rounder(prec)
    # isolation between cores stops at sliver_cap, so its endpoints never
    # need the full core-scale precision; outward rounding keeps it sound
    R2 = rounder(min(prec, 640))

    def h_on(lo: Fraction, hi: Fraction, rr: Rounder = R) -> Enclosure:
        iv = Enclosure.interval(rr, lo, hi)
        return psi.value(iv) - rep.prefix_eval(iv, stage)

    def h_tail(lo: Fraction) -> Enclosure:
        iv = Enclosure.ray(R2, lo)
        return psi.value(iv) - rep.prefix_eval(iv, stage)

    def certify(lo: Fraction, hi: Fraction, want: int, budget: int) -> bool:
        """True if sign `want` certifies on [lo, hi], splitting as needed."""
        stack = [(lo, hi, 0)]
        while stack:
            a, b, d = stack.pop()
            e = h_on(a, b)
            if (want > 0 and e.lo > 0) or (want < 0 and e.hi < 0):
                continue
            if d >= budget:
                return False
            m = (a + b) / 2
            stack.append((a, m, d + 1))
            stack.append((m, b, d + 1))
        return True

    cores: list[tuple[Fraction, Fraction]] = []
    for center, radius in sorted(seeds):
        if radius <= 0:
            raise ValueError("seed radius must be positive")
        if not certify(center - radius, center + radius, +1, 8):
            raise CrossingIsolationFailure(
                f"seed ball around {float(center):.6g} does not certify positive"
            )
        rad = radius
        while rad < tail:
            if certify(center - 2 * rad, center + 2 * rad, +1, 4):
                rad *= 2
            else:
                break
        cores.append((center - rad, center + rad))
    cores.sort()
    merged: list[list[Fraction]] = []
    for lo, hi in cores:
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])

    segments: list[Segment] = []
    counter = [0]

    def emit(lo: Optional[Fraction], hi: Optional[Fraction], sign: int) -> None:
        counter[0] += 1
        if counter[0] > max_segments:
            raise CrossingIsolationFailure("segment budget exhausted")
        segments.append(Segment(lo, hi, sign))

    def resolve(lo: Fraction, hi: Fraction) -> None:
        """Fill [lo, hi] (between cores) with certified segments."""
        if lo >= hi:
            return
        stack = [(lo, hi)]
        pending: list[Segment] = []
        while stack:
            a, b = stack.pop()
            e = h_on(a, b, R2)
            if e.hi < 0:
                pending.append(Segment(a, b, -1))
                continue
            if e.lo > 0:
                pending.append(Segment(a, b, +1))
                continue
            if b - a <= sliver_cap:
                pending.append(Segment(a, b, 0))
                continue
            if len(pending) + len(stack) > max_segments:
                raise CrossingIsolationFailure(
                    f"cannot isolate crossings in [{float(lo):.6g}, {float(hi):.6g}]"
                )
            m = (a + b) / 2
            stack.append((m, b))
            stack.append((a, m))
        pending.sort(key=lambda s: s.lo)
        coalesced: list[Segment] = []
        for s in pending:
            if coalesced and coalesced[-1].sign == s.sign and coalesced[-1].hi == s.lo:
                coalesced[-1] = Segment(coalesced[-1].lo, s.hi, s.sign)
            else:
                coalesced.append(s)
        for s in coalesced:
            emit(s.lo, s.hi, s.sign)

    lo_tail = -tail
    hi_tail = tail
    if merged:
        lo_tail = min(lo_tail, merged[0][0] - 1)
        hi_tail = max(hi_tail, merged[-1][1] + 1)
    if not (h_tail(hi_tail).hi < 0):
        raise CrossingIsolationFailure("right tail does not certify negative")
    iv_left = -Enclosure.ray(R, -lo_tail)
    left = psi.value(iv_left) - rep.prefix_eval(iv_left, stage)
    if not (left.hi < 0):
        raise CrossingIsolationFailure("left tail does not certify negative")

    emit(None, lo_tail, -1)
    cursor = lo_tail
    for lo, hi in merged:
        resolve(cursor, lo)
        emit(lo, hi, +1)
        cursor = hi
    resolve(cursor, hi_tail)
    emit(hi_tail, None, -1)
    return SignPartition(tuple(segments))


# -- adaptive Simpson (independent oracle) ---------------------------------


def adaptive_simpson(
    fn: Callable[[float], float],
    a: float,
    b: float,
    tol: float = 1e-10,
    max_depth: int = 48,
) -> float:
    fa, fm, fb = fn(a), fn((a + b) / 2), fn(b)
    whole = (b - a) / 6 * (fa + 4 * fm + fb)
    return _simpson_rec(fn, a, b, fa, fm, fb, whole, tol, max_depth)


def _simpson_rec(fn, a, b, fa, fm, fb, whole, tol, depth) -> float:
    m = (a + b) / 2
    lm, rm = (a + m) / 2, (m + b) / 2
    flm, frm = fn(lm), fn(rm)
    left = (m - a) / 6 * (fa + 4 * flm + fm)
    right = (b - m) / 6 * (fm + 4 * frm + fb)
    if depth <= 0 or abs(left + right - whole) <= 15 * tol:
        return left + right + (left + right - whole) / 15
    return _simpson_rec(fn, a, m, fa, flm, fm, left, tol / 2, depth - 1) + _simpson_rec(
        fn, m, b, fm, frm, fb, right, tol / 2, depth - 1
    )


# -- checks ---------------------------------------------------------------


@dataclass(frozen=True)
class DerivativeRow:
    h: Fraction
    quotient: float
    g_value: float
    gap: float


@dataclass(frozen=True)
class DerivativeReport:
    x: Fraction
    rows: tuple[DerivativeRow, ...]
    final_gap: float

    @property
    def gaps(self) -> tuple[float, ...]:
        return tuple(r.gap for r in self.rows)


def derivative_check(
    rep: FuncRep,
    x: Rational,
    js: Sequence[int] = tuple(range(4, 21)),
    prec: int = 256,
) -> DerivativeReport:
    """Difference quotients (f(x+h) - f(x))/h against g(x) along h = 2^-j."""
    R = rounder(prec)
    xf = Fraction(x)
    gx = rep.g_enclosure(Enclosure.exact(R, xf))
    fx = rep.f_enclosure(Enclosure.exact(R, xf))
    rows = []
    for j in js:
        h = Fraction(1, 2**j)
        fxh = rep.f_enclosure(Enclosure.exact(R, xf + h))
        quot = (fxh - fx) / Enclosure.exact(R, h)
        gap = (quot - gx).abs()
        rows.append(
            DerivativeRow(
                h=h,
                quotient=float(quot.mid_fraction()),
                g_value=float(gx.mid_fraction()),
                gap=float(gap.hi),
            )
        )
    return DerivativeReport(x=xf, rows=tuple(rows), final_gap=rows[-1].gap)


@dataclass(frozen=True)
class DCheckRow:
    h: Fraction
    average: float
    lo_bound: float
    hi_bound: float
    ok: bool


@dataclass(frozen=True)
class DCheckReport:
    x: Fraction
    eps: Fraction
    stage_m: int
    delta: Fraction
    rows: tuple[DCheckRow, ...]

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows)


def finite_stage_D_check(
    rep: FuncRep,
    x: Rational,
    eps: Fraction,
    C: int = 4,
    samples: int = 8,
    prec: int = 256,
) -> DCheckReport:
    """Finite-stage corridor: pick the least m with g_m(x) >= g(x) - eps,
    probe a continuity radius delta for g_m, then verify
    g(x) - 2 eps <= AV_x^{x+h} g <= g(x) + (C+1) eps for sampled |h| < delta."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    R = rounder(prec)
    xf = Fraction(x)
    xe = Enclosure.exact(R, xf)
    gstack = rep.g_stack(xe)
    g_top = gstack[rep.stages]
    m_star = None
    for m in range(rep.stages + 1):
        if (gstack[m] - g_top + Enclosure.exact(R, eps)).lo > 0:
            m_star = m
            break
    if m_star is None:
        raise StageNotFound(f"no stage within eps = {eps} of the top value")

    delta = None
    for t in range(2, prec // 2):
        d = Fraction(1, 2**t)
        lo_iv = Enclosure.interval(R, xf - d, xf)
        hi_iv = Enclosure.interval(R, xf, xf + d)
        dev_lo = (rep.prefix_eval(lo_iv, m_star) - gstack[m_star]).abs()
        dev_hi = (rep.prefix_eval(hi_iv, m_star) - gstack[m_star]).abs()
        if dev_lo.hi < eps and dev_hi.hi < eps:
            delta = d
            break
    if delta is None:
        raise StageNotFound(f"no continuity radius certifies at stage {m_star}")

    f_x = rep.f_enclosure(xe)
    g_val = g_top
    rows = []
    hs = []
    for k in range(samples):
        hs.append(delta / 2 ** (k + 1))
        hs.append(-delta / 2 ** (k + 1))
    for h in hs:
        f_xh = rep.f_enclosure(Enclosure.exact(R, xf + h))
        av = (f_xh - f_x) / Enclosure.exact(R, h)
        lo_b = g_val - Enclosure.exact(R, 2 * eps)
        hi_b = g_val + Enclosure.exact(R, (C + 1) * eps)
        ok = av.certainly_ge(lo_b) and av.certainly_le(hi_b)
        rows.append(
            DCheckRow(
                h=h,
                average=float(av.mid_fraction()),
                lo_bound=float(lo_b.hi),
                hi_bound=float(hi_b.lo),
                ok=bool(ok),
            )
        )
    return DCheckReport(x=xf, eps=Fraction(eps), stage_m=m_star, delta=delta, rows=tuple(rows))


def clip_sup_certify(
    rep: FuncRep,
    n: int,
    bound: Fraction,
    prec: int = 256,
    budget: int = 4096,
) -> Decision:
    """Decide sup max(0, psi_n - g_n) <= bound by pruned interval refinement.

    Only cells whose upper bound exceeds `bound` are split; a midpoint value
    certainly above `bound` fails immediately.
    """
    layer = rep.layers[n]
    if not layer.theta.clip:
        return Decision.PASS if bound >= 0 else Decision.FAIL
    if layer.partition is None:
        raise CrossingIsolationFailure(f"layer {n} has no partition")
    R = rounder(prec)

    def h_on(a: Fraction, b: Fraction) -> Enclosure:
        iv = Enclosure.interval(R, a, b)
        return layer.psi.value(iv) - rep.prefix_eval(iv, n)

    cells = []
    for i in layer.partition.positive_segments():
        seg = layer.partition.segments[i]
        cells.append((seg.lo, seg.hi))
    evals = 0
    while cells:
        a, b = cells.pop()
        e = h_on(a, b)
        evals += 1
        if fraction_of(e.hi) <= bound:
            continue
        m = (a + b) / 2
        pt = h_on(m, m)
        if pt.lo > 0 and fraction_of(pt.lo) > bound:
            return Decision.FAIL
        if evals > budget:
            return Decision.INDET
        cells.append((a, m))
        cells.append((m, b))
    return Decision.PASS


def clip_sup_estimate(rep: FuncRep, n: int, prec: int = 256, rounds: int = 40) -> Fraction:
    """Certified upper bound for sup max(0, psi_n - g_n), refined until the
    bound stabilizes or the round budget runs out."""
    layer = rep.layers[n]
    if not layer.theta.clip:
        return Fraction(0)
    if layer.partition is None:
        raise CrossingIsolationFailure(f"layer {n} has no partition")
    R = rounder(prec)

    def h_on(a: Fraction, b: Fraction) -> Enclosure:
        iv = Enclosure.interval(R, a, b)
        return layer.psi.value(iv) - rep.prefix_eval(iv, n)

    cells = []
    for i in layer.partition.positive_segments():
        seg = layer.partition.segments[i]
        cells.append((fraction_of(h_on(seg.lo, seg.hi).hi), seg.lo, seg.hi))
    for _ in range(rounds):
        cells.sort()
        ub, a, b = cells.pop()
        m = (a + b) / 2
        attained = fraction_of(h_on(m, m).lo)
        if ub <= 0 or ub - attained <= ub / 64 or len(cells) > 1 << 11:
            cells.append((ub, a, b))
            break
        cells.append((fraction_of(h_on(a, m).hi), a, m))
        cells.append((fraction_of(h_on(m, b).hi), m, b))
    return max(Fraction(0), max(c[0] for c in cells))
