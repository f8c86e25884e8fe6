"""Averaged-value calculus for slow-decay kernels.

AV_a^b(psi) = (1/(b-a)) * integral of psi, and psi has the C-average
property when AV_a^b(psi) <= C * min(psi(a), psi(b)) for all a < b.  The
workhorse family is c*(1 + r|x-a|)^(-1/2): its antiderivative is closed
form, its one-sided average ratio (2/b)(b+1-sqrt(1+b)) stays below 2, and
by the even-decreasing reduction the family lands in AP_4.

check_ap is a sampled falsifier (numpy-vectorized); the analytic margin
for the canonical kernels at C=4 is about a factor 2, far beyond double
rounding error, so float comparisons are used as-is.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence, Union

import numpy as np

from dforge.rint import Enclosure, Rounder, fraction_of, rounder

Rational = Union[int, Fraction]


class DegenerateInterval(Exception):
    """average over [a, a]."""


class NegativeValueDetected(Exception):
    """A sampled value fell below zero: the nonnegativity precondition is false."""


class NegativeAmplitude(Exception):
    """affine called with alpha < 0."""


@dataclass(frozen=True)
class KSKernel:
    """x -> c * (1 + r|x - a|)^(-1/2), all parameters rational."""

    c: Fraction
    r: Fraction
    a: Fraction

    def __post_init__(self) -> None:
        if self.c < 0:
            raise ValueError("amplitude must be >= 0")
        if self.r <= 0:
            raise ValueError("rate must be > 0")

    def value(self, x: Enclosure) -> Enclosure:
        return self.c * x.dist_from(self.a).inv_sqrt1p(self.r)

    def antiderivative(self, x: Enclosure) -> Enclosure:
        """F with F(a) = 0: sign(x-a) * (2c/r) * (sqrt(1 + r|x-a|) - 1).
        Monotone increasing, evaluated endpoint-wise."""
        R = x.R
        lo = self._anti_point(Enclosure(R, x.lo, x.lo))
        hi = self._anti_point(Enclosure(R, x.hi, x.hi))
        return Enclosure(R, lo.lo, hi.hi)

    def _anti_point(self, x: Enclosure) -> Enclosure:
        mag = x.dist_from(self.a).sqrt1p_m1(self.r) * Fraction(2 * self.c, self.r)
        if x.lo >= Enclosure.exact(x.R, self.a).hi:
            return mag
        if x.hi <= Enclosure.exact(x.R, self.a).lo:
            return -mag
        return Enclosure.hull2(mag, -mag)

    def value_np(self, xs: np.ndarray) -> np.ndarray:
        return float(self.c) / np.sqrt(1.0 + float(self.r) * np.abs(xs - float(self.a)))

    def anti_np(self, xs: np.ndarray) -> np.ndarray:
        t = np.abs(xs - float(self.a))
        mag = (2.0 * float(self.c) / float(self.r)) * (np.sqrt(1.0 + float(self.r) * t) - 1.0)
        return np.sign(xs - float(self.a)) * mag

    @property
    def peak(self) -> Fraction:
        return self.c


@dataclass(frozen=True)
class SurdConst:
    """The constant c * (1 + s)^(-1/2): what a kernel degenerates to under
    an affine map with beta = 0."""

    c: Fraction
    s: Fraction

    def __post_init__(self) -> None:
        if self.c < 0:
            raise ValueError("amplitude must be >= 0")
        if self.s < 0:
            raise ValueError("offset must be >= 0")

    def value(self, x: Enclosure) -> Enclosure:
        R = x.R
        return Enclosure.exact(R, self.c) / (Enclosure.exact(R, self.s) + 1).sqrt()

    def antiderivative(self, x: Enclosure) -> Enclosure:
        return self.value(x) * x

    def value_np(self, xs: np.ndarray) -> np.ndarray:
        return np.full_like(xs, float(self.c) / np.sqrt(1.0 + float(self.s)), dtype=float)

    def anti_np(self, xs: np.ndarray) -> np.ndarray:
        return xs * (float(self.c) / np.sqrt(1.0 + float(self.s)))

    @property
    def peak(self) -> Fraction:
        return self.c


Term = Union[KSKernel, SurdConst]


@dataclass(frozen=True)
class KernelSum:
    """Finite sum of kernels and surd constants; closed under affine maps."""

    terms: tuple[Term, ...] = ()

    def value(self, x: Enclosure) -> Enclosure:
        acc = Enclosure.exact(x.R, 0)
        for t in self.terms:
            acc = acc + t.value(x)
        return acc

    def antiderivative(self, x: Enclosure) -> Enclosure:
        acc = Enclosure.exact(x.R, 0)
        for t in self.terms:
            acc = acc + t.antiderivative(x)
        return acc

    def integral(self, a: Enclosure, b: Enclosure) -> Enclosure:
        return self.antiderivative(b) - self.antiderivative(a)

    def value_np(self, xs: np.ndarray) -> np.ndarray:
        acc = np.zeros_like(xs, dtype=float)
        for t in self.terms:
            acc += t.value_np(xs)
        return acc

    def anti_np(self, xs: np.ndarray) -> np.ndarray:
        acc = np.zeros_like(xs, dtype=float)
        for t in self.terms:
            acc += t.anti_np(xs)
        return acc

    @property
    def peak_bound(self) -> Fraction:
        """sum of amplitudes: a sup-norm bound (each term peaks at its center)."""
        return sum((t.peak for t in self.terms), Fraction(0))

    @property
    def centers(self) -> tuple[Fraction, ...]:
        return tuple(t.a for t in self.terms if isinstance(t, KSKernel))

    def __add__(self, other: "KernelSum") -> "KernelSum":
        return KernelSum(self.terms + other.terms)


def affine(psi: KernelSum, alpha: Rational, beta: Rational, gamma: Rational) -> KernelSum:
    """x -> alpha * psi(beta * x + gamma), in closed form.

    beta != 0 maps each kernel to KSKernel(alpha*c, r*|beta|, (a-gamma)/beta);
    beta = 0 degenerates kernels to surd constants.  alpha must be >= 0 for
    the average property to survive.
    """
    alpha, beta, gamma = Fraction(alpha), Fraction(beta), Fraction(gamma)
    if alpha < 0:
        raise NegativeAmplitude(f"alpha = {alpha}")
    out: list[Term] = []
    if alpha == 0:
        return KernelSum(())
    for t in psi.terms:
        if isinstance(t, SurdConst):
            out.append(SurdConst(alpha * t.c, t.s))
        elif beta == 0:
            out.append(SurdConst(alpha * t.c, t.r * abs(gamma - t.a)))
        else:
            out.append(KSKernel(alpha * t.c, t.r * abs(beta), (t.a - gamma) / beta))
    return KernelSum(tuple(out))


def average(psi, a: Rational, b: Rational, prec: int = 128) -> Enclosure:
    """AV_a^b psi.  Exact-enclosure closed form for KernelSum; for a plain
    callable, falls back on the adaptive quadrature of the d-space module
    (result wrapped in a float-width enclosure)."""
    a, b = Fraction(a), Fraction(b)
    if a == b:
        raise DegenerateInterval(f"a = b = {a}")
    if a > b:
        a, b = b, a
    R = rounder(prec)
    if isinstance(psi, KernelSum):
        ia = psi.integral(Enclosure.exact(R, a), Enclosure.exact(R, b))
        return ia / Enclosure.exact(R, b - a)
    from dforge.dspace import adaptive_simpson

    val = adaptive_simpson(psi, float(a), float(b), tol=1e-12) / float(b - a)
    pad = Fraction(1, 10**9)
    v = Fraction(val)
    return Enclosure.interval(R, v - pad * (1 + abs(v)), v + pad * (1 + abs(v)))


def one_sided_ratio(b: Rational, prec: int = 128) -> Enclosure:
    """(2/b)(b + 1 - sqrt(1+b)) for the unit kernel, in the cancellation-free
    form 2*sqrt(1+b)/(sqrt(1+b)+1).  Strictly increasing, 1 at 0+, toward 2."""
    b = Fraction(b)
    if b <= 0:
        raise DegenerateInterval("ratio needs b > 0")
    R = rounder(prec)
    s = (Enclosure.exact(R, b) + 1).sqrt()
    return (s * 2) / (s + 1)


@dataclass(frozen=True)
class APReport:
    checked: int
    worst_ratio: float
    violations: tuple[tuple[float, float, float], ...]  # (a, b, ratio)
    seed: int
    elapsed: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass(frozen=True)
class PairSampler:
    """Log-uniform magnitude pairs over `decades` decades inside [-span, span],
    plus adversarial pairs straddling or touching every given center."""

    pairs: int
    seed: int
    span: float = 1e6
    decades: int = 12
    centers: tuple[Fraction, ...] = ()
    scales: tuple[Fraction, ...] = ()

    def sample(self) -> tuple[np.ndarray, np.ndarray]:
        rng = np.random.default_rng(self.seed)
        top = np.log10(self.span)
        mags = 10.0 ** rng.uniform(top - self.decades, top, size=(2, self.pairs))
        signs = rng.choice([-1.0, 1.0], size=(2, self.pairs))
        a = mags[0] * signs[0]
        b = mags[1] * signs[1]
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        keep = lo < hi
        lo, hi = lo[keep], hi[keep]
        ts = 10.0 ** np.linspace(-3.0, 6.0, 16)
        extra_lo, extra_hi = [], []
        for c, s in zip(self.centers, self.scales or (Fraction(1),) * len(self.centers)):
            cf, sf = float(c), float(s)
            for t in ts:
                extra_lo += [cf, cf - t / sf, cf - t / sf]
                extra_hi += [cf + t / sf, cf, cf + 2.7 * t / sf]
        if extra_lo:
            lo = np.concatenate([lo, np.array(extra_lo)])
            hi = np.concatenate([hi, np.array(extra_hi)])
        return lo, hi


def check_ap_exact(
    psi: KernelSum,
    C: Rational,
    pairs: Sequence[tuple[Fraction, Fraction]],
    prec: int = 256,
) -> APReport:
    """Certified averaged-bound check on exact rational pairs.

    Decay scales beyond double range cannot be probed by the float sampler
    (offsets 1/r underflow), so this path decides AV <= C * min endpoint
    value through directed enclosures.  A pair counts as a violation unless
    the bound certifies, which makes it strictly more conservative than the
    falsifier."""
    t0 = time.perf_counter()
    R = rounder(prec)
    Cf = Fraction(C)
    worst = 0.0
    violations = []
    for a, b in pairs:
        if not a < b:
            raise DegenerateInterval("pair needs a < b")
        ea, eb = Enclosure.exact(R, a), Enclosure.exact(R, b)
        va, vb = psi.value(ea), psi.value(eb)
        av = psi.integral(ea, eb) / Enclosure.exact(R, b - a)
        floor = Cf * min(fraction_of(va.lo), fraction_of(vb.lo))
        hi = fraction_of(av.hi)
        ratio = float(hi / floor) if floor > 0 else float("inf")
        worst = max(worst, ratio)
        if not hi <= floor:
            violations.append((float(a), float(b), ratio))
    return APReport(
        checked=len(pairs),
        worst_ratio=worst,
        violations=tuple(violations[:32]),
        seed=0,
        elapsed=time.perf_counter() - t0,
    )


def check_ap(psi: KernelSum, C: Rational, sampler: PairSampler) -> APReport:
    """Sampled falsifier for AV_a^b psi <= C * min(psi(a), psi(b))."""
    t0 = time.perf_counter()
    a, b = sampler.sample()
    va = psi.value_np(a)
    vb = psi.value_np(b)
    if np.any(va < 0) or np.any(vb < 0):
        raise NegativeValueDetected("sampled psi < 0")
    av = (psi.anti_np(b) - psi.anti_np(a)) / (b - a)
    floor = float(C) * np.minimum(va, vb)
    ratios = np.divide(av, floor, out=np.full_like(av, np.inf), where=floor > 0)
    bad = ratios > 1.0
    violations = tuple(
        (float(a[i]), float(b[i]), float(ratios[i])) for i in np.flatnonzero(bad)[:32]
    )
    return APReport(
        checked=int(a.size),
        worst_ratio=float(np.max(ratios)) if a.size else 0.0,
        violations=violations,
        seed=sampler.seed,
        elapsed=time.perf_counter() - t0,
    )


def check_symmetric_sufficient(psi: KernelSum, C: Rational, sampler: PairSampler) -> APReport:
    """Premise checker for the even-decreasing reduction: AV_0^b <= C*psi(b)
    for b > 0 lifts to AP_{2C}.  Also spot-verifies the two reduction cases:
    a < 0 < b against (2/b) * integral_0^b, and 0 <= a < b against AV_0^b."""
    t0 = time.perf_counter()
    lo, hi = sampler.sample()
    bs = np.unique(np.abs(np.concatenate([lo, hi])))
    bs = bs[bs > 0]
    vb = psi.value_np(bs)
    if np.any(vb < 0):
        raise NegativeValueDetected("sampled psi < 0")
    av0 = (psi.anti_np(bs) - psi.anti_np(np.zeros_like(bs))) / bs
    floor = float(C) * vb
    ratios = np.divide(av0, floor, out=np.full_like(av0, np.inf), where=floor > 0)
    violations = [
        (0.0, float(bs[i]), float(ratios[i])) for i in np.flatnonzero(ratios > 1.0)[:32]
    ]
    # Case I: a < 0 < b, |a| <= b: AV_a^b <= (2/b) integral_0^b.
    ahat = bs * 0.5
    av_case1 = (psi.anti_np(bs) - psi.anti_np(-ahat)) / (bs + ahat)
    bound1 = 2.0 * av0
    for i in np.flatnonzero(av_case1 > bound1 * (1 + 1e-12))[:8]:
        violations.append((float(-ahat[i]), float(bs[i]), float(av_case1[i] / bound1[i])))
    # Case II: 0 <= a < b: AV_a^b <= AV_0^b for even psi decreasing on x > 0.
    a2 = bs * 0.25
    av_case2 = (psi.anti_np(bs) - psi.anti_np(a2)) / (bs - a2)
    for i in np.flatnonzero(av_case2 > av0 * (1 + 1e-12))[:8]:
        violations.append((float(a2[i]), float(bs[i]), float(av_case2[i] / av0[i])))
    return APReport(
        checked=int(bs.size),
        worst_ratio=float(np.max(ratios)) if bs.size else 0.0,
        violations=tuple(violations),
        seed=sampler.seed,
        elapsed=time.perf_counter() - t0,
    )
