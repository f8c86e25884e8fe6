"""Finite conditions over the staged function space: validation, ordering,
extension, and amalgamation.

A Condition couples a finite set of labeled target pairs (always anchored by
the origin pair) with a stage count N and a FuncRep whose f sits strictly
under the targets: slope gaps against f live in (0, 2^-N-2) for every pair
of targets.  Conditions are ordered by extension: more targets, more layers,
and pinched windows g_n(d) in (0, 2^-n) at the old points for every new
stage.

Amalgamation merges two zeta-close conditions into a common extension: one
kernel per matched target pair is clipped out of g (certified through a sign
partition), a fresh positivity ramp eps*x^2/(x^2+1) is added, and plateau
bumps re-fill most of each slope gap, leaving the next window's worth of
room.  Every amalgam is re-validated from scratch and checked against both
parents before it is returned; failures raise instead of propagating.

All structural data is exact rationals.  Anything touching f or g is decided
through directed enclosures; a check that cannot be decided at the working
precision fails or raises instead of guessing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence, Tuple, Union

from dforge.apcalc import KernelSum, KSKernel, PairSampler, check_ap, check_ap_exact
from dforge.corrector import (
    Indeterminate,
    build_correction,
    correctable_report,
    correction_bumps,
)
from dforge.dspace import (
    CrossingIsolationFailure,
    FuncRep,
    Layer,
    ThetaLayer,
    build_sign_partition,
    clip_sup_certify,
)
from dforge.rint import Decision, Enclosure, Rounder, decide_in_open, fraction_of, rounder

Rational = Union[int, Fraction]

__all__ = [
    "ValidationFailed",
    "NotClose",
    "NoAdmissiblePoint",
    "HeightConflict",
    "Height",
    "LabeledPoint",
    "Pair",
    "make_pair",
    "ORIGIN_PAIR",
    "Condition",
    "ONE",
    "PropertyCheck",
    "ValidationReport",
    "validate",
    "ensure_valid",
    "leq",
    "compute_zeta",
    "zeta_close",
    "amalgamate",
    "advance",
    "feasible_window",
    "extend_with_target",
    "compatible",
    "ConstructionResult",
    "run_construction",
]


class ValidationFailed(Exception):
    def __init__(self, message: str, report: Optional["ValidationReport"] = None) -> None:
        super().__init__(message)
        self.report = report


class NotClose(Exception):
    """Amalgamation was attempted on a pair outside the certified closeness scale."""


class NoAdmissiblePoint(Exception):
    def __init__(self, message: str, radius: Optional[Fraction] = None) -> None:
        super().__init__(message)
        self.radius = radius


class HeightConflict(Exception):
    """Every nearby pool point was rejected for label reasons alone."""


# -- labeled pairs -----------------------------------------------------------


@dataclass(frozen=True, order=True)
class Height:
    """Lexicographic label rank: (limit, offset)."""

    limit: Fraction
    offset: int


@dataclass(frozen=True, order=True)
class LabeledPoint:
    value: Fraction
    height: Height


@dataclass(frozen=True, order=True)
class Pair:
    d: LabeledPoint
    e: LabeledPoint


def make_pair(
    d: Rational,
    e: Rational,
    limit: Rational,
    d_offset: int = 1,
    e_offset: int = 0,
) -> Pair:
    lam = Fraction(limit)
    return Pair(
        LabeledPoint(Fraction(d), Height(lam, d_offset)),
        LabeledPoint(Fraction(e), Height(lam, e_offset)),
    )


ORIGIN_PAIR = make_pair(0, 0, 0)


@dataclass(frozen=True, eq=False)
class Condition:
    """Labeled pairs sorted by point, a stage count, and the built stack.

    `meta` and `_cache` never participate in comparisons; `_cache` memoizes
    the closeness scale.
    """

    sigma: Tuple[Pair, ...]
    N: int
    rep: FuncRep
    meta: dict = field(default_factory=dict, compare=False, repr=False)
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        ordered = tuple(sorted(self.sigma, key=lambda pr: pr.d.value))
        object.__setattr__(self, "sigma", ordered)

    @property
    def iota(self) -> Fraction:
        """Width of the admissible slope window at this stage."""
        return Fraction(1, 1 << (self.N + 2))

    @property
    def domain(self) -> Tuple[Fraction, ...]:
        return tuple(pr.d.value for pr in self.sigma)

    @property
    def targets(self) -> Tuple[Tuple[Fraction, Fraction], ...]:
        return tuple((pr.d.value, pr.e.value) for pr in self.sigma)

    def d_heights(self) -> Tuple[Height, ...]:
        return tuple(pr.d.height for pr in self.sigma)


ONE = Condition((ORIGIN_PAIR,), 0, FuncRep())


# -- validation --------------------------------------------------------------


@dataclass(frozen=True)
class PropertyCheck:
    name: str
    ok: bool
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: Tuple[PropertyCheck, ...]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def failed(self) -> Tuple[PropertyCheck, ...]:
        return tuple(c for c in self.checks if not c.ok)


def _range_ledger(rep: FuncRep) -> Fraction:
    """Pointwise upper bound for the final stage.

    The clip never raises the running sup, so each layer contributes eps plus
    its bumps; bumps with pairwise disjoint supports contribute only the
    tallest one.
    """
    b = rep.kappa + rep.const
    for layer in rep.layers:
        b += layer.theta.eps
        bumps = layer.theta.bumps
        if not bumps:
            continue
        spans = sorted(bump.support for bump in bumps)
        disjoint = all(u[1] <= v[0] for u, v in zip(spans, spans[1:]))
        heights = [bump.height for bump in bumps]
        b += max(heights) if disjoint else sum(heights)
    return b


def _decay_scale_pairs(psi: KernelSum) -> list:
    """Adversarial averaging pairs at each kernel's own decay scale, the
    region the float sampler cannot reach, plus cross-center and far pairs."""
    pairs = []
    centers = sorted({t.a for t in psi.terms})
    for t in psi.terms:
        inv = Fraction(t.r.denominator, t.r.numerator)
        for j in range(0, 64, 4):
            u = (1 << j) * inv
            pairs.append((t.a - u, t.a + u))
            pairs.append((t.a, t.a + u))
            pairs.append((t.a - u, t.a))
            pairs.append((t.a - u, t.a + Fraction(27, 10) * u))
    for i, a in enumerate(centers):
        for b in centers[i + 1 :]:
            pairs.append((a, b))
    pairs.append((centers[0] - 1000, centers[-1] + 1000))
    pairs.append((Fraction(-(10**6)), Fraction(10**6)))
    return pairs


def validate(cond: Condition, prec: int = 320, ap_spot_pairs: int = 256) -> ValidationReport:
    """Certify the structural and analytic requirements of a condition.

    Analytic checks go through enclosures at the given precision; a check
    that cannot be decided reports as failed rather than guessed.
    """
    checks = []
    R = rounder(prec)
    sigma, N, rep = cond.sigma, cond.N, cond.rep

    origin = [pr for pr in sigma if pr.d.value == 0]
    ok = len(sigma) >= 1 and len(origin) == 1 and origin[0].e.value == 0
    checks.append(PropertyCheck("origin-anchor", ok, "" if ok else "origin pair missing or mislabeled"))

    ds = [pr.d.value for pr in sigma]
    es = [pr.e.value for pr in sigma]
    ok = all(a < b for a, b in zip(ds, ds[1:])) and all(a < b for a, b in zip(es, es[1:]))
    checks.append(PropertyCheck("order-bijection", ok, "" if ok else "values must be strictly co-ordered"))

    bad = [
        pr
        for pr in sigma
        if pr.d.value != 0
        and (pr.d.height.limit != pr.e.height.limit or pr.d.height.offset <= pr.e.height.offset)
    ]
    checks.append(
        PropertyCheck("pair-labels", not bad, "" if not bad else f"{len(bad)} pair(s) break the height order")
    )

    hs = cond.d_heights()
    ok = len(set(hs)) == len(hs)
    checks.append(PropertyCheck("label-distinctness", ok, "" if ok else "duplicate point heights"))

    ok = N >= 0 and rep.stages == N
    checks.append(PropertyCheck("stage-count", ok, "" if ok else f"rep has {rep.stages} layers for stage {N}"))
    if not ok:
        return ValidationReport(tuple(checks))

    shape_bad = [
        n
        for n, layer in enumerate(rep.layers)
        if not layer.theta.clip
        or layer.partition is None
        or not layer.psi.terms
        or not all(isinstance(t, KSKernel) and t.c > 0 for t in layer.psi.terms)
    ]
    checks.append(
        PropertyCheck(
            "layer-shape",
            not shape_bad,
            "" if not shape_bad else f"layers {shape_bad} need clipped positive kernels with a partition",
        )
    )

    eps_bad = [n for n, layer in enumerate(rep.layers) if layer.theta.eps <= 0]
    checks.append(
        PropertyCheck("positivity-floor", not eps_bad, "" if not eps_bad else f"layers {eps_bad} have eps <= 0")
    )

    g0 = rep.g_enclosure(Enclosure.exact(R, 0))
    ok = fraction_of(g0.lo) == 0 and fraction_of(g0.hi) == 0
    checks.append(PropertyCheck("zero-at-origin", ok, "" if ok else "origin value is not exactly zero"))

    bound = 2 - Fraction(1, 1 << N)
    ledger = _range_ledger(rep)
    ok = ledger <= bound
    checks.append(PropertyCheck("range-bound", ok, "" if ok else f"ledger {float(ledger):.4f} > {float(bound):.4f}"))

    lam = rep.kappa + sum((layer.theta.eps for layer in rep.layers), Fraction(0))
    ok = lam >= 1
    checks.append(PropertyCheck("limit-window", ok, "" if ok else f"limit slope {float(lam):.4f} < 1"))

    if shape_bad:
        checks.append(PropertyCheck("kernel-average", False, "skipped: bad layer shape"))
        checks.append(PropertyCheck("layer-norm", False, "skipped: bad layer shape"))
    else:
        ap_bad = []
        for n, layer in enumerate(rep.layers):
            rates = [t.r for t in layer.psi.terms]
            if rates and max(rates) >= (1 << 500):
                # the decay-scale geometry of deep layers is not float
                # representable; certify the bound on exact rational pairs
                bits = max(r.numerator.bit_length() for r in rates)
                report_ap = check_ap_exact(
                    layer.psi, 4, _decay_scale_pairs(layer.psi), prec=bits + 160
                )
            else:
                sampler = PairSampler(
                    pairs=ap_spot_pairs,
                    seed=1009 * (n + 1),
                    centers=layer.psi.centers,
                    scales=tuple(Fraction(1) / t.r for t in layer.psi.terms),
                )
                report_ap = check_ap(layer.psi, 4, sampler)
            if not report_ap.ok:
                ap_bad.append(n)
        checks.append(
            PropertyCheck(
                "kernel-average", not ap_bad, "" if not ap_bad else f"layers {ap_bad} fail the averaged lower bound"
            )
        )

        norm_bad = []
        for n, layer in enumerate(rep.layers):
            budget = Fraction(1, 1 << (n + 1)) - layer.theta.eps
            if layer.theta.bumps:
                budget -= max(bump.height for bump in layer.theta.bumps)
            if budget <= 0 or clip_sup_certify(rep, n, budget, prec) is not Decision.PASS:
                norm_bad.append(n)
        checks.append(
            PropertyCheck(
                "layer-norm", not norm_bad, "" if not norm_bad else f"layers {norm_bad} exceed the stage budget"
            )
        )

    slope_bad = 0
    undecided = 0
    tg = cond.targets
    incs = [rep.f_increment(d0, d1, R=R) for (d0, _), (d1, _) in zip(tg, tg[1:])]
    for i in range(len(tg)):
        df = Enclosure.exact(R, 0)
        for j in range(i + 1, len(tg)):
            df = df + incs[j - 1]
            (d0, e0), (d1, e1) = tg[i], tg[j]
            num = Enclosure.exact(R, e1 - e0) - df
            s = num / Enclosure.exact(R, d1 - d0)
            dec = decide_in_open(s, 0, cond.iota)
            if dec is Decision.FAIL:
                slope_bad += 1
            elif dec is Decision.INDET:
                undecided += 1
    ok = slope_bad == 0 and undecided == 0
    parts = []
    if slope_bad:
        parts.append(f"{slope_bad} outside (0, {cond.iota})")
    if undecided:
        parts.append(f"{undecided} undecided")
    checks.append(PropertyCheck("slope-windows", ok, "; ".join(parts)))

    return ValidationReport(tuple(checks))


def ensure_valid(cond: Condition, prec: int = 320, ap_spot_pairs: int = 256) -> ValidationReport:
    report = validate(cond, prec, ap_spot_pairs)
    if not report.ok:
        names = ", ".join(c.name for c in report.failed())
        raise ValidationFailed(f"condition fails: {names}", report)
    return report


# -- extension order ---------------------------------------------------------


def leq(q: Condition, p: Condition, prec: int = 320) -> bool:
    """Decide whether q extends p.

    Undecidable stage windows raise Indeterminate instead of guessing.
    """
    if q.N < p.N:
        return False
    qpairs = set(q.sigma)
    if any(pr not in qpairs for pr in p.sigma):
        return False
    if q.rep.kappa != p.rep.kappa or q.rep.const != p.rep.const:
        return False
    if not q.rep.same_params(p.rep, upto=p.N):
        return False
    R = rounder(prec)
    for pr in p.sigma:
        d = pr.d.value
        if d == 0:
            continue
        stack = q.rep.g_stack(Enclosure.exact(R, d))
        for n in range(p.N + 1, q.N + 1):
            dec = decide_in_open(stack[n], 0, Fraction(1, 1 << n))
            if dec is Decision.FAIL:
                return False
            if dec is Decision.INDET:
                raise Indeterminate(f"stage window for {d} undecided at stage {n}")
    return True


# -- closeness scale ---------------------------------------------------------


def _adjacent_slopes(
    targets: Sequence[Tuple[Fraction, Fraction]],
    rep: FuncRep,
    R: Rounder,
    stage: Optional[int] = None,
) -> list:
    out = []
    for (d0, e0), (d1, e1) in zip(targets, targets[1:]):
        df = rep.f_increment(d0, d1, stage=stage, R=R)
        num = Enclosure.exact(R, e1 - e0) - df
        out.append(num / Enclosure.exact(R, d1 - d0))
    return out


def _variation_certified(
    rep: FuncRep,
    center: Fraction,
    radius: Fraction,
    bound: Fraction,
    prec: int,
    budget: int = 512,
) -> bool:
    """Certify |g(y) - g(center)| <= bound for every |y - center| <= radius."""
    R = rounder(prec)
    g0 = rep.g_enclosure(Enclosure.exact(R, center))
    floor = radius / (1 << 14)
    cells = [(center - radius, center + radius)]
    evals = 0
    while cells:
        a, b = cells.pop()
        dev = (rep.g_enclosure(Enclosure.interval(R, a, b)) - g0).abs()
        evals += 1
        if not fraction_of(dev.hi) > bound:
            continue
        mid = (a + b) / 2
        probe = (rep.g_enclosure(Enclosure.exact(R, mid)) - g0).abs()
        if fraction_of(probe.lo) > bound:
            return False
        if evals > budget or (b - a) <= floor:
            return False
        cells.append((a, mid))
        cells.append((mid, b))
    return True


def _modulus_ok(rep: FuncRep, d: Fraction, radius: Fraction, bound: Fraction, prec: int) -> bool:
    # d +/- radius must stay distinct after rounding, so the working precision
    # has to scale with the probe radius; otherwise the interval inflates to
    # the rounding floor and the probe can fail at every scale
    scale = radius.denominator.bit_length() - radius.numerator.bit_length()
    return _variation_certified(rep, d, radius, bound, max(prec, scale + 224))


def compute_zeta(p: Condition, prec: int = 320) -> Fraction:
    """Largest admissible closeness scale 2^-k, k >= 16, for this condition.

    Closed-form entries shrink the scale until point separations, slope
    margins, and kernel drift all clear; a certified variation probe then
    pins the local modulus at every domain point.
    """
    key = ("zeta", prec)
    hit = p._cache.get(key)
    if hit is not None:
        return hit
    N, L = p.N, len(p.sigma)
    dom = p.domain
    R = rounder(prec)
    if L >= 2:
        mu = min(b - a for a, b in zip(dom, dom[1:]))
        es = [pr.e.value for pr in p.sigma]
        range_gap = min(b - a for a, b in zip(es, es[1:]))
        slopes = _adjacent_slopes(p.targets, p.rep, R, N)
        margin = min(min(fraction_of(s.lo), p.iota - fraction_of(s.hi)) for s in slopes)
        if margin <= 0:
            raise ValidationFailed("adjacent slope windows leave no margin")
        diam = max(dom[-1] - dom[0], Fraction(1))
        drift_rhs = (mu * margin / 4) ** 2

    def closed_form_ok(k: int) -> bool:
        z = Fraction(1, 1 << k)
        rt2 = Fraction(1, 1 << (k // 2))
        rt4 = Fraction(1, 1 << (k // 4))
        rt8 = Fraction(1, 1 << (k // 8))
        if rt2 > Fraction(1, 1 << (N + 8)):
            return False
        if L >= 2:
            if not 2 * z < mu:
                return False
            if not 3 * z * z < range_gap:
                return False
            if not 2 * L * rt8 <= Fraction(1, 1 << (N + 4)):
                return False
            if not 4 * rt4 < mu:
                return False
            if not (1 << (2 * (N + 6))) * 16 * L * L * rt4 * rt4 <= mu:
                return False
            if not 64 * L * L * diam * rt4 * rt4 <= drift_rhs:
                return False
        return True

    k = 16
    while not closed_form_ok(k):
        k += 1
        if k > (1 << 20):
            raise Indeterminate("no admissible closeness scale")
    floor_k = k
    bound = Fraction(1, 1 << (N + 6))

    def probe_ok(kk: int) -> bool:
        radius = Fraction(2, 1 << (kk // 4))
        return all(_modulus_ok(p.rep, d, radius, bound, prec) for d in dom)

    # the admissible scale halves roughly twice per stage (each layer's kernel
    # decay sharpens the flat zone the next probe must fit inside), so the
    # search has to be exponential-then-binary rather than unit steps
    if not probe_ok(k):
        step = 16
        while not probe_ok(k + step):
            k += step
            step *= 2
            if k + step > (1 << 20):
                raise Indeterminate("no admissible closeness scale")
        lo, hi = k, k + step
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if probe_ok(mid):
                hi = mid
            else:
                lo = mid
        k = hi
    while k > floor_k and probe_ok(k - 1):
        k -= 1
    z = Fraction(1, 1 << k)
    p._cache[key] = z
    return z


def zeta_close(p: Condition, q: Condition, zeta: Rational, prec: int = 320) -> bool:
    """Exact-rational closeness: matched pairs within zeta, matched slopes in
    (0, zeta), distinct heights across the union, equal layers, equal scales."""
    z = Fraction(zeta)
    if z <= 0:
        return False
    if p.N != q.N or len(p.sigma) != len(q.sigma):
        return False
    if p.rep.kappa != q.rep.kappa or p.rep.const != q.rep.const:
        return False
    if not p.rep.same_params(q.rep):
        return False
    union = sorted(set(p.sigma) | set(q.sigma), key=lambda pr: pr.d.value)
    hs = [pr.d.height for pr in union]
    if len(set(hs)) != len(hs):
        return False
    for a, b in zip(p.sigma, q.sigma):
        if abs(b.d.value - a.d.value) >= z:
            return False
        if a.d.value == b.d.value:
            if a != b:
                return False
            continue
        s = (b.e.value - a.e.value) / (b.d.value - a.d.value)
        if not 0 < s < z:
            return False
    try:
        return compute_zeta(p, prec) == compute_zeta(q, prec)
    except (ValidationFailed, Indeterminate):
        return False


# -- amalgamation ------------------------------------------------------------


def _pow2_at_most(x: Fraction) -> Fraction:
    """Largest power of two <= x (x > 0)."""
    if x <= 0:
        raise ValueError("need a positive bound")
    e = x.numerator.bit_length() - x.denominator.bit_length()
    cand = Fraction(1 << e) if e >= 0 else Fraction(1, 1 << -e)
    if cand > x:
        cand /= 2
    elif 2 * cand <= x:
        cand *= 2
    return cand


def _kernel_scale(k: int) -> int:
    """Integer in the open window (2^(k/2), 2^(k/2 + 1))."""
    if k % 2 == 0:
        return 3 << (k // 2 - 1)
    return 1 << ((k + 1) // 2)


def amalgamate(
    p: Condition,
    q: Condition,
    zeta: Optional[Rational] = None,
    final_slack: Optional[Rational] = None,
    prec: Optional[int] = None,
) -> Condition:
    """Join two close conditions one stage up.

    The new layer spikes at the matched midpoints, clips the stack down
    there, restores a positive floor, and re-fills the slope gaps over the
    union so every window lands strictly inside the next stage's bound.
    `final_slack` switches the gap fill to a terminal policy that leaves
    only the requested residual slope.

    Raises NotClose when the pair fails the closeness predicate and
    ValidationFailed when the amalgam does not certify.
    """
    z = compute_zeta(p)
    if zeta is not None and Fraction(zeta) != z:
        raise ValueError("zeta must be the computed closeness scale of the first argument")
    k = z.denominator.bit_length() - 1
    if prec is None:
        # positions inside the new kernels' flat zones live at the decay
        # scale 2^(-k/2); anything coarser collapses those intervals
        prec = max(320, k // 2 + 320)
    if not zeta_close(p, q, z):
        raise NotClose(f"conditions are not {z}-close")

    N = p.N
    R = rounder(prec)
    r = _kernel_scale(k)
    mu = None
    if len(p.sigma) >= 2:
        mu = min(b - a for a, b in zip(p.domain, p.domain[1:]))

    kernels = []
    seeds = []
    for a, b in zip(p.sigma, q.sigma):
        center = (a.d.value + b.d.value) / 2
        tops = [
            fraction_of(p.rep.g_enclosure(Enclosure.exact(R, x)).hi)
            for x in {a.d.value, b.d.value, center}
        ]
        gamma = max(tops) + Fraction(1, 1 << (N + 10))
        amp = gamma + Fraction(1, 1 << (N + 4))
        kernels.append(KSKernel(amp, Fraction(r), center))
        # seed the partition with a predicted flat-zone ball: the kernel's own
        # term stays above the local ceiling of g out to ((amp/ceil)^2 - 1)/r,
        # which spares the builder a doubling climb from the matching scale
        ceil_g = max(tops) + Fraction(1, 1 << (N + 9))
        delta = ((amp / ceil_g) ** 2 - 1) / (4 * r)
        if mu is not None:
            delta = min(delta, mu / 8)
        seeds.append((center, max(z, _pow2_at_most(delta))))
    psi = KernelSum(tuple(kernels))

    try:
        partition = build_sign_partition(p.rep, N, psi, seeds, prec=prec)
    except CrossingIsolationFailure:
        seeds = [(c, z) for c, _ in seeds]
        partition = build_sign_partition(p.rep, N, psi, seeds, prec=prec)

    sigma_u = tuple(sorted(set(p.sigma) | set(q.sigma), key=lambda pr: pr.d.value))
    targets_u = tuple((pr.d.value, pr.e.value) for pr in sigma_u)
    dom_u = tuple(t[0] for t in targets_u)

    eps_cap = Fraction(1, 1 << (N + 4))
    if len(targets_u) >= 2:
        rep_clip = p.rep.with_layer(Layer(psi, ThetaLayer(True, Fraction(0), ()), partition))
        clip_slopes = _adjacent_slopes(targets_u, rep_clip, R)
        min_lo = min(fraction_of(s.lo) for s in clip_slopes)
        if min_lo <= 0:
            raise Indeterminate("pair slope too small to certify at this precision")
        eps_cap = min(eps_cap, min_lo / 4)
    eps = _pow2_at_most(eps_cap)

    rep_eps = p.rep.with_layer(Layer(psi, ThetaLayer(True, eps, ()), partition))
    report = correctable_report(targets_u, rep_eps, p.iota, prec=prec)
    if not report.ok:
        raise ValidationFailed("clipped stack is not correctable over the union")

    eps_slopes = _adjacent_slopes(targets_u, rep_eps, R)
    masses = []
    for s, (lo_t, hi_t) in zip(eps_slopes, zip(targets_u, targets_u[1:])):
        w = hi_t[0] - lo_t[0]
        m_lo = fraction_of(s.lo) * w
        m_hi = fraction_of(s.hi) * w
        cap = Fraction(1, 1 << (N + 4)) * w
        if final_slack is not None:
            tail = Fraction(final_slack) * w
            if m_hi <= 2 * tail:
                masses.append(Fraction(0))
                continue
            if m_lo <= tail:
                raise Indeterminate("slope gap too tight against the requested tail")
            masses.append(m_lo - tail)
        else:
            budget = min(cap, m_lo) if m_lo > 0 else cap
            if m_hi <= Fraction(3, 4) * budget:
                masses.append(Fraction(0))
                continue
            if m_lo <= 0:
                raise Indeterminate("gap slope too small to certify at this precision")
            masses.append(m_lo - budget / 2)

    fills = build_correction(dom_u, masses, p.iota)
    layer = Layer(psi, ThetaLayer(True, eps, correction_bumps(fills)), partition)
    s_cond = Condition(
        sigma_u,
        N + 1,
        p.rep.with_layer(layer),
        meta={"zeta": z, "eps": eps, "scale": r},
    )
    ensure_valid(s_cond, prec=prec)
    if not (leq(s_cond, p, prec=prec) and leq(s_cond, q, prec=prec)):
        raise ValidationFailed("amalgam does not extend both parents")
    return s_cond


def advance(
    p: Condition,
    final_slack: Optional[Rational] = None,
    prec: Optional[int] = None,
) -> Condition:
    """One stage up without new points: amalgamate a condition with itself."""
    return amalgamate(p, p, final_slack=final_slack, prec=prec)


# -- extension by a target value ---------------------------------------------


def feasible_window(p: Condition, d: Rational, prec: int = 320) -> Tuple[Fraction, Fraction]:
    """Certified open interval of values a new pair at d may take."""
    dv = Fraction(d)
    if dv in p.domain:
        raise NoAdmissiblePoint("point already pinned")
    R = rounder(prec)
    iota = p.iota
    fd = p.rep.f_enclosure(Enclosure.exact(R, dv))
    lows, highs = [], []
    for dk, ek in p.targets:
        fk = p.rep.f_enclosure(Enclosure.exact(R, dk))
        df = fd - fk
        df_lo, df_hi = fraction_of(df.lo), fraction_of(df.hi)
        w = dv - dk
        if w > 0:
            lows.append(ek + df_hi)
            highs.append(ek + df_lo + iota * w)
        else:
            lows.append(ek + df_hi + iota * w)
            highs.append(ek + df_lo)
    lo, hi = max(lows), min(highs)
    if not lo < hi:
        raise NoAdmissiblePoint("no admissible value window at this point")
    return lo, hi


def _corrected_rep(p: Condition, prec: int) -> FuncRep:
    """The stack plus a bump-only layer carrying each gap's full residual mass."""
    R = rounder(prec)
    tg = p.targets
    masses = []
    for (d0, e0), (d1, e1) in zip(tg, tg[1:]):
        f0 = p.rep.f_enclosure(Enclosure.exact(R, d0))
        f1 = p.rep.f_enclosure(Enclosure.exact(R, d1))
        masses.append((Enclosure.exact(R, e1 - e0) - (f1 - f0)).mid_fraction())
    fills = build_correction(p.domain, masses, p.iota)
    layer = Layer(KernelSum(()), ThetaLayer(False, Fraction(0), correction_bumps(fills)), None)
    return p.rep.with_layer(layer)


def _invert_monotone(rep: FuncRep, p: Condition, ev: Fraction, prec: int) -> Fraction:
    """Dyadic preimage of ev under the strictly increasing corrected stack."""
    R = rounder(prec)
    tg = p.targets
    lo = hi = None
    for dk, ek in tg:
        if ek < ev:
            lo = dk
        elif ek > ev and hi is None:
            hi = dk
    if lo is None:
        hi = tg[0][0]
        step = Fraction(1)
        lo = hi - step
        while not rep.f_enclosure(Enclosure.exact(R, lo)).certainly_lt(Enclosure.exact(R, ev)):
            step *= 2
            lo = hi - step
            if step > 1 << 26:
                raise NoAdmissiblePoint("value lies beyond the reachable range")
    if hi is None:
        anchor = tg[-1][0]
        step = Fraction(1)
        hi = anchor + step
        while not rep.f_enclosure(Enclosure.exact(R, hi)).certainly_gt(Enclosure.exact(R, ev)):
            step *= 2
            hi = anchor + step
            if step > 1 << 26:
                raise NoAdmissiblePoint("value lies beyond the reachable range")
    # outward dyadic bracket keeps bisection midpoints small exact rationals
    grid = 1 << 6
    a = Fraction((lo * grid).__floor__(), grid)
    b = -Fraction(((-hi) * grid).__floor__(), grid)
    tol = Fraction(1, 1 << 50)
    while b - a > tol:
        mid = (a + b) / 2
        fm = rep.f_enclosure(Enclosure.exact(R, mid))
        if fm.decide_lt(ev) is Decision.PASS:
            a = mid
        elif fm.decide_gt(ev) is Decision.PASS:
            b = mid
        else:
            return mid
    return (a + b) / 2


def extend_with_target(
    p: Condition,
    e: LabeledPoint,
    dpool: Sequence[LabeledPoint],
    prec: int = 320,
    max_scan: int = 512,
) -> Condition:
    """Realize the value e through a pool point near its corrected preimage.

    The stack is corrected by full-mass gap fills, the preimage of e.value
    is isolated by certified bisection, and pool points are scanned outward
    from it for one whose labels and value window both admit the new pair.

    Raises NoAdmissiblePoint when no scanned pool point fits (with a window
    radius hint when one is computable) and HeightConflict when every near
    miss was a label clash.
    """
    ev = Fraction(e.value)
    if any(pr.e.value == ev for pr in p.sigma):
        raise ValueError("target value already realized")

    rep_star = _corrected_rep(p, prec)
    d_hat = _invert_monotone(rep_star, p, ev, prec)

    existing_values = set(p.domain)
    existing_heights = set(p.d_heights())
    n_height = n_value = n_window = 0
    for cand in sorted(dpool, key=lambda lp: abs(lp.value - d_hat))[:max_scan]:
        if cand.value in existing_values:
            n_value += 1
            continue
        if (
            cand.height.limit != e.height.limit
            or cand.height.offset <= e.height.offset
            or cand.height in existing_heights
        ):
            n_height += 1
            continue
        try:
            lo, hi = feasible_window(p, cand.value, prec)
        except NoAdmissiblePoint:
            n_window += 1
            continue
        guard = (hi - lo) / 1024
        if not lo + guard < ev < hi - guard:
            n_window += 1
            continue
        q = Condition(p.sigma + (Pair(cand, e),), p.N, p.rep)
        ensure_valid(q, prec=prec)
        return q

    if n_height and not n_value and not n_window:
        raise HeightConflict("every nearby pool point clashes on labels")
    radius = None
    try:
        lo, hi = feasible_window(p, d_hat, prec)
        radius = (hi - lo) / 4
    except NoAdmissiblePoint:
        pass
    raise NoAdmissiblePoint(
        f"no pool point admits the target near {float(d_hat):.6g}", radius=radius
    )


# -- compatibility of matched tuples ------------------------------------------


def compatible(
    tuple_a: Sequence[Tuple[Rational, Rational]],
    tuple_b: Sequence[Tuple[Rational, Rational]],
    phi: Callable[[Fraction], Rational],
) -> bool:
    """Matched points move together: positive slopes, increments under phi.

    Raises ZeroDivisionError when a matched pair coincides in the first
    coordinate.
    """
    if len(tuple_a) != len(tuple_b):
        raise ValueError("tuples must have equal length")
    for (da, ea), (db, eb) in zip(tuple_a, tuple_b):
        dd = Fraction(db) - Fraction(da)
        de = Fraction(eb) - Fraction(ea)
        if dd == 0:
            raise ZeroDivisionError("matched points coincide in the first coordinate")
        if not de / dd > 0:
            return False
        if not abs(de) < phi(abs(dd)):
            return False
    return True


# -- construction driver -------------------------------------------------------


@dataclass(frozen=True)
class ConstructionResult:
    condition: Condition
    rep: FuncRep
    requested: Tuple[Fraction, ...]
    realized: Tuple[Tuple[Fraction, Fraction], ...]
    rounds: int


def _estimate_preimage(p: Condition, ev: Fraction, prec: int) -> float:
    rep_star = _corrected_rep(p, prec)
    target = float(ev)
    lo = float(p.domain[0]) - 1.0
    hi = float(p.domain[-1]) + 1.0
    span = 1.0
    for _ in range(80):
        if rep_star.f_float(lo) <= target:
            break
        lo -= span
        span *= 2
    span = 1.0
    for _ in range(80):
        if rep_star.f_float(hi) >= target:
            break
        hi += span
        span *= 2
    for _ in range(80):
        mid = (lo + hi) / 2
        if rep_star.f_float(mid) < target:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def run_construction(
    targets: Sequence[Rational],
    rounds: Optional[int] = None,
    pool_step: Fraction = Fraction(1, 1 << 16),
    pool_span: int = 513,
    final_slack: Optional[Rational] = Fraction(1, 1 << 36),
    prec: int = 320,
) -> ConstructionResult:
    """Alternate target extensions with stage advances, starting from ONE.

    Each round synthesizes a fresh dyadic labeled pool around the estimated
    preimage of the next requested value, extends, then advances one stage;
    the last advance applies `final_slack` so every realized value sits
    within 2 * final_slack * gap-width of its request.
    """
    tgs = [Fraction(t) for t in targets]
    if rounds is None:
        rounds = len(tgs)
    cond = ONE
    offset = 2
    realized = []
    for k in range(rounds):
        if k < len(tgs):
            ev = tgs[k]
            e_pt = LabeledPoint(ev, Height(Fraction(0), offset))
            offset += 1
            d_est = _estimate_preimage(cond, ev, prec)
            base = Fraction(round(d_est / pool_step)) * pool_step
            half = pool_span // 2
            pool = []
            for j in range(-half, pool_span - half):
                pool.append(LabeledPoint(base + j * pool_step, Height(Fraction(0), offset)))
                offset += 1
            cond = extend_with_target(cond, e_pt, pool, prec=prec)
            chosen = next(pr for pr in cond.sigma if pr.e == e_pt)
            realized.append((chosen.d.value, chosen.e.value))
        slack = final_slack if k == rounds - 1 else None
        cond = advance(cond, final_slack=slack)
    return ConstructionResult(cond, cond.rep, tuple(tgs), tuple(realized), rounds)
