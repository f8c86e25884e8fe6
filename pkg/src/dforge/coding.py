"""Flat coding of digit words: many words into one, with Holder-flat decoders.

encode(i, s, x) writes block k-2 of x into block k of the output through the
shell pairing (slot j of output block k reads slot phi(i, j) of input block
k-2), with an explicit prefix s overriding the first lh(s) digits.  decode
inverts a finite family of encoded words simultaneously, capping each block
by the diagonal bound psi(k) and reporting the prefix each input needs.

Flatness: if words x, y first differ in block k (Gamma(k) <= delta(x,y) <
Gamma(k+1)), their codes first differ at position >= Gamma(k+2).  Against
|u - t| ~ 3^-delta this gives |f(u) - f(t)| <= M_q |u - t|^q once
-Gamma(k+2) + 1 + q*Gamma(k+1) < 0; the certificate checks both the
digit-space bound on sampled pairs and the exponent table.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import ceil, log2
from typing import Optional, Sequence

from dforge.ternary import (
    BlockSchedule,
    EqualWithinDepth,
    TernaryPoint,
    block_digit,
    delta,
    ell,
    pair_phi,
    unpair,
)


class DepthExhausted(Exception):
    """decode cannot place even block 0 within the stored depth."""


_DIGITS = frozenset((0, 2))


@dataclass(frozen=True)
class CodePrefix:
    """Finite override word; may be empty."""

    digits: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        bad = set(self.digits) - _DIGITS
        if bad:
            raise ValueError(f"prefix digits must be 0 or 2, got {sorted(bad)}")

    def __len__(self) -> int:
        return len(self.digits)


def encode(
    i: int,
    s: CodePrefix,
    x: TernaryPoint,
    sched: BlockSchedule,
    depth: int,
) -> TernaryPoint:
    """The word f_i^s(x) to the given depth.

    Output block k (k >= 2) at slot j carries input block k-2 at slot
    phi(i, j); blocks 0 and 1 are zero outside the prefix.  Raises
    InsufficientDepth if x lacks a digit the coding needs.
    """
    if i < 0:
        raise ValueError("coding index must be nonnegative")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    out = []
    for n in range(depth):
        if n < len(s.digits):
            out.append(s.digits[n])
            continue
        k = sched.level_of(n)
        j = n - sched.start(k)
        out.append(block_digit(x, k - 2, pair_phi(i, j), sched))
    return TernaryPoint(tuple(out))


@dataclass(frozen=True)
class DecodeResult:
    x: TernaryPoint
    prefixes: tuple[CodePrefix, ...]
    r: tuple[int, ...]
    psi: tuple[int, ...]


def _usable_top(sched: BlockSchedule, depth: int) -> int:
    """Largest k with the inputs deep enough for ell at block k+2:
    needs Gamma(k+3) <= depth."""
    k = -1
    while k + 4 < sched.levels and sched.gamma[k + 4] <= depth:
        k += 1
    return k


def decode(
    ys: Sequence[TernaryPoint],
    sched: BlockSchedule,
) -> DecodeResult:
    """Simultaneous inverse of encode for a finite family.

    All inputs are read at their common stored depth.  Block k of the output
    takes digits from block k+2 of each y_i through the pairing, zeroed from
    the diagonal bound psi(k) = min(blocklen(k), max_i (i + ell_i(k+2))^2) on.
    r_i is the least stage from which the bound clears input i's content on
    every usable block; the prefix s_i = y_i restricted to Gamma(r_i + 2)
    then makes encode(i, s_i, x) reproduce y_i exactly.
    """
    if not ys:
        raise ValueError("decode needs at least one input")
    depth = min(y.depth for y in ys)
    kmax = _usable_top(sched, depth)
    if kmax < 0:
        raise DepthExhausted(
            f"depth {depth} < gamma(3) = {sched.gamma[3] if sched.levels > 3 else '?'}"
        )

    psi: list[int] = []
    thresholds: list[list[int]] = []  # [k][i] = (i + ell_i(k+2))^2
    for k in range(kmax + 1):
        th = [(i + ell(y, k + 2, sched)) ** 2 for i, y in enumerate(ys)]
        thresholds.append(th)
        psi.append(min(sched.block_len(k), max(th)))

    digits: list[int] = []
    for k in range(kmax + 1):
        for m in range(sched.block_len(k)):
            if m >= psi[k]:
                digits.append(0)
                continue
            i, j = unpair(m)
            if i >= len(ys):
                digits.append(0)
                continue
            digits.append(block_digit(ys[i], k + 2, j, sched))
    x = TernaryPoint(tuple(digits))

    rs: list[int] = []
    prefixes: list[CodePrefix] = []
    for i, y in enumerate(ys):
        r = kmax + 1  # vacuously admissible
        for cand in range(kmax + 1):
            if all(psi[k] >= thresholds[k][i] for k in range(cand, kmax + 1)):
                r = cand
                break
        rs.append(r)
        cut = min(sched.gamma[r + 2], y.depth)
        prefixes.append(CodePrefix(y.digits[:cut]))
    return DecodeResult(x, tuple(prefixes), tuple(rs), tuple(psi))


# -- tiny profiles ------------------------------------------------------


@dataclass(frozen=True)
class TinyFamily:
    """A certified-tiny bound family: psi(k)^n / k -> 0 for every n.

    Bases: constants, and ceil(c * log2(k+2)^e).  (Root families
    k -> ceil(c*k^(1/m)) are NOT tiny: their 2m-th power grows like k^2.)
    The closure operations of the theory are provided: pow raises values
    to an integer power, shift sends psi to k -> r + psi(k+r); both
    preserve tininess.
    """

    kind: str  # "const" | "logpow"
    c: Fraction
    e: int = 1
    ops: tuple[tuple[str, int], ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in ("const", "logpow"):
            raise ValueError(f"unknown family kind {self.kind!r}")
        if self.c < 0:
            raise ValueError("family scale must be nonnegative")
        if self.e < 0:
            raise ValueError("log exponent must be nonnegative")
        for op, r in self.ops:
            if op not in ("pow", "shift") or r < 0:
                raise ValueError(f"bad closure op {(op, r)}")

    @staticmethod
    def constant(c: int) -> "TinyFamily":
        return TinyFamily("const", Fraction(c), 0)

    @staticmethod
    def log_power(c: Fraction, e: int) -> "TinyFamily":
        return TinyFamily("logpow", Fraction(c), e)

    def pow(self, r: int) -> "TinyFamily":
        return TinyFamily(self.kind, self.c, self.e, self.ops + (("pow", r),))

    def shift(self, r: int) -> "TinyFamily":
        return TinyFamily(self.kind, self.c, self.e, self.ops + (("shift", r),))

    def _base(self, k: int) -> int:
        if self.kind == "const":
            return ceil(self.c)
        return ceil(self.c * Fraction(log2(k + 2)) ** self.e)

    def __call__(self, k: int) -> int:
        return self._eval(k, len(self.ops))

    def _eval(self, k: int, nops: int) -> int:
        if nops == 0:
            return self._base(k)
        op, r = self.ops[nops - 1]
        if op == "pow":
            return self._eval(k, nops - 1) ** r
        return r + self._eval(k + r, nops - 1)


@dataclass(frozen=True)
class TinyProfile:
    """Per-block content lengths of a word, with an optional certified bound."""

    values: tuple[int, ...]
    family: Optional[TinyFamily] = None


def profile_of(x: TernaryPoint, sched: BlockSchedule) -> TinyProfile:
    ks = stored_blocks(x, sched)
    return TinyProfile(tuple(ell(x, k, sched) for k in range(ks)))


def stored_blocks(x: TernaryPoint, sched: BlockSchedule) -> int:
    """Number of fully stored blocks of x."""
    k = 0
    while k + 1 < sched.levels and sched.gamma[k + 1] <= x.depth:
        k += 1
    return k


def in_T_surrogate(x: TernaryPoint, sched: BlockSchedule, family: TinyFamily) -> bool:
    """Every fully stored block's content length within the family bound."""
    return all(ell(x, k, sched) <= family(k) for k in range(stored_blocks(x, sched)))


# -- flatness -----------------------------------------------------------


def exponent(k: int, q: int, sched: BlockSchedule) -> int:
    """-Gamma(k+2) + 1 + q*Gamma(k+1): the digit-count balance of
    |f(u)-f(t)| against |u-t|^q across a level-k split."""
    if q < 1:
        raise ValueError("q must be a positive integer")
    return -sched.start(k + 2) + 1 + q * sched.start(k + 1)


def exponent_table(q: int, kmax: int, sched: BlockSchedule) -> dict[int, int]:
    return {k: exponent(k, q, sched) for k in range(kmax + 1)}


def exponent_threshold(q: int, sched: BlockSchedule) -> int:
    """Least k0 with exponent(k, q) < 0 for every stored k >= k0."""
    kmax = sched.levels - 3
    k0 = kmax + 1
    for k in range(kmax, -1, -1):
        if exponent(k, q, sched) < 0:
            k0 = k
        else:
            break
    return k0


@dataclass(frozen=True)
class FlatnessReport:
    pairs_checked: int
    violations: tuple[tuple[str, str], ...]
    exponents: dict[int, int] = field(default_factory=dict)
    threshold: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations


def _code_digit(
    i: int, s: CodePrefix, x: TernaryPoint, n: int, sched: BlockSchedule
) -> int:
    if n < len(s.digits):
        return s.digits[n]
    k = sched.level_of(n)
    return block_digit(x, k - 2, pair_phi(i, n - sched.start(k)), sched)


def flatness_certificate(
    i: int,
    s: CodePrefix,
    q: int,
    sched: BlockSchedule,
    depth: int,
    pairs: int,
    rng,
) -> FlatnessReport:
    """Sample word pairs at the given depth and verify the coded words
    agree strictly below Gamma(k+2), where k is the split level of the pair;
    attach the exponent table for q."""
    from dforge.ternary import random_point

    violations: list[tuple[str, str]] = []
    checked = 0
    for _ in range(pairs):
        x = random_point(depth, rng)
        y = random_point(depth, rng)
        try:
            d = delta(x, y)
        except EqualWithinDepth:
            continue
        k = sched.level_of(d)
        checked += 1
        target = sched.start(k + 2)
        same = all(
            _code_digit(i, s, x, n, sched) == _code_digit(i, s, y, n, sched)
            for n in range(target)
        )
        if not same:
            violations.append((x.word_str(), y.word_str()))
    kmax = sched.levels - 3
    return FlatnessReport(
        pairs_checked=checked,
        violations=tuple(violations),
        exponents=exponent_table(q, kmax, sched),
        threshold=exponent_threshold(q, sched),
    )
