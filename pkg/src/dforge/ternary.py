"""Ternary digit space: points with digits in {0, 2}, block schedules, pairing.

A point is a finite digit word d(0).d(1)d(2)... with every digit 0 or 2;
digit 0 is the integer part and digit n (n >= 1) multiplies 3^-n, so values
live in [0, 3].  Everything here is exact integer/Fraction arithmetic; no
floating point enters this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence


class EqualWithinDepth(Exception):
    """The two words agree on every commonly stored digit."""


class InsufficientDepth(Exception):
    """A digit or block beyond the stored depth (or schedule) was requested."""


_DIGITS = frozenset((0, 2))


@dataclass(frozen=True)
class TernaryPoint:
    """Finite digit word over {0, 2}; immutable."""

    digits: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.digits:
            raise ValueError("empty digit word")
        bad = set(self.digits) - _DIGITS
        if bad:
            raise ValueError(f"digits must be 0 or 2, got {sorted(bad)}")

    @property
    def depth(self) -> int:
        return len(self.digits)

    def digit(self, n: int) -> int:
        if n < 0:
            raise ValueError("negative digit index")
        if n >= len(self.digits):
            raise InsufficientDepth(f"digit {n} of a depth-{len(self.digits)} word")
        return self.digits[n]

    def value(self) -> Fraction:
        """Exact value with unstored digits read as 0."""
        acc = Fraction(self.digits[0])
        p = 1
        for d in self.digits[1:]:
            p *= 3
            if d:
                acc += Fraction(d, p)
        return acc

    def prefix(self, length: int) -> "TernaryPoint":
        if not 1 <= length <= len(self.digits):
            raise InsufficientDepth(f"prefix {length} of depth {len(self.digits)}")
        return TernaryPoint(self.digits[:length])

    def word_str(self) -> str:
        head = str(self.digits[0])
        tail = "".join(str(d) for d in self.digits[1:])
        return f"{head}.{tail}" if tail else head

    @staticmethod
    def parse(text: str) -> "TernaryPoint":
        head, _, tail = text.partition(".")
        if not head:
            raise ValueError(f"malformed digit word {text!r}")
        return TernaryPoint(tuple(int(c) for c in head + tail))

    def __str__(self) -> str:
        return self.word_str()


def delta(x: TernaryPoint, y: TernaryPoint) -> int:
    """Least digit index where x and y differ.

    Raises EqualWithinDepth when they agree on all commonly stored digits;
    a finite word says nothing about its unstored tail, so equality there
    cannot be refuted.
    """
    common = min(x.depth, y.depth)
    for n in range(common):
        if x.digits[n] != y.digits[n]:
            return n
    raise EqualWithinDepth(f"words agree through depth {common}")


@dataclass(frozen=True)
class BlockSchedule:
    """Strictly increasing gamma with gamma(0) = 0 and gamma(k+1) >= gamma(k)^2.

    Block k of a word occupies digit positions [gamma(k), gamma(k+1)).
    """

    gamma: tuple[int, ...]

    def __post_init__(self) -> None:
        g = self.gamma
        if len(g) < 2:
            raise ValueError("schedule needs at least gamma(0), gamma(1)")
        if g[0] != 0:
            raise ValueError("gamma(0) must be 0")
        for k in range(len(g) - 1):
            if g[k + 1] <= g[k]:
                raise ValueError(f"gamma not strictly increasing at {k}")
            if g[k + 1] < g[k] * g[k]:
                raise ValueError(f"gamma({k + 1}) < gamma({k})^2")

    @staticmethod
    def minimal(levels: int) -> "BlockSchedule":
        """The pointwise least admissible schedule: 0, 1, 2, 4, 16, 256, ..."""
        g = [0]
        for _ in range(levels - 1):
            g.append(max(g[-1] * g[-1], g[-1] + 1))
        return BlockSchedule(tuple(g))

    @property
    def levels(self) -> int:
        return len(self.gamma)

    def start(self, k: int) -> int:
        if not 0 <= k < len(self.gamma):
            raise InsufficientDepth(f"gamma({k}) beyond stored schedule")
        return self.gamma[k]

    def block_len(self, k: int) -> int:
        if k < 0:
            return 0
        if k + 1 >= len(self.gamma):
            raise InsufficientDepth(f"block {k} needs gamma({k + 1})")
        return self.gamma[k + 1] - self.gamma[k]

    def level_of(self, n: int) -> int:
        """The k with gamma(k) <= n < gamma(k+1)."""
        if n < 0:
            raise ValueError("negative digit index")
        for k in range(len(self.gamma) - 1):
            if self.gamma[k] <= n < self.gamma[k + 1]:
                return k
        raise InsufficientDepth(f"digit position {n} beyond gamma top {self.gamma[-1]}")


def block_digit(x: TernaryPoint, k: int, j: int, sched: BlockSchedule) -> int:
    """Digit j of block k, with blocks of negative index identically zero and
    positions at or past the block end reading 0."""
    if j < 0:
        raise ValueError("negative in-block index")
    if k < 0:
        return 0
    if j >= sched.block_len(k):
        return 0
    return x.digit(sched.start(k) + j)


def block(x: TernaryPoint, k: int, sched: BlockSchedule) -> tuple[int, ...]:
    """The stored word of block k (empty for k < 0: those blocks are all-zero)."""
    if k < 0:
        return ()
    n = sched.block_len(k)
    return tuple(x.digit(sched.start(k) + j) for j in range(n))


def ell(x: TernaryPoint, k: int, sched: BlockSchedule) -> int:
    """Least l with block-k digits zero from position l on."""
    if k < 0:
        return 0
    w = block(x, k, sched)
    last = 0
    for j, d in enumerate(w):
        if d:
            last = j + 1
    return last


def pair_phi(i: int, j: int) -> int:
    """Shell pairing: shells of constant max(i, j), traversed
    (0,m), (1,m), ..., (m,m), (m,m-1), ..., (m,0)."""
    if i < 0 or j < 0:
        raise ValueError("pairing needs nonnegative arguments")
    m = max(i, j)
    if j == m:
        return m * m + i
    return m * m + 2 * m - j


def unpair(n: int) -> tuple[int, int]:
    if n < 0:
        raise ValueError("negative code")
    m = math.isqrt(n)
    r = n - m * m
    if r <= m:
        return (r, m)
    return (m, 2 * m - r)


def from_digit_iter(digits: Iterable[int]) -> TernaryPoint:
    return TernaryPoint(tuple(digits))


def random_point(depth: int, rng) -> TernaryPoint:
    """Uniform digit word of the given depth; integer digit also in {0, 2}."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    return TernaryPoint(tuple(2 * rng.randrange(2) for _ in range(depth)))
