"""Nested box pairs and the slope gap they force.

Level-n boxes are I_sigma x J_sigma with |I| = p_n, |J| = q_n, children
pinned at the two ends of the parent in both coordinates.  Any two corner
points whose deepest common box is at level n have slope magnitude either
<= q_n / (p_n - 2 p_{n+1})  (different I-children: "small") or
>= (q_n - 2 q_{n+1}) / p_{n+1}  (same I-child, different J-children:
"large"); nothing lands strictly between the two bounds.

All arithmetic here is exact Fractions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence


class ScheduleViolation(Exception):
    """A box schedule failing its interleaving or shrinkage inequalities."""


class NotInTree(Exception):
    """A coordinate outside every box at some level."""


class SameLeaf(Exception):
    """Both points descend to the same deepest stored box."""


class Classification(enum.Enum):
    SMALL = "small"
    LARGE = "large"


@dataclass(frozen=True)
class BoxSchedule:
    """Side lengths p (horizontal) and q (vertical), one per level.

    Required: p0 > q0 > p1 > q1 > ..., 2 p_{n+1} < p_n, 2 q_{n+1} < q_n,
    and the ratios q_n/p_n and p_{n+1}/q_n non-increasing.  (A geometric
    schedule has constant ratios; the accelerating schedule below has them
    strictly decreasing, which is what the eps-delta extraction needs.)
    """

    p: tuple[Fraction, ...]
    q: tuple[Fraction, ...]

    def __post_init__(self) -> None:
        if len(self.p) != len(self.q) or len(self.p) < 2:
            raise ScheduleViolation("need equally many p and q, at least two levels")
        inter = []
        for n in range(len(self.p)):
            inter.append(self.p[n])
            inter.append(self.q[n])
        if any(v <= 0 for v in inter):
            raise ScheduleViolation("side lengths must be positive")
        for a, b in zip(inter, inter[1:]):
            if not a > b:
                raise ScheduleViolation(f"interleaving fails at {a} > {b}")
        for n in range(len(self.p) - 1):
            if not 2 * self.p[n + 1] < self.p[n]:
                raise ScheduleViolation(f"2*p({n + 1}) < p({n}) fails")
            if not 2 * self.q[n + 1] < self.q[n]:
                raise ScheduleViolation(f"2*q({n + 1}) < q({n}) fails")
            if self.q[n + 1] / self.p[n + 1] > self.q[n] / self.p[n]:
                raise ScheduleViolation(f"q/p ratio increases at level {n + 1}")
        for n in range(len(self.p) - 2):
            if self.p[n + 2] / self.q[n + 1] > self.p[n + 1] / self.q[n]:
                raise ScheduleViolation(f"p'/q ratio increases at level {n + 1}")

    @property
    def levels(self) -> int:
        return len(self.p)

    @staticmethod
    def geometric(ratio: int, levels: int) -> "BoxSchedule":
        """p_n = ratio^-2n, q_n = ratio^-(2n+1).  Constant slope bounds."""
        if ratio < 2:
            raise ScheduleViolation("geometric ratio must be >= 2")
        p = tuple(Fraction(1, ratio ** (2 * n)) for n in range(levels))
        q = tuple(Fraction(1, ratio ** (2 * n + 1)) for n in range(levels))
        return BoxSchedule(p, q)

    @staticmethod
    def accelerating(ratio: int, levels: int) -> "BoxSchedule":
        """Exponent gaps widen with depth: q_n/p_n = ratio^-(n+1) -> 0 and
        p_{n+1}/q_n = ratio^-(n+1) -> 0, so the slope bounds run away."""
        if ratio < 2:
            raise ScheduleViolation("accelerating ratio must be >= 2")
        a = 0
        p, q = [], []
        for n in range(levels):
            p.append(Fraction(1, ratio**a))
            q.append(Fraction(1, ratio ** (a + n + 1)))
            a += 2 * (n + 1)
        return BoxSchedule(tuple(p), tuple(q))

    def small_max(self, n: int) -> Fraction:
        """Largest slope magnitude across different I-children at level n."""
        self._need(n + 1)
        den = self.p[n] - 2 * self.p[n + 1]
        if den == 0:
            raise ScheduleViolation("p(n) = 2 p(n+1): degenerate gap")
        return self.q[n] / den

    def large_min(self, n: int) -> Fraction:
        """Smallest slope magnitude across different J-children at level n."""
        self._need(n + 1)
        return (self.q[n] - 2 * self.q[n + 1]) / self.p[n + 1]

    def _need(self, n: int) -> None:
        if not 0 <= n < len(self.p):
            raise ScheduleViolation(f"level {n} beyond stored schedule")


@dataclass(frozen=True)
class BoxTree:
    """The pair of nested interval trees over a common binary index.

    Intervals are computed on demand from the word; children sit at the
    ends of the parent: word bit 0 keeps the left end, bit 1 the right.
    """

    sched: BoxSchedule
    depth: int
    h_origin: Fraction = Fraction(0)
    v_origin: Fraction = Fraction(0)

    def __post_init__(self) -> None:
        if not 1 <= self.depth <= self.sched.levels - 1:
            raise ScheduleViolation(
                f"depth {self.depth} needs schedule levels up to {self.depth}"
            )

    def h_interval(self, word: Sequence[int]) -> tuple[Fraction, Fraction]:
        return self._interval(word, self.h_origin, self.sched.p)

    def v_interval(self, word: Sequence[int]) -> tuple[Fraction, Fraction]:
        return self._interval(word, self.v_origin, self.sched.q)

    def _interval(
        self, word: Sequence[int], origin: Fraction, sides: tuple[Fraction, ...]
    ) -> tuple[Fraction, Fraction]:
        if len(word) > self.depth:
            raise ScheduleViolation(f"word longer than tree depth {self.depth}")
        a = origin
        b = origin + sides[0]
        for lvl, bit in enumerate(word):
            side = sides[lvl + 1]
            if bit == 0:
                b = a + side
            elif bit == 1:
                a = b - side
            else:
                raise ValueError(f"word bits must be 0/1, got {bit}")
        return a, b

    def _locate(
        self, x: Fraction, origin: Fraction, sides: tuple[Fraction, ...]
    ) -> tuple[int, ...]:
        a = origin
        b = origin + sides[0]
        if not a <= x <= b:
            raise NotInTree(f"{x} outside the root interval [{a}, {b}]")
        word = []
        for lvl in range(self.depth):
            side = sides[lvl + 1]
            if a <= x <= a + side:
                word.append(0)
                b = a + side
            elif b - side <= x <= b:
                word.append(1)
                a = b - side
            else:
                raise NotInTree(f"{x} in the level-{lvl} gap of [{a}, {b}]")
        return tuple(word)

    def locate_h(self, x: Fraction) -> tuple[int, ...]:
        return self._locate(x, self.h_origin, self.sched.p)

    def locate_v(self, y: Fraction) -> tuple[int, ...]:
        return self._locate(y, self.v_origin, self.sched.q)

    def h_corners(self, level: int) -> list[Fraction]:
        """Endpoints of every level-`level` horizontal interval, sorted."""
        return self._corners(level, self.h_interval)

    def v_corners(self, level: int) -> list[Fraction]:
        return self._corners(level, self.v_interval)

    def _corners(self, level: int, interval) -> list[Fraction]:
        if not 0 <= level <= self.depth:
            raise ScheduleViolation(f"level {level} beyond tree depth")
        out = set()
        for code in range(1 << level):
            word = tuple((code >> (level - 1 - t)) & 1 for t in range(level))
            a, b = interval(word)
            out.add(a)
            out.add(b)
        return sorted(out)

    def grid_corners(self, level: int) -> list[tuple[Fraction, Fraction]]:
        """All plane points (h-corner, v-corner); the words are independent,
        so this is a full product grid."""
        hs = self.h_corners(level)
        vs = self.v_corners(level)
        return [(x, y) for x in hs for y in vs]


def build_pair(
    sched: BoxSchedule,
    depth: int,
    h_origin: Fraction = Fraction(0),
    v_origin: Fraction = Fraction(0),
) -> BoxTree:
    return BoxTree(sched, depth, h_origin, v_origin)


def classify_pair(
    tree: BoxTree,
    pt0: tuple[Fraction, Fraction],
    pt1: tuple[Fraction, Fraction],
) -> tuple[Classification, int]:
    """Deepest-common-box classification of a pair of plane points.

    SMALL: the x-coordinates split into different I-children there (four
    corner configurations).  LARGE: same I-child but different J-children
    (the other two).  Raises SameLeaf when no stored level separates them.
    """
    (x0, y0), (x1, y1) = pt0, pt1
    hw0, hw1 = tree.locate_h(x0), tree.locate_h(x1)
    vw0, vw1 = tree.locate_v(y0), tree.locate_v(y1)
    mh = _split_index(hw0, hw1)
    mv = _split_index(vw0, vw1)
    n = min(mh, mv)
    if n >= tree.depth:
        raise SameLeaf(f"points share the depth-{tree.depth} box")
    if mh == n:
        return Classification.SMALL, n
    return Classification.LARGE, n


def _split_index(w0: Sequence[int], w1: Sequence[int]) -> int:
    for i, (a, b) in enumerate(zip(w0, w1)):
        if a != b:
            return i
    return len(w0)


def slope(pt0: tuple[Fraction, Fraction], pt1: tuple[Fraction, Fraction]) -> Fraction:
    dx = pt1[0] - pt0[0]
    if dx == 0:
        raise ZeroDivisionError("vertical pair has no slope")
    return (pt1[1] - pt0[1]) / dx


def delta_for_eps(sched: BoxSchedule, eps: Fraction) -> tuple[Fraction, int]:
    """A delta such that corner pairs closer than delta in both coordinates
    classify at a level whose slope bounds already clear (eps, 1/eps).

    Needs small_max < eps and large_min > 1/eps from some level on; on a
    geometric schedule the bounds are constant, so use an accelerating one.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must be in (0, 1)")
    top = sched.levels - 2
    n_star = None
    for n in range(top, -1, -1):
        if sched.small_max(n) < eps and sched.large_min(n) > 1 / eps:
            n_star = n
        else:
            break
    if n_star is None:
        raise ScheduleViolation(
            f"no stored level clears eps={eps}: deepest bounds "
            f"{sched.small_max(top)} / {sched.large_min(top)}"
        )
    if n_star == 0:
        return sched.p[0], 0
    gaps = []
    for m in range(n_star):
        gaps.append(sched.p[m] - 2 * sched.p[m + 1])
        gaps.append(sched.q[m] - 2 * sched.q[m + 1])
    return min(gaps), n_star
