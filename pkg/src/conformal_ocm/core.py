"""Foundational types: examples, bags, significance levels, regions and p-values.

Everything here is an immutable value.  p-values are exact rationals
(:class:`fractions.Fraction`) because conformal p-values are counts divided
by a bag size.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import permutations
from typing import Any, Hashable, Iterable, Iterator, Mapping, Sequence

import numpy as np

__all__ = [
    "Example",
    "Bag",
    "SignificanceLevel",
    "LabelSet",
    "RealRegion",
    "PValueReport",
    "as_fraction",
    "bag_draw_probability",
    "bag_ordering_probability",
    "p_value_from_scores",
    "count_at_least",
    "region_from_pvalues",
    "confidence_credibility",
    "grid_snap",
    "lattice_points",
    "TIE_RTOL",
]

# Scores closer than this (relative) count as ties; absorbs decimal round-off
# such as |6.4 - 6.2| vs |5.9 - 5.7|.
TIE_RTOL = 1e-9

_SNAP_TOL = 1e-12


@dataclass(frozen=True, order=True)
class Example:
    """An example ``z = (x, y)``.

    ``x`` is a tuple of real features (possibly empty, for prediction from old
    examples alone) and ``y`` a categorical symbol, a real number or ``None``
    when the label is not yet known.
    """

    x: tuple[float, ...] = ()
    y: Any = None

    def __post_init__(self) -> None:
        if not isinstance(self.x, tuple):
            object.__setattr__(self, "x", tuple(np.atleast_1d(self.x).tolist()))

    def with_label(self, y: Any) -> "Example":
        return Example(self.x, y)


class Bag:
    """Frozen multiset.

    Two bags built from the same elements in different orders compare equal
    and hash equal; multiplicities are kept, order is not.
    """

    __slots__ = ("_counts", "_size")

    def __init__(self, elements: Iterable[Hashable] = ()) -> None:
        counts = Counter(elements)
        self._counts = counts
        self._size = sum(counts.values())

    @classmethod
    def _from_counter(cls, counts: Counter) -> "Bag":
        bag = cls.__new__(cls)
        bag._counts = +counts
        bag._size = sum(bag._counts.values())
        return bag

    def __len__(self) -> int:
        return self._size

    def __iter__(self) -> Iterator:
        for element, k in self._counts.items():
            for _ in range(k):
                yield element

    def __contains__(self, element: object) -> bool:
        return self._counts.get(element, 0) > 0

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Bag):
            return NotImplemented
        return self._counts == other._counts

    def __hash__(self) -> int:
        return hash(frozenset(self._counts.items()))

    def __repr__(self) -> str:
        inner = ", ".join(f"{e!r}: {k}" for e, k in self.items())
        return f"Bag({{{inner}}})"

    def items(self) -> list[tuple[Hashable, int]]:
        """(element, multiplicity) pairs in a deterministic order."""
        try:
            return sorted(self._counts.items())
        except TypeError:
            return sorted(self._counts.items(), key=lambda kv: repr(kv[0]))

    def distinct(self) -> list[Hashable]:
        return [e for e, _ in self.items()]

    def multiplicity(self, element: Hashable) -> int:
        return self._counts.get(element, 0)

    def add(self, element: Hashable) -> "Bag":
        counts = Counter(self._counts)
        counts[element] += 1
        return Bag._from_counter(counts)

    def remove(self, element: Hashable) -> "Bag":
        """Bag with one copy of ``element`` removed."""
        if element not in self:
            raise KeyError(f"{element!r} is not in the bag")
        counts = Counter(self._counts)
        counts[element] -= 1
        return Bag._from_counter(counts)

    def union(self, other: "Bag") -> "Bag":
        return Bag._from_counter(self._counts + other._counts)


class SignificanceLevel(float):
    """A float strictly inside (0, 1)."""

    def __new__(cls, value: float) -> "SignificanceLevel":
        value = float(value)
        if not 0.0 < value < 1.0:
            raise ValueError(f"significance level must lie in (0, 1), got {value}")
        return super().__new__(cls, value)


def as_fraction(eps: float | Fraction) -> Fraction:
    """Exact rational reading of a significance level.

    Floats are snapped to the nearest fraction with denominator at most 1e9 so
    that ``0.08`` means 2/25 and ``1/3`` means one third.
    """
    if isinstance(eps, Fraction):
        return eps
    return Fraction(float(eps)).limit_denominator(10**9)


# --------------------------------------------------------------------------
# regions


@dataclass(frozen=True)
class LabelSet:
    """Finite prediction region for classification, in canonical label order."""

    labels: tuple = ()

    def __contains__(self, y: object) -> bool:
        return y in self.labels

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    @property
    def is_empty(self) -> bool:
        return not self.labels

    def issubset(self, other: "LabelSet") -> bool:
        return set(self.labels) <= set(other.labels)

    def __str__(self) -> str:
        return "{" + ", ".join(str(y) for y in self.labels) + "}"


def _merge_intervals(intervals: Iterable[tuple[float, float]]) -> tuple[tuple[float, float], ...]:
    spans = sorted((float(a), float(b)) for a, b in intervals if a <= b)
    merged: list[list[float]] = []
    for a, b in spans:
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return tuple((a, b) for a, b in merged)


@dataclass(frozen=True)
class RealRegion:
    """Finite union of disjoint closed intervals, sorted and merged.

    Endpoints may be infinite; ``(-inf, inf)`` is the whole line.
    """

    intervals: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "intervals", _merge_intervals(self.intervals))

    @classmethod
    def interval(cls, lo: float, hi: float) -> "RealRegion":
        return cls(((lo, hi),))

    @classmethod
    def everything(cls) -> "RealRegion":
        return cls(((-math.inf, math.inf),))

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    def __contains__(self, y: float) -> bool:
        return any(a <= y <= b for a, b in self.intervals)

    def covers(self, y: float, rtol: float = TIE_RTOL) -> bool:
        """Membership with endpoints widened by ``rtol`` (relative, at least absolute).

        Breakpoints are roots of floating-point equations; a label that ties
        exactly at one may land a rounding error outside the computed interval.
        """
        return any(a - rtol * max(1.0, abs(a)) <= y <= b + rtol * max(1.0, abs(b)) for a, b in self.intervals)

    def __len__(self) -> int:
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    def hull(self) -> tuple[float, float] | None:
        if self.is_empty:
            return None
        return self.intervals[0][0], self.intervals[-1][1]

    def gaps(self) -> list[tuple[float, float]]:
        """Open gaps between consecutive intervals."""
        return [(a[1], b[0]) for a, b in zip(self.intervals, self.intervals[1:])]

    def issubset(self, other: "RealRegion", tol: float = 0.0) -> bool:
        return all(
            any(c - tol <= a and b <= d + tol for c, d in other.intervals)
            for a, b in self.intervals
        )

    def measure(self) -> float:
        return sum(b - a for a, b in self.intervals)

    def __str__(self) -> str:
        if self.is_empty:
            return "{}"
        return " U ".join(f"[{a:.6g}, {b:.6g}]" for a, b in self.intervals)


# --------------------------------------------------------------------------
# bag kernels


def bag_draw_probability(bag: Bag, example: Hashable) -> Fraction:
    """Probability that the last example drawn from ``bag`` equals ``example``.

    Under exchangeability this is ``k/n`` with ``k`` the multiplicity.
    """
    if len(bag) == 0:
        raise ValueError("cannot draw from an empty bag")
    return Fraction(bag.multiplicity(example), len(bag))


def bag_ordering_probability(bag: Bag, ordering: Sequence[Hashable]) -> Fraction:
    """Probability of one particular ordering of the bag's contents.

    ``n_1! ... n_k! / N!`` when ``ordering`` lists exactly the bag's contents,
    zero otherwise.
    """
    if len(ordering) != len(bag):
        raise ValueError(
            f"ordering has length {len(ordering)} but the bag holds {len(bag)} elements"
        )
    if Bag(ordering) != bag:
        return Fraction(0)
    numerator = math.prod(math.factorial(k) for _, k in bag.items())
    return Fraction(numerator, math.factorial(len(bag)))


def distinct_orderings(bag: Bag) -> set[tuple]:
    """All distinct orderings of a (small) bag."""
    return set(permutations(list(bag)))


# --------------------------------------------------------------------------
# p-values


def count_at_least(scores: Sequence[float] | np.ndarray, target: float, rtol: float = TIE_RTOL) -> int:
    """Number of scores ``>= target``, with ``+inf >= +inf`` true."""
    a = np.asarray(scores, dtype=float)
    if math.isinf(target) and target > 0:
        return int(np.count_nonzero(a == math.inf))
    return int(np.count_nonzero(a >= target - rtol * abs(target)))


def p_value_from_scores(scores: Sequence[float] | np.ndarray, rtol: float = TIE_RTOL) -> Fraction:
    """Conformal p-value of the last score.

    Fraction of ``scores`` at least as large as ``scores[-1]``.  Always at
    least ``1/n`` because the last score counts itself.
    """
    a = np.asarray(scores, dtype=float)
    if a.size == 0:
        raise ValueError("need at least one score")
    return Fraction(count_at_least(a, float(a[-1]), rtol), a.size)


@dataclass(frozen=True)
class PValueReport:
    """p-value per candidate label plus derived confidence and credibility.

    Confidence is one minus the second largest p-value; credibility is the
    largest.  With a single candidate the confidence is 1 by convention.
    """

    pvalues: Mapping[Any, Fraction] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "pvalues", dict(self.pvalues))

    @property
    def candidates(self) -> list:
        return list(self.pvalues)

    @property
    def confidence(self) -> Fraction:
        return confidence_credibility(self)[0]

    @property
    def credibility(self) -> Fraction:
        return confidence_credibility(self)[1]

    def __getitem__(self, y: Any) -> Fraction:
        return self.pvalues[y]

    def region(self, epsilon: float | Fraction) -> LabelSet:
        return region_from_pvalues(self, epsilon)


def region_from_pvalues(report: PValueReport, epsilon: float | Fraction) -> LabelSet:
    """Labels whose p-value strictly exceeds ``epsilon``."""
    if not report.pvalues:
        raise ValueError("empty p-value report")
    eps = as_fraction(epsilon)
    return LabelSet(tuple(y for y, p in report.pvalues.items() if p > eps))


def confidence_credibility(report: PValueReport) -> tuple[Fraction, Fraction]:
    """``(1 - second largest p-value, largest p-value)``."""
    ps = sorted(report.pvalues.values(), reverse=True)
    if not ps:
        raise ValueError("empty p-value report")
    credibility = ps[0]
    confidence = Fraction(1) - ps[1] if len(ps) > 1 else Fraction(1)
    return confidence, credibility


# --------------------------------------------------------------------------
# measurement grids


def lattice_points(region: RealRegion, grid_step: float, origin: float = 0.0) -> list[float]:
    """Lattice points ``origin + k*grid_step`` inside a bounded region."""
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    points: list[float] = []
    for a, b in region.intervals:
        if math.isinf(a) or math.isinf(b):
            raise ValueError("cannot enumerate lattice points of an unbounded region")
        k_lo = math.ceil((a - origin) / grid_step - _SNAP_TOL * max(1.0, abs(a)))
        k_hi = math.floor((b - origin) / grid_step + _SNAP_TOL * max(1.0, abs(b)))
        points.extend(_grid_value(origin, k, grid_step) for k in range(k_lo, k_hi + 1))
    return points


def _grid_value(origin: float, k: int, step: float) -> float:
    # strip round-off so 0.1-grids give 1.2, not 1.2000000000000002
    digits = max(0, -math.floor(math.log10(step))) + 3
    return round(origin + k * step, digits)


def grid_snap(region: RealRegion, grid_step: float, origin: float = 0.0) -> RealRegion:
    """Restrict a region to a measurement lattice.

    Returns the interval hull of each connected run of lattice points lying in
    the closed region.  Unbounded ends stay unbounded.
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    out: list[tuple[float, float]] = []
    for a, b in region.intervals:
        if math.isinf(a):
            lo = -math.inf
        else:
            k = math.ceil((a - origin) / grid_step - _SNAP_TOL * max(1.0, abs(a)))
            lo = _grid_value(origin, k, grid_step)
        if math.isinf(b):
            hi = math.inf
        else:
            k = math.floor((b - origin) / grid_step + _SNAP_TOL * max(1.0, abs(b)))
            hi = _grid_value(origin, k, grid_step)
        if lo > hi:
            continue
        if out and lo - out[-1][1] <= grid_step * (1 + 1e-9):
            # consecutive lattice points: same run
            out[-1] = (out[-1][0], max(out[-1][1], hi))
        else:
            out.append((lo, hi))
    return RealRegion(tuple(out))
