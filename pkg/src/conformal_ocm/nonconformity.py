"""Nonconformity measures ``A(B, z)``.

Every measure offers two routes to the same numbers:

* :meth:`NonconformityMeasure.score` evaluates ``A(B, z)`` literally on a
  :class:`~conformal_ocm.core.Bag` of :class:`~conformal_ocm.core.Example`.
* :meth:`NonconformityMeasure.scores` returns all ``n`` conformal scores
  ``alpha_1..alpha_n`` for arrays ``X`` (n, p) and ``y`` (n,) at once.

A measure is *deletion-style* when ``alpha_i = A(bag minus z_i, z_i)`` and
*inclusion-style* when ``alpha_i = A(bag, z_i)`` with the full bag.

Regression measures additionally expose :meth:`RegressionMeasure.signed_scores`,
residuals ``f_i`` with ``alpha_i = |f_i|``.  When the last label is replaced
by a free value ``y`` the residuals are piecewise affine in ``y``; that is what
the exact interval engine in :mod:`conformal_ocm.conformal` exploits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Hashable, Sequence

import numpy as np

from .core import Bag, Example

__all__ = [
    "NonconformityMeasure",
    "RegressionMeasure",
    "AverageDistance",
    "NNLabelRatio",
    "LabelMeanDistance",
    "SeparatingBand",
    "NNRegression",
    "LeastSquares",
    "AffineScoreForm",
    "ScoreFamily",
    "Band",
    "average_distance",
    "nn_label_ratio",
    "label_mean_distance",
    "separating_band",
    "nn_regression_residual",
    "point_predict_nn",
    "least_squares_scores",
    "least_squares_affine",
    "MEASURES",
    "get_measure",
    "as_arrays",
]

# nearest-neighbour distance ties (decimal data: |5.0 - 4.9| vs |5.1 - 5.0|)
_DIST_ATOL = 1e-12


def as_arrays(examples: Sequence[Example]) -> tuple[np.ndarray, np.ndarray]:
    """Stack examples into ``X`` (n, p) and a label array."""
    n = len(examples)
    p = len(examples[0].x) if n else 0
    X = np.array([e.x for e in examples], dtype=float).reshape(n, p)
    labels = [e.y for e in examples]
    if all(isinstance(v, (int, float, np.floating, np.integer)) and not isinstance(v, bool) for v in labels):
        y = np.asarray(labels, dtype=float)
    else:
        y = np.asarray(labels, dtype=object)
    return X, y


def _distance(a: Sequence[float], b: Sequence[float]) -> float:
    if len(a) == 1:
        return abs(a[0] - b[0])
    return math.dist(a, b)


def _pairwise(X: np.ndarray) -> np.ndarray:
    if X.shape[1] == 1:
        return np.abs(X[:, 0][:, None] - X[:, 0][None, :])
    diff = X[:, None, :] - X[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def _ratio(same: float, diff: float) -> float:
    # 0/0 -> 0, x/0 -> inf, no different-label example -> 0
    if math.isinf(diff):
        return 0.0
    if same == 0.0:
        return 0.0
    if diff == 0.0:
        return math.inf
    return same / diff


def _median(values: Sequence[float]) -> float:
    return float(np.median(np.asarray(values, dtype=float)))


class NonconformityMeasure:
    """Base class.  Subclasses implement :meth:`score`, and usually :meth:`scores`."""

    name = "abstract"
    inclusive = False

    def score(self, bag: Bag, z: Example) -> float:
        raise NotImplementedError

    def scores(self, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        """All conformal scores, by literal evaluation of :meth:`score`."""
        examples = [Example(tuple(row), lab) for row, lab in zip(np.asarray(X, dtype=float), y)]
        full = Bag(examples)
        if self.inclusive:
            return np.array([self.score(full, z) for z in examples], dtype=float)
        return np.array([self.score(full.remove(z), z) for z in examples], dtype=float)

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"


class RegressionMeasure(NonconformityMeasure):
    """Measure on real labels with ``alpha_i = |f_i|`` for signed residuals ``f_i``."""

    def signed_scores(self, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def scores(self, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.abs(self.signed_scores(np.asarray(X, dtype=float), np.asarray(y, dtype=float)))

    def knots(self, y_old: np.ndarray) -> np.ndarray:
        """Values of the free label where the residuals may change slope."""
        return np.empty(0)

    def family(self, X_old: np.ndarray, y_old: np.ndarray, x_new: Sequence[float]) -> "ScoreFamily":
        """Scores as functions of the unknown last label."""
        X_old = np.asarray(X_old, dtype=float)
        y_old = np.asarray(y_old, dtype=float)
        X = np.vstack([X_old.reshape(len(y_old), -1), np.asarray(x_new, dtype=float).reshape(1, -1)])

        def signed(v: float) -> np.ndarray:
            return self.signed_scores(X, np.append(y_old, v))

        return ScoreFamily(signed, self.knots(y_old), len(y_old) + 1)


# --------------------------------------------------------------------------
# score families for a free label


@dataclass(frozen=True)
class AffineScoreForm:
    """Scores ``alpha_i(y) = |c_i y + d_i|`` with every ``c_i >= 0``."""

    c: np.ndarray
    d: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.c, dtype=float).copy()
        d = np.asarray(self.d, dtype=float).copy()
        flip = c < 0
        c[flip] *= -1
        d[flip] *= -1
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    def __len__(self) -> int:
        return len(self.c)

    def signed(self, y: float) -> np.ndarray:
        return self.c * y + self.d

    def __call__(self, y: float) -> np.ndarray:
        return np.abs(self.signed(y))

    @property
    def knots(self) -> np.ndarray:
        return np.empty(0)

    def rows(self) -> list[tuple[float, float]]:
        return list(zip(self.c.tolist(), self.d.tolist()))


class ScoreFamily:
    """Scores ``alpha_i(y) = |f_i(y)|`` with each ``f_i`` continuous and affine
    between consecutive ``knots``.  The last row belongs to the new example."""

    def __init__(self, signed: Callable[[float], np.ndarray], knots: Sequence[float], size: int) -> None:
        self.signed = signed
        self.knots = np.unique(np.asarray(knots, dtype=float))
        self.size = size

    def __len__(self) -> int:
        return self.size

    def __call__(self, y: float) -> np.ndarray:
        return np.abs(self.signed(y))

    def affine_on(self, lo: float, hi: float) -> AffineScoreForm:
        """Exact affine pieces valid on ``[lo, hi]`` (no knot strictly inside)."""
        if math.isinf(lo) and math.isinf(hi):
            a, b = 0.0, 1.0
        elif math.isinf(lo):
            a, b = hi - 1.0, hi
        elif math.isinf(hi):
            a, b = lo, lo + 1.0
        else:
            a, b = lo, hi
        fa, fb = self.signed(a), self.signed(b)
        c = (fb - fa) / (b - a)
        return AffineScoreForm(c, fa - c * a)


def affine_family(form: AffineScoreForm) -> ScoreFamily:
    return ScoreFamily(form.signed, (), len(form))


# --------------------------------------------------------------------------
# prediction from old examples alone


class AverageDistance(RegressionMeasure):
    """Distance of a number from an average.

    With ``pooled=True`` the average includes ``z`` itself; otherwise it is the
    plain average of the bag.  Both give the same conformal regions.
    """

    def __init__(self, pooled: bool = True) -> None:
        self.pooled = pooled
        self.name = "average" if pooled else "average-bag"

    def score(self, bag: Bag, z: Example) -> float:
        values = [e.y for e in bag]
        _check_real([z.y, *values])
        if self.pooled:
            return abs((sum(values) + z.y) / (len(values) + 1) - z.y)
        if not values:
            return 0.0
        return abs(sum(values) / len(values) - z.y)

    def signed_scores(self, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        n = len(y)
        total = y.sum()
        if self.pooled:
            return total / n - y
        if n == 1:
            return np.zeros(1)
        return (total - y) / (n - 1) - y

    def __repr__(self) -> str:
        return f"AverageDistance(pooled={self.pooled})"


def average_distance(bag: Bag, z: Example | float) -> float:
    """``|mean(bag + z) - z|`` for real numbers (or examples with real labels)."""
    bag = Bag(e if isinstance(e, Example) else Example((), e) for e in bag)
    if not isinstance(z, Example):
        z = Example((), z)
    return AverageDistance(pooled=True).score(bag, z)


def _check_real(values: Sequence[Any]) -> None:
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float, np.integer, np.floating)):
            raise TypeError(f"average distance needs numeric labels, got {v!r}")


# --------------------------------------------------------------------------
# classification


class NNLabelRatio(NonconformityMeasure):
    """Nearest same-label distance over nearest different-label distance.

    Conventions: 0/0 is 0, positive/0 is infinite, and a bag with no
    different-label example gives 0.
    """

    name = "knn-ratio"

    def score(self, bag: Bag, z: Example) -> float:
        same = diff = math.inf
        for e in bag.distinct():
            d = _distance(e.x, z.x)
            if e.y == z.y:
                same = min(same, d)
            else:
                diff = min(diff, d)
        return _ratio(same, diff)

    def scores(self, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=object)
        if X.shape[1] == 1:
            same, diff = _nn_same_diff_1d(X[:, 0], y)
        else:
            D = _pairwise(X)
            np.fill_diagonal(D, np.inf)
            eq = y[:, None] == y[None, :]
            same = np.where(eq, D, np.inf).min(axis=1)
            diff = np.where(~eq, D, np.inf).min(axis=1)
        out = np.where(same == 0.0, 0.0, np.divide(same, diff, out=np.full_like(same, np.inf), where=diff > 0))
        out[np.isinf(diff)] = 0.0
        return out


def _nearest_in(sorted_vals: np.ndarray, q: np.ndarray) -> np.ndarray:
    if sorted_vals.size == 0:
        return np.full(q.shape, np.inf)
    idx = np.searchsorted(sorted_vals, q)
    left = sorted_vals[np.clip(idx - 1, 0, sorted_vals.size - 1)]
    right = sorted_vals[np.clip(idx, 0, sorted_vals.size - 1)]
    return np.minimum(np.abs(q - left), np.abs(q - right))


def _nn_same_diff_1d(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest same-label (excluding self) and different-label distances on a line."""
    n = len(x)
    same = np.full(n, np.inf)
    diff = np.full(n, np.inf)
    labels = list(dict.fromkeys(y.tolist()))
    groups = {lab: np.flatnonzero(y == lab) for lab in labels}
    sorted_by = {lab: np.sort(x[idx]) for lab, idx in groups.items()}
    for lab, idx in groups.items():
        xs = x[idx]
        order = np.argsort(xs, kind="stable")
        s = xs[order]
        gaps = np.abs(np.diff(s))
        nearest = np.full(len(s), np.inf)
        if len(s) > 1:
            nearest[1:] = gaps
            nearest[:-1] = np.minimum(nearest[:-1], gaps)
        same[idx[order]] = nearest
        for other in labels:
            if other != lab:
                diff[idx] = np.minimum(diff[idx], _nearest_in(sorted_by[other], xs))
    return same, diff


def nn_label_ratio(bag: Bag, z: Example) -> float:
    return NNLabelRatio().score(bag, z)


class LabelMeanDistance(NonconformityMeasure):
    """Distance from ``x`` to the mean object of its label, ``z`` included."""

    name = "label-mean"

    def score(self, bag: Bag, z: Example) -> float:
        same = [e.x for e in bag if e.y == z.y] + [z.x]
        centre = np.mean(np.asarray(same, dtype=float), axis=0)
        return _distance(tuple(centre.tolist()), z.x)

    def scores(self, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=object)
        out = np.empty(len(y))
        for lab in dict.fromkeys(y.tolist()):
            idx = np.flatnonzero(y == lab)
            centre = X[idx].mean(axis=0)
            diff = X[idx] - centre
            out[idx] = np.abs(diff[:, 0]) if X.shape[1] == 1 else np.sqrt((diff**2).sum(axis=1))
        return out


def label_mean_distance(bag: Bag, z: Example) -> float:
    return LabelMeanDistance().score(bag, z)


@dataclass(frozen=True)
class Band:
    """A separating band ``[a, b]`` with ``left`` labels expected below it."""

    a: float
    b: float
    left: Hashable
    right: Hashable
    mistakes: int

    def score(self, x: float, y: Hashable) -> float:
        if y == self.right:
            if x < self.a:
                return math.inf
            return 1.0 if x < self.b else 0.0
        if x > self.b:
            return math.inf
        return 1.0 if x > self.a else 0.0


def find_band(x: np.ndarray, y: np.ndarray, labels: Sequence[Hashable] | None = None) -> Band | None:
    """Widest band separating two labels with the fewest mistakes.

    Both orientations are tried.  Ties in width go to the smaller left
    endpoint, then to the first orientation.  Returns ``None`` when fewer than
    two labels occur.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=object)
    present = sorted(set(y.tolist()), key=repr) if labels is None else list(labels)
    if len(present) > 2:
        raise ValueError(f"separating band needs exactly two labels, got {present}")
    if len(present) < 2 or len(set(y.tolist())) < 2:
        return None
    best: tuple | None = None
    for left, right in ((present[0], present[1]), (present[1], present[0])):
        xl = np.sort(x[y == left])
        xr = np.sort(x[y == right])
        a_cand = np.concatenate([[-np.inf], xl])
        b_cand = np.concatenate([xr, [np.inf]])
        # left labels above a, right labels below b
        s_count = xl.size - np.searchsorted(xl, a_cand, side="right")
        v_count = np.searchsorted(xr, b_cand, side="left")
        total = s_count[:, None] + v_count[None, :]
        feasible = a_cand[:, None] <= b_cand[None, :]
        total = np.where(feasible, total, np.iinfo(np.int64).max)
        m = total.min()
        ia, ib = np.nonzero(total == m)
        with np.errstate(invalid="ignore"):
            width = b_cand[ib] - a_cand[ia]
        for i, j, w in zip(ia, ib, width):
            key = (int(m), -w, a_cand[i], -b_cand[j])
            if best is None or key < best[0]:
                best = (key, Band(float(a_cand[i]), float(b_cand[j]), left, right, int(m)))
    return best[1]


class SeparatingBand(NonconformityMeasure):
    """Scores 0 / 1 / inf from the best separating band of a two-label bag.

    Inclusion-style: the band is fitted to the whole bag, new example included.
    Objects must be one-dimensional.
    """

    name = "band"
    inclusive = True

    def __init__(self, labels: Sequence[Hashable] | None = None) -> None:
        self.labels = None if labels is None else list(labels)

    def score(self, bag: Bag, z: Example) -> float:
        examples = list(bag)
        x = np.array([e.x[0] for e in examples], dtype=float)
        y = np.array([e.y for e in examples], dtype=object)
        band = find_band(x, y, self._labels_for(y))
        return 0.0 if band is None else band.score(z.x[0], z.y)

    def scores(self, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[1] != 1:
            raise ValueError("the separating band needs one-dimensional objects")
        y = np.asarray(y, dtype=object)
        band = find_band(X[:, 0], y, self._labels_for(y))
        if band is None:
            return np.zeros(len(y))
        return np.array([band.score(xi, yi) for xi, yi in zip(X[:, 0], y)])

    def _labels_for(self, y: np.ndarray) -> list | None:
        if self.labels is not None:
            return self.labels
        present = sorted(set(y.tolist()), key=repr)
        return present if len(present) == 2 else None


def separating_band(bag: Bag) -> tuple[dict[Example, float], Band | None]:
    """Band scores for every distinct example of a two-label bag, plus the band."""
    examples = list(bag)
    x = np.array([e.x[0] for e in examples], dtype=float)
    y = np.array([e.y for e in examples], dtype=object)
    band = find_band(x, y)
    if band is None:
        return {e: 0.0 for e in bag.distinct()}, None
    return {e: band.score(e.x[0], e.y) for e in bag.distinct()}, band


# --------------------------------------------------------------------------
# regression


class NNRegression(RegressionMeasure):
    """Absolute residual of the nearest-neighbour prediction.

    The prediction is the label of the nearest object, or the median label
    over all objects tied at the minimal distance.  Deletion-style.
    """

    name = "knn-reg"

    def score(self, bag: Bag, z: Example) -> float:
        return abs(z.y - point_predict_nn(bag, z.x))

    def signed_scores(self, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n = len(y)
        if n < 2:
            raise ValueError("nearest-neighbour prediction needs a non-empty bag")
        D = _pairwise(X)
        np.fill_diagonal(D, np.inf)
        dmin = D.min(axis=1, keepdims=True)
        tied = D <= dmin + _DIST_ATOL
        yhat = np.array([np.median(y[row]) for row in tied])
        return y - yhat

    def knots(self, y_old: np.ndarray) -> np.ndarray:
        # medians involving the free label bend only at existing label values
        return np.unique(np.asarray(y_old, dtype=float))


def point_predict_nn(bag: Bag, x: Sequence[float]) -> float:
    """Nearest-neighbour point prediction, median over ties."""
    if len(bag) == 0:
        raise ValueError("nearest-neighbour prediction needs a non-empty bag")
    x = tuple(np.atleast_1d(x).tolist())
    dists = [(_distance(e.x, x), e.y) for e in bag]
    dmin = min(d for d, _ in dists)
    return _median([lab for d, lab in dists if d <= dmin + _DIST_ATOL])


def nn_regression_residual(bag: Bag, z: Example) -> float:
    return NNRegression().score(bag, z)


def _design(X: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(len(X)), X])


def _lstsq_fit(A: np.ndarray, y: np.ndarray) -> np.ndarray:
    s = np.linalg.svd(A, compute_uv=False)
    if len(A) < A.shape[1] or s[-1] <= s[0] * 1e-12:
        raise ValueError("degenerate least-squares design (objects do not vary)")
    return np.linalg.lstsq(A, y, rcond=None)[0]


class LeastSquares(RegressionMeasure):
    """Absolute residual from the least-squares line (hyperplane).

    ``inclusive=True`` fits once on all ``n`` examples; ``inclusive=False``
    refits without the example being scored.
    """

    def __init__(self, inclusive: bool = True) -> None:
        self.inclusive = inclusive
        self.name = "least-squares" if inclusive else "least-squares-deleted"

    def score(self, bag: Bag, z: Example) -> float:
        # the line is fitted to the bag as given; the flag only decides
        # whether conformal scoring passes the bag with or without z
        X, y = as_arrays(list(bag))
        beta = _lstsq_fit(_design(X), y.astype(float))
        return abs(z.y - float(beta[0] + np.dot(beta[1:], z.x)))

    def signed_scores(self, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if len(y) < 3:
            raise ValueError("least squares needs at least three examples")
        A = _design(X)
        if self.inclusive:
            return y - A @ _lstsq_fit(A, y)
        out = np.empty(len(y))
        for i in range(len(y)):
            keep = np.arange(len(y)) != i
            out[i] = y[i] - A[i] @ _lstsq_fit(A[keep], y[keep])
        return out

    def __repr__(self) -> str:
        return f"LeastSquares(inclusive={self.inclusive})"


def least_squares_scores(bag: Bag) -> dict[Example, float]:
    """Inclusion-style residual for every distinct example of the bag."""
    examples = list(bag)
    X, y = as_arrays(examples)
    res = np.abs(LeastSquares(inclusive=True).signed_scores(X, y.astype(float)))
    return {e: float(r) for e, r in zip(examples, res)}


def least_squares_affine(
    X_old: np.ndarray, y_old: np.ndarray, x_new: Sequence[float], inclusive: bool = True
) -> AffineScoreForm:
    """Residuals ``|c_i y + d_i|`` as functions of the unknown last label ``y``.

    Least-squares residuals are linear in the label vector, so two
    evaluations pin down ``c`` and ``d`` exactly.
    """
    fam = LeastSquares(inclusive).family(X_old, y_old, x_new)
    f0, f1 = fam.signed(0.0), fam.signed(1.0)
    return AffineScoreForm(f1 - f0, f0)


# --------------------------------------------------------------------------
# registry


MEASURES: dict[str, Callable[[], NonconformityMeasure]] = {
    "average": lambda: AverageDistance(pooled=True),
    "average-bag": lambda: AverageDistance(pooled=False),
    "knn-ratio": NNLabelRatio,
    "label-mean": LabelMeanDistance,
    "band": SeparatingBand,
    "knn-reg": NNRegression,
    "least-squares": lambda: LeastSquares(inclusive=True),
    "least-squares-deleted": lambda: LeastSquares(inclusive=False),
}


def get_measure(name: str | NonconformityMeasure) -> NonconformityMeasure:
    if isinstance(name, NonconformityMeasure):
        return name
    try:
        return MEASURES[name]()
    except KeyError:
        raise ValueError(f"unknown measure {name!r}; choose from {', '.join(MEASURES)}") from None
