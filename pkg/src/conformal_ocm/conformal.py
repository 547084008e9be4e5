"""Region engines: a label sweep for classification and an exact
breakpoint sweep for regression on the real line."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Iterable, Sequence

import numpy as np

from .core import (
    TIE_RTOL,
    LabelSet,
    PValueReport,
    RealRegion,
    as_fraction,
    count_at_least,
    grid_snap,
)
from .nonconformity import (
    AffineScoreForm,
    NonconformityMeasure,
    RegressionMeasure,
    ScoreFamily,
    affine_family,
    get_measure,
)

__all__ = [
    "ClassificationTask",
    "ClassificationResult",
    "conformal_classify",
    "RegressionTask",
    "CountProfile",
    "count_profile",
    "conformal_regress_exact",
    "conformal_old_examples",
    "crossing_points",
    "ConformalClassifier",
    "ConformalRegressor",
]


def _epsilon_key(eps: float | Fraction) -> float | Fraction:
    return eps if isinstance(eps, Fraction) else float(eps)


# --------------------------------------------------------------------------
# classification


@dataclass(frozen=True)
class ClassificationTask:
    X_old: np.ndarray
    y_old: np.ndarray
    x_new: tuple
    label_space: tuple
    measure: NonconformityMeasure

    def __init__(self, X_old, y_old, x_new, label_space, measure="knn-ratio") -> None:
        y_old = np.asarray(y_old, dtype=object)
        x_new = tuple(np.atleast_1d(np.asarray(x_new, dtype=float)).tolist())
        X_old = np.asarray(X_old, dtype=float).reshape(len(y_old), len(x_new))
        if not label_space:
            raise ValueError("label space is empty")
        object.__setattr__(self, "X_old", X_old)
        object.__setattr__(self, "y_old", y_old)
        object.__setattr__(self, "x_new", x_new)
        object.__setattr__(self, "label_space", tuple(label_space))
        object.__setattr__(self, "measure", get_measure(measure))


@dataclass(frozen=True)
class ClassificationResult:
    report: PValueReport
    regions: dict
    scores: dict = field(repr=False)
    sizes: dict = field(default_factory=dict, repr=False)  # examples compared, per label

    @property
    def pvalues(self) -> dict:
        return dict(self.report.pvalues)

    @property
    def confidence(self) -> Fraction:
        return self.report.confidence

    @property
    def credibility(self) -> Fraction:
        return self.report.credibility


def _candidate_pvalue(alphas: np.ndarray, y: np.ndarray, label: Hashable, within_label: bool) -> Fraction:
    if within_label:
        same = np.flatnonzero(y == label)
        alphas = alphas[same]
    return Fraction(count_at_least(alphas, alphas[-1]), len(alphas))


def conformal_classify(
    task: ClassificationTask,
    epsilons: Iterable[float | Fraction] = (),
    within_label: bool = False,
) -> ClassificationResult:
    """p-value for every candidate label, plus regions at each ``epsilon``.

    With ``within_label=True`` the candidate is compared only with old
    examples carrying the same label.
    """
    X = np.vstack([task.X_old, np.asarray(task.x_new, dtype=float).reshape(1, -1)])
    pvalues: dict = {}
    scores: dict = {}
    sizes: dict = {}
    warnings: list[str] = []
    for label in task.label_space:
        y = np.append(task.y_old, np.array([label], dtype=object))
        try:
            alphas = np.asarray(task.measure.scores(X, y), dtype=float)
        except (ValueError, ZeroDivisionError, FloatingPointError) as exc:
            warnings.append(f"candidate {label!r}: {exc}; scored as +inf")
            alphas = np.zeros(len(y))
            alphas[-1] = math.inf
        scores[label] = alphas
        pvalues[label] = _candidate_pvalue(alphas, y, label, within_label)
        sizes[label] = int(np.sum(y == label)) if within_label else len(y)
    report = PValueReport(pvalues, tuple(warnings))
    regions = {_epsilon_key(e): report.region(e) for e in epsilons}
    return ClassificationResult(report, regions, scores, sizes)


# --------------------------------------------------------------------------
# regression


@dataclass(frozen=True)
class RegressionTask:
    """Old examples and a new object; ``x_new=()`` predicts from labels alone."""

    X_old: np.ndarray
    y_old: np.ndarray
    x_new: tuple
    measure: RegressionMeasure

    def __init__(self, X_old, y_old, x_new=(), measure="least-squares") -> None:
        y_old = np.asarray(y_old, dtype=float)
        x_new = tuple(np.atleast_1d(np.asarray(x_new, dtype=float)).tolist())
        X_old = np.asarray(X_old, dtype=float).reshape(len(y_old), len(x_new))
        m = get_measure(measure)
        if not isinstance(m, RegressionMeasure):
            raise ValueError(f"measure {m.name!r} does not score real labels")
        object.__setattr__(self, "X_old", X_old)
        object.__setattr__(self, "y_old", y_old)
        object.__setattr__(self, "x_new", x_new)
        object.__setattr__(self, "measure", m)

    def family(self) -> ScoreFamily:
        return self.measure.family(self.X_old, self.y_old, self.x_new)


def crossing_points(form: AffineScoreForm) -> np.ndarray:
    """For each old row ``i``, the two solutions of ``|c_i y + d_i| = |c_n y + d_n|``.

    Column 0 solves ``c_i y + d_i = c_n y + d_n``; column 1 solves
    ``c_i y + d_i = -(c_n y + d_n)``.  NaN where the equation is degenerate.
    """
    c, d = form.c, form.d
    cn, dn = c[-1], d[-1]
    # slopes equal up to rounding are parallel, not a crossing far out
    scale = np.maximum(np.abs(c[:-1]), abs(cn))
    diff = np.where(np.abs(c[:-1] - cn) <= 1e-12 * scale, 0.0, c[:-1] - cn)
    with np.errstate(divide="ignore", invalid="ignore"):
        same = (dn - d[:-1]) / diff
        opposite = -(d[:-1] + dn) / (c[:-1] + cn)
    out = np.column_stack([same, opposite])
    out[~np.isfinite(out)] = np.nan
    return out


@dataclass(frozen=True)
class CountProfile:
    """``#{i : alpha_i(y) >= alpha_n(y)}`` over the whole real line.

    ``points`` are sorted breakpoints; ``point_counts[k]`` is the count at
    ``points[k]`` and ``gap_counts[k]`` the (constant) count on the open gap
    just left of ``points[k]``, with the last entry for the gap after the
    final point.
    """

    n: int
    points: np.ndarray
    point_counts: np.ndarray
    gap_counts: np.ndarray

    def count_at(self, y: float) -> int:
        k = int(np.searchsorted(self.points, y, side="left"))
        if k < len(self.points) and self.points[k] == y:
            return int(self.point_counts[k])
        return int(self.gap_counts[k])

    def p_value(self, y: float) -> Fraction:
        return Fraction(self.count_at(y), self.n)

    def region(self, epsilon: float | Fraction) -> RealRegion:
        threshold = self.n * as_fraction(epsilon)
        gap_in = self.gap_counts > threshold
        point_in = self.point_counts > threshold
        pts = self.points
        m = len(pts)
        intervals: list[tuple[float, float]] = []
        # walk: gap_0, point_0, gap_1, point_1, ..., point_{m-1}, gap_m
        for k in range(m + 1):
            if gap_in[k]:
                lo = -math.inf if k == 0 else pts[k - 1]
                hi = math.inf if k == m else pts[k]
                intervals.append((float(lo), float(hi)))
            if k < m and point_in[k]:
                intervals.append((float(pts[k]), float(pts[k])))
        return RealRegion(tuple(intervals))


def _counts(form: AffineScoreForm, ys: np.ndarray) -> np.ndarray:
    alphas = np.abs(np.outer(ys, form.c) + form.d)
    target = alphas[:, -1:]
    finite = np.isfinite(target)
    at_least = alphas >= target - TIE_RTOL * np.abs(np.where(finite, target, 0.0))
    return at_least.sum(axis=1)


def count_profile(family: ScoreFamily | AffineScoreForm) -> CountProfile:
    """Exact count profile by sweeping the breakpoints of an affine score family."""
    if isinstance(family, AffineScoreForm):
        family = affine_family(family)
    knots = family.knots
    edges = np.concatenate([[-np.inf], knots, [np.inf]])
    forms = []
    pieces = [knots]
    for lo, hi in zip(edges[:-1], edges[1:]):
        form = family.affine_on(lo, hi)
        forms.append((lo, hi, form))
        roots = crossing_points(form).ravel()
        roots = roots[np.isfinite(roots)]
        # the piece is exact only on [lo, hi]
        pieces.append(roots[(roots >= lo) & (roots <= hi)])
    points = np.unique(np.concatenate(pieces))

    def form_for(y: float) -> AffineScoreForm:
        for lo, hi, form in forms:
            if lo <= y <= hi:
                return form
        raise AssertionError("piece lookup failed")

    if len(points) == 0:
        reps = np.array([0.0])
    else:
        inner = (points[:-1] + points[1:]) / 2
        reps = np.concatenate([[points[0] - 1.0], inner, [points[-1] + 1.0]])
    gap_counts = np.array([_counts(form_for(y), np.array([y]))[0] for y in reps], dtype=int)
    point_counts = np.array([_counts(form_for(y), np.array([y]))[0] for y in points], dtype=int)
    return CountProfile(family.size, points, point_counts, gap_counts)


def conformal_regress_exact(
    task: RegressionTask | ScoreFamily | AffineScoreForm,
    epsilons: Iterable[float | Fraction],
) -> dict:
    """Exact conformal regions ``{y : p(y) > epsilon}`` for each epsilon."""
    family = task.family() if isinstance(task, RegressionTask) else task
    profile = count_profile(family)
    return {_epsilon_key(e): profile.region(e) for e in epsilons}


def conformal_old_examples(
    values: Sequence[float],
    epsilons: Iterable[float | Fraction],
    measure: str | RegressionMeasure = "average",
) -> dict:
    """Regions for the next number in a sequence, using the numbers alone."""
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        raise ValueError("need at least two old values")
    task = RegressionTask(np.empty((len(values), 0)), values, (), measure)
    return conformal_regress_exact(task, epsilons)


# --------------------------------------------------------------------------
# on-line predictors


class ConformalClassifier:
    """Conformal predictor over a finite label space, usable on-line."""

    def __init__(self, measure="knn-ratio", label_space: Sequence[Hashable] = (), within_label: bool = False):
        self.measure = get_measure(measure)
        self.label_space = tuple(label_space)
        self.within_label = within_label

    @property
    def name(self) -> str:
        model = "within-label" if self.within_label else "exchangeability"
        return f"conformal[{self.measure.name}, {model}]"

    def full_region(self) -> LabelSet:
        return LabelSet(self.label_space)

    def predict(self, X_old, y_old, x_new, epsilon):
        task = ClassificationTask(X_old, y_old, x_new, self.label_space, self.measure)
        result = conformal_classify(task, (epsilon,), within_label=self.within_label)
        return result.regions[_epsilon_key(epsilon)], result.pvalues


class ConformalRegressor:
    """Exact conformal intervals, optionally snapped to a measurement grid."""

    def __init__(self, measure="least-squares", grid_step: float | None = None, grid_origin: float = 0.0):
        self.measure = get_measure(measure)
        self.grid_step = grid_step
        self.grid_origin = grid_origin

    @property
    def name(self) -> str:
        return f"conformal[{self.measure.name}]"

    def full_region(self) -> RealRegion:
        return RealRegion.everything()

    def predict(self, X_old, y_old, x_new, epsilon):
        task = RegressionTask(X_old, y_old, x_new, self.measure)
        region = conformal_regress_exact(task, (epsilon,))[_epsilon_key(epsilon)]
        if self.grid_step:
            region = grid_snap(region, self.grid_step, self.grid_origin)
        return region, None
