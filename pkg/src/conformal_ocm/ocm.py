"""On-line compression models.

A compression model keeps a summary of the examples seen so far, updates it
one example at a time, and says how the latest example could have been
"peeled off" the summary (the one-step backward kernel).  Conformal
p-values then compare the observed nonconformity score with its
distribution under that kernel.

Three models are provided:

``ExchangeabilityModel``
    the summary is the bag of examples.
``WithinLabelModel``
    the summary is the label sequence plus one bag of objects per label.
``GaussianLinearModel``
    the summary is ``(X, X'Y, Y'Y)``; regions are t-intervals.
"""

from __future__ import annotations

import math
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass
from fractions import Fraction
from typing import Hashable, Iterable, Sequence

import numpy as np

from .core import TIE_RTOL, Bag, Example, LabelSet, RealRegion, as_fraction, grid_snap
from .nonconformity import NonconformityMeasure, get_measure
from .tdist import t_quantile, t_sf

__all__ = [
    "CompressionModel",
    "ExchangeabilityModel",
    "WithinLabelModel",
    "WithinLabelSummary",
    "GaussianLinearModel",
    "GaussianSummary",
    "DegenerateIntervalWarning",
    "ocm_conformal",
    "fisher_interval",
    "gaussian_linear_interval",
    "sphere_conditional_sample",
    "t_statistics",
    "fisher_hits",
    "FisherPredictor",
    "GaussianLinearPredictor",
]


class DegenerateIntervalWarning(UserWarning):
    """Zero residual spread: the interval collapses to a point."""


def _at_least(value: float, target: float) -> bool:
    if math.isinf(target):
        return math.isinf(value)
    return value >= target - TIE_RTOL * abs(target)


class CompressionModel(ABC):
    name = "abstract"

    @abstractmethod
    def empty(self):
        """The summary of no examples."""

    @abstractmethod
    def update(self, summary, z: Example):
        """Summary after appending ``z``."""

    def summarize(self, examples: Iterable[Example]):
        summary = self.empty()
        for z in examples:
            summary = self.update(summary, z)
        return summary

    def one_step(self, summary) -> list[tuple[Fraction, object, Example]]:
        """Backward kernel: ``(probability, previous summary, last example)``."""
        raise NotImplementedError(f"{self.name} has no finite one-step kernel")

    def bag_of(self, summary) -> Bag:
        """The bag of examples a discrete summary stands for."""
        raise NotImplementedError

    def score(self, measure: NonconformityMeasure, previous, z: Example) -> float:
        """Nonconformity of ``z`` against a previous summary."""
        bag = self.bag_of(previous)
        if measure.inclusive:
            bag = bag.add(z)
        return measure.score(bag, z)

    def p_value(self, history: Sequence[Example], candidate: Example, measure) -> Fraction:
        """Kernel probability that a peeled-off example is at least as strange."""
        measure = get_measure(measure)
        previous = self.summarize(history)
        current = self.update(previous, candidate)
        observed = self.score(measure, previous, candidate)
        total = Fraction(0)
        for prob, prev, z in self.one_step(current):
            if _at_least(self.score(measure, prev, z), observed):
                total += prob
        return total


class ExchangeabilityModel(CompressionModel):
    name = "exchangeability"

    def empty(self) -> Bag:
        return Bag()

    def update(self, summary: Bag, z: Example) -> Bag:
        return summary.add(z)

    def one_step(self, summary: Bag):
        n = len(summary)
        return [(Fraction(k, n), summary.remove(z), z) for z, k in summary.items()]

    def bag_of(self, summary: Bag) -> Bag:
        return summary


@dataclass(frozen=True)
class WithinLabelSummary:
    labels: tuple
    bags: tuple  # sorted (label, Bag of objects) pairs

    def bag(self, label: Hashable) -> Bag:
        return dict(self.bags).get(label, Bag())

    def __len__(self) -> int:
        return len(self.labels)


class WithinLabelModel(CompressionModel):
    """Exchangeability among examples sharing a label; label order is kept."""

    name = "within-label"

    def empty(self) -> WithinLabelSummary:
        return WithinLabelSummary((), ())

    @staticmethod
    def _with_bags(labels: tuple, bags: dict) -> WithinLabelSummary:
        pairs = tuple(sorted(((k, v) for k, v in bags.items() if len(v)), key=lambda kv: repr(kv[0])))
        return WithinLabelSummary(labels, pairs)

    def update(self, summary: WithinLabelSummary, z: Example) -> WithinLabelSummary:
        bags = dict(summary.bags)
        bags[z.y] = bags.get(z.y, Bag()).add(z.x)
        return self._with_bags(summary.labels + (z.y,), bags)

    def one_step(self, summary: WithinLabelSummary):
        label = summary.labels[-1]
        own = summary.bag(label)
        out = []
        for x, k in own.items():
            bags = dict(summary.bags)
            bags[label] = own.remove(x)
            prev = self._with_bags(summary.labels[:-1], bags)
            out.append((Fraction(k, len(own)), prev, Example(x, label)))
        return out

    def bag_of(self, summary: WithinLabelSummary) -> Bag:
        return Bag(Example(x, label) for label, bag in summary.bags for x in bag)


# --------------------------------------------------------------------------
# Gaussian linear model


@dataclass(frozen=True)
class GaussianSummary:
    """Design rows, ``X'Y`` and ``Y'Y``."""

    X: np.ndarray
    xty: np.ndarray
    yty: float

    def __len__(self) -> int:
        return len(self.X)

    @property
    def p(self) -> int:
        return self.X.shape[1]


def _inverse_gram(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``V`` and ``1/s`` from the SVD, so ``(X'X)^-1 = V diag(1/s^2) V'``."""
    _, s, vt = np.linalg.svd(X, full_matrices=False)
    if len(s) < X.shape[1] or s[-1] <= s[0] * 1e-12:
        raise ValueError("design matrix is rank deficient")
    return vt.T, 1.0 / s


class GaussianLinearModel(CompressionModel):
    name = "gaussian"

    def __init__(self, p: int) -> None:
        self.p = p

    def empty(self) -> GaussianSummary:
        return GaussianSummary(np.empty((0, self.p)), np.zeros(self.p), 0.0)

    def update(self, summary: GaussianSummary, z: Example) -> GaussianSummary:
        x = np.asarray(z.x, dtype=float)
        return GaussianSummary(
            np.vstack([summary.X, x[None, :]]),
            summary.xty + x * z.y,
            summary.yty + float(z.y) ** 2,
        )

    def interval(self, summary: GaussianSummary, x_new: Sequence[float], epsilon: float) -> RealRegion:
        """Prediction interval for the label of ``x_new`` at level ``1 - epsilon``."""
        center, half = _t_interval(summary, np.asarray(x_new, dtype=float), epsilon)
        return _region(center, half)

    def p_value(self, history, candidate, measure=None) -> float:
        """Two-sided t-test p-value of the candidate label."""
        summary = self.summarize(history)
        center, scale, df = _t_parts(summary, np.asarray(candidate.x, dtype=float))
        if scale == 0.0:
            return 1.0 if candidate.y == center else 0.0
        return float(2.0 * t_sf(df, abs(candidate.y - center) / scale))


def _t_parts(summary: GaussianSummary, x_new: np.ndarray) -> tuple[float, float, int]:
    m, p = summary.X.shape
    if m <= p:
        raise ValueError(f"need more than {p} observed examples for {p} coefficients, got {m}")
    V, inv_s = _inverse_gram(summary.X)
    beta = V @ (inv_s**2 * (V.T @ summary.xty))
    rss = max(summary.yty - float(beta @ summary.xty), 0.0)
    s = math.sqrt(rss / (m - p))
    leverage = float(np.sum((inv_s * (V.T @ x_new)) ** 2))
    return float(beta @ x_new), s * math.sqrt(1.0 + leverage), m - p


def _t_interval(summary: GaussianSummary, x_new: np.ndarray, epsilon: float) -> tuple[float, float]:
    center, scale, df = _t_parts(summary, x_new)
    if scale == 0.0:
        warnings.warn("zero residual spread; interval is a single point", DegenerateIntervalWarning, stacklevel=3)
        return center, 0.0
    return center, t_quantile(df, float(epsilon) / 2.0) * scale


def _region(center: float, half: float) -> RealRegion:
    return RealRegion.interval(center - half, center + half)


def gaussian_linear_interval(X_old, y_old, x_new, epsilon: float, intercept: bool = False) -> RealRegion:
    """t-interval for a new label under the Gaussian linear model.

    Pass ``intercept=True`` to prepend a constant column to the objects.
    """
    X_old = np.asarray(X_old, dtype=float)
    y_old = np.asarray(y_old, dtype=float)
    x_new = np.atleast_1d(np.asarray(x_new, dtype=float))
    X_old = X_old.reshape(len(y_old), -1)
    if intercept:
        X_old = np.column_stack([np.ones(len(y_old)), X_old])
        x_new = np.concatenate([[1.0], x_new])
    if X_old.shape[1] == 0:
        raise ValueError("design matrix has no columns; add features or an intercept")
    model = GaussianLinearModel(X_old.shape[1])
    summary = GaussianSummary(X_old, X_old.T @ y_old, float(y_old @ y_old))
    return model.interval(summary, x_new, epsilon)


def fisher_interval(values: Sequence[float], epsilon: float) -> RealRegion:
    """Interval for the next draw from a normal population of unknown mean and variance.

    The sample mean plus or minus ``t * s * sqrt(n / (n - 1))``: the
    Gaussian linear model with a constant design.
    """
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        raise ValueError("need at least two values")
    ones = np.ones((len(values), 1))
    return gaussian_linear_interval(ones, values, [1.0], epsilon)


def sphere_conditional_sample(summary: GaussianSummary, rng=None, size: int | None = None) -> np.ndarray:
    """Label vectors uniform on ``{Y : X'Y = C, Y'Y = r^2}``.

    Draw Gaussian noise, drop its component in the column space of ``X``,
    scale it to the remaining radius and add the fitted part.
    """
    rng = np.random.default_rng(rng)
    X = summary.X
    n, p = X.shape
    if p:
        V, inv_s = _inverse_gram(X)
        base = X @ (V @ (inv_s**2 * (V.T @ summary.xty)))
        Q = np.linalg.qr(X)[0]
    else:
        base = np.zeros(n)
        Q = np.empty((n, 0))
    r2 = summary.yty - float(base @ base)
    if r2 < -1e-9 * max(1.0, summary.yty) or n <= p:
        raise ValueError("no label vector satisfies the summary")
    radius = math.sqrt(max(r2, 0.0))
    k = 1 if size is None else size
    w = rng.standard_normal((k, n))
    w -= (w @ Q) @ Q.T
    w *= radius / np.linalg.norm(w, axis=1, keepdims=True)
    out = base + w
    return out[0] if size is None else out


def t_statistics(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Studentized prediction error of the last label from the others.

    ``Y`` has shape ``(k, n)`` (one label vector per row) or ``(n,)``.
    """
    X = np.asarray(X, dtype=float)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    Xm, xn = X[:-1], X[-1]
    m, p = Xm.shape
    V, inv_s = _inverse_gram(Xm)
    pinv = V @ (inv_s[:, None] ** 2 * V.T) @ Xm.T  # (X'X)^-1 X'
    Ym = Y[:, :-1]
    beta = Ym @ pinv.T
    resid = Ym - beta @ Xm.T
    s = np.sqrt((resid**2).sum(axis=1) / (m - p))
    leverage = float(np.sum((inv_s * (V.T @ xn)) ** 2))
    return (Y[:, -1] - beta @ xn) / (s * math.sqrt(1.0 + leverage))


def fisher_hits(z: np.ndarray, epsilon: float) -> np.ndarray:
    """Hit indicators of the next-value interval for steps ``n = 3..N``.

    Column ``n - 3`` tells whether ``z_n`` falls in the interval built from
    ``z_1..z_{n-1}``.  ``z`` has shape ``(trials, N)``.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    N = z.shape[1]
    csum = np.cumsum(z, axis=1)
    csq = np.cumsum(z * z, axis=1)
    hits = np.empty((z.shape[0], N - 2), dtype=bool)
    for n in range(3, N + 1):
        m = n - 1
        mean = csum[:, m - 1] / m
        var = (csq[:, m - 1] - m * mean**2) / (m - 1)
        half = t_quantile(m - 1, epsilon / 2) * np.sqrt(np.maximum(var, 0.0) * n / m)
        hits[:, n - 3] = np.abs(z[:, n - 1] - mean) <= half
    return hits


# --------------------------------------------------------------------------
# generic step


def ocm_conformal(
    model: CompressionModel,
    history: Sequence[Example],
    candidate: Example | Hashable | None,
    measure=None,
    epsilons: Iterable[float] = (),
    label_space: Sequence[Hashable] = (),
    grid_step: float | None = None,
):
    """One conformal step under a compression model.

    For the discrete models pass a new object as ``candidate`` (an
    :class:`Example` with ``y=None``) and a ``label_space``; the result is
    ``(pvalues, regions)``.  For the Gaussian model ``candidate`` is the new
    object and regions are t-intervals.
    """
    history = list(history)
    if isinstance(model, GaussianLinearModel):
        x = np.asarray(candidate.x if isinstance(candidate, Example) else candidate, dtype=float)
        summary = model.summarize(history)
        regions = {}
        for e in epsilons:
            region = model.interval(summary, x, e)
            regions[e] = grid_snap(region, grid_step) if grid_step else region
        return {}, regions
    if not label_space:
        raise ValueError("discrete models need a label space")
    measure = get_measure(measure)
    pvalues = {y: model.p_value(history, candidate.with_label(y), measure) for y in label_space}
    regions = {e: LabelSet(tuple(y for y in label_space if pvalues[y] > as_fraction(e))) for e in epsilons}
    return pvalues, regions


# --------------------------------------------------------------------------
# on-line predictors


class FisherPredictor:
    """Next-value interval for numbers with no objects."""

    name = "fisher"

    def __init__(self, grid_step: float | None = None) -> None:
        self.grid_step = grid_step

    def full_region(self) -> RealRegion:
        return RealRegion.everything()

    def predict(self, X_old, y_old, x_new, epsilon):
        if float(epsilon) == 0.0:
            return self.full_region(), None
        region = fisher_interval(y_old, epsilon)
        return (grid_snap(region, self.grid_step) if self.grid_step else region), None


class GaussianLinearPredictor:
    name = "gaussian"

    def __init__(self, intercept: bool = True, grid_step: float | None = None) -> None:
        self.intercept = intercept
        self.grid_step = grid_step

    def full_region(self) -> RealRegion:
        return RealRegion.everything()

    def predict(self, X_old, y_old, x_new, epsilon):
        if float(epsilon) == 0.0:
            return self.full_region(), None
        region = gaussian_linear_interval(X_old, y_old, x_new, epsilon, self.intercept)
        return (grid_snap(region, self.grid_step) if self.grid_step else region), None
