"""On-line evaluation and validity checks.

* :func:`online_eval` replays a dataset in order, predicting each label from
  the examples before it, and records the outcome in a :class:`ValidityLedger`.
* :func:`permutation_experiment` repeats that over seeded shuffles.
* :func:`betting_audit` runs a bettor who profits when errors are more
  frequent than ``epsilon``; a large final capital is evidence against
  validity, and the capital path obeys a deterministic lower bound.
* :func:`strangeness_bound_check` and :func:`exact_conditional_error_rates`
  check the finite-sample guarantees of conformal predictors directly.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Protocol, Sequence

import numpy as np

from .core import Bag, Example, LabelSet, RealRegion, bag_ordering_probability, distinct_orderings

__all__ = [
    "Predictor",
    "StepOutcome",
    "ValidityLedger",
    "online_eval",
    "PermutationResult",
    "permutation_experiment",
    "CapitalTrajectory",
    "betting_capital",
    "betting_audit",
    "strangeness_bound_check",
    "exact_conditional_error_rates",
    "resampling_study",
]

WARMUP = 2


class Predictor(Protocol):
    name: str

    def full_region(self) -> LabelSet | RealRegion: ...

    def predict(self, X_old, y_old, x_new, epsilon) -> tuple[LabelSet | RealRegion, dict | None]: ...


def _size_class(region: LabelSet | RealRegion) -> str:
    if isinstance(region, LabelSet):
        k = len(region)
    elif region.is_empty:
        k = 0
    else:
        k = 1 if len(region) == 1 and region.intervals[0][0] == region.intervals[0][1] else 2
    return ("empty", "singleton", "uncertain")[min(k, 2)]


@dataclass(frozen=True)
class StepOutcome:
    step: int
    label: Any
    region: LabelSet | RealRegion
    hit: bool
    size: str
    warmup: bool = False
    pvalues: dict | None = None

    @property
    def category(self) -> str:
        """One of the five outcome categories."""
        if self.size == "empty":
            return "empty"
        return f"{self.size} {'hits' if self.hit else 'errors'}"

    def record(self) -> dict:
        region = list(self.region) if isinstance(self.region, LabelSet) else [list(iv) for iv in self.region]
        out = {
            "step": self.step,
            "label": _plain(self.label),
            "region": [_plain(r) for r in region] if isinstance(self.region, LabelSet) else region,
            "size": self.size,
            "hit": self.hit,
            "warmup": self.warmup,
        }
        if self.pvalues is not None:
            out["pvalues"] = {str(k): str(v) for k, v in self.pvalues.items()}
        return out


def _plain(v: Any) -> Any:
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


CATEGORIES = ("singleton hits", "uncertain hits", "empty", "singleton errors", "uncertain errors")


@dataclass
class ValidityLedger:
    """Outcome stream of an on-line run.  Warm-up steps are kept but not counted."""

    epsilon: float
    outcomes: list[StepOutcome] = field(default_factory=list)
    predictor: str = ""

    def scored(self) -> list[StepOutcome]:
        return [o for o in self.outcomes if not o.warmup]

    @property
    def errors(self) -> np.ndarray:
        return np.array([not o.hit for o in self.scored()], dtype=bool)

    @property
    def error_rate(self) -> float:
        e = self.errors
        return float(e.mean()) if e.size else 0.0

    def cumulative_errors(self) -> np.ndarray:
        return np.cumsum(self.errors)

    def per_label_error_rates(self) -> dict:
        totals: Counter = Counter()
        errs: Counter = Counter()
        for o in self.scored():
            totals[o.label] += 1
            errs[o.label] += not o.hit
        return {lab: errs[lab] / totals[lab] for lab in totals}

    def aggregates(self) -> dict:
        counts = Counter(o.category for o in self.scored())
        total = sum(counts.values())
        hits = counts["singleton hits"] + counts["uncertain hits"]
        errors = total - hits
        singletons = counts["singleton hits"] + counts["singleton errors"]
        uncertain = counts["uncertain hits"] + counts["uncertain errors"]

        def pct(a: int, b: int) -> float | None:
            return round(100.0 * a / b, 2) if b else None

        return {
            **{c: counts[c] for c in CATEGORIES},
            "total hits": hits,
            "total errors": errors,
            "total examples": total,
            "% hits": pct(hits, total),
            "total singletons": singletons,
            "% hits among singletons": pct(counts["singleton hits"], singletons),
            "total uncertain": uncertain,
            "% hits among uncertain": pct(counts["uncertain hits"], uncertain),
            "% empty among errors": pct(counts["empty"], errors),
            "warm-up steps": len(self.outcomes) - total,
        }


def _label_in(y: Any, region: LabelSet | RealRegion) -> bool:
    return region.covers(y) if isinstance(region, RealRegion) else y in region


def online_eval(X, y, predictor: Predictor, epsilon: float, warmup: int = WARMUP) -> ValidityLedger:
    """Predict each label from everything before it, then reveal it.

    The first ``warmup`` steps get the full region and are excluded from rates.
    """
    y = np.asarray(y, dtype=object if np.asarray(y).dtype.kind in "OUS" else float)
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    ledger = ValidityLedger(float(epsilon), predictor=getattr(predictor, "name", ""))
    for n in range(len(y)):
        if n < warmup or float(epsilon) == 0.0:
            region, pvalues = predictor.full_region(), None
        else:
            region, pvalues = predictor.predict(X[:n], y[:n], X[n], epsilon)
        hit = _label_in(y[n], region)
        ledger.outcomes.append(
            StepOutcome(n + 1, y[n], region, hit, _size_class(region), n < warmup, pvalues)
        )
    return ledger


@dataclass
class PermutationResult:
    ledgers: list[ValidityLedger]
    orders: list[np.ndarray]

    @property
    def error_rates(self) -> np.ndarray:
        return np.array([ledger.error_rate for ledger in self.ledgers])

    @property
    def mean_error_rate(self) -> float:
        return float(self.error_rates.mean())

    def curves(self) -> np.ndarray:
        """Cumulative error counts, one row per trial."""
        return np.vstack([ledger.cumulative_errors() for ledger in self.ledgers])


def permutation_experiment(
    X, y, predictor: Predictor, epsilon: float, trials: int = 1, seed: int | None = None
) -> PermutationResult:
    """Evaluate over ``trials`` shuffles of the data.

    Each trial draws its own seed from ``seed``; ``seed=None`` keeps the
    original order.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    y = np.asarray(y)
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    if seed is None:
        orders = [np.arange(len(y))] * trials
    else:
        streams = np.random.SeedSequence(seed).spawn(trials)
        orders = [np.random.default_rng(s).permutation(len(y)) for s in streams]
    ledgers = [online_eval(X[o], y[o], predictor, epsilon) for o in orders]
    return PermutationResult(ledgers, orders)


# --------------------------------------------------------------------------
# betting


@dataclass(frozen=True)
class CapitalTrajectory:
    """Capital ``K[n]`` for ``n = N..0`` (stored by index ``n``), bets placed
    backwards from the last step to the first."""

    epsilon: float
    errors: np.ndarray
    capital: np.ndarray
    stakes: np.ndarray
    tail_sums: np.ndarray

    @property
    def N(self) -> int:
        return len(self.errors)

    @property
    def final_capital(self) -> float:
        return float(self.capital[0])

    @property
    def frequency(self) -> float:
        return float(self.errors.mean())

    def lower_bounds(self) -> np.ndarray:
        """``n/N + (tail sum after n)^+ ^2 / N`` for ``n = 0..N``."""
        n = np.arange(self.N + 1)
        return n / self.N + np.maximum(self.tail_sums, 0.0) ** 2 / self.N

    def bound_holds(self, rtol: float = 1e-12) -> np.ndarray:
        lb = self.lower_bounds()
        return self.capital >= lb - rtol * np.maximum(1.0, lb)

    def frequency_bound_holds(self, delta: float) -> bool:
        """If errors are at least ``epsilon + delta`` frequent, capital is at least ``N delta^2``."""
        if self.frequency < self.epsilon + delta:
            return True
        return self.final_capital >= self.N * delta**2 * (1 - 1e-12)


def betting_capital(errors, epsilon: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized capital recursion.

    ``errors`` has shape ``(trials, N)``.  Returns capital and tail sums of
    shape ``(trials, N + 1)`` indexed by ``n``, and stakes ``(trials, N)``
    where ``stakes[:, n - 1]`` is the stake on ``e_n``.
    """
    e = np.atleast_2d(np.asarray(errors, dtype=float))
    trials, N = e.shape
    excess = e - epsilon
    # tails[:, n] = sum_{j > n} (e_j - epsilon)
    tails = np.zeros((trials, N + 1))
    tails[:, :N] = np.cumsum(excess[:, ::-1], axis=1)[:, ::-1]
    capital = np.empty((trials, N + 1))
    capital[:, N] = 1.0
    stakes = np.zeros((trials, N))
    for n in range(N, 0, -1):
        s = tails[:, n]
        stake = np.where(s >= epsilon, 2.0 * s / N, 0.0)
        stakes[:, n - 1] = stake
        capital[:, n - 1] = capital[:, n] + stake * excess[:, n - 1]
    return capital, tails, stakes


def betting_audit(errors: Sequence[bool], epsilon: float) -> CapitalTrajectory:
    """Bet against the error sequence at price ``epsilon``, last step first.

    Before step ``n`` the bettor knows the errors after ``n``; when they
    exceed ``epsilon`` per step by at least ``epsilon`` in total, it buys
    ``2/N`` times that excess of the ticket paying ``e_n``.
    """
    if not 0.0 < epsilon < 0.5:
        raise ValueError(f"epsilon must lie in (0, 1/2), got {epsilon}")
    e = np.asarray(errors, dtype=float).ravel()
    if e.size == 0:
        raise ValueError("empty error sequence")
    capital, tails, stakes = betting_capital(e[None, :], epsilon)
    return CapitalTrajectory(float(epsilon), e.astype(bool), capital[0], stakes[0], tails[0])


# --------------------------------------------------------------------------
# finite-sample guarantees


def _split(examples: Sequence[Example]) -> tuple[np.ndarray, np.ndarray]:
    p = len(examples[0].x)
    X = np.array([e.x for e in examples], dtype=float).reshape(len(examples), p)
    labels = [e.y for e in examples]
    kind = object if any(isinstance(v, str) for v in labels) else float
    return X, np.array(labels, dtype=kind)


def strangeness_bound_check(bag: Iterable[Example], predictor: Predictor, epsilon: float) -> tuple[int, bool]:
    """Count examples left out of the region predicted from the rest of the bag.

    A conformal predictor leaves out at most ``n * epsilon`` of them.
    """
    examples = list(bag)
    n = len(examples)
    X, y = _split(examples)
    count = 0
    for i in range(n):
        keep = np.arange(n) != i
        region, _ = predictor.predict(X[keep], y[keep], X[i], epsilon)
        count += not _label_in(y[i], region)
    return count, count <= n * float(epsilon) + 1e-12


def exact_conditional_error_rates(
    bag: Iterable[Example], predictor: Predictor, epsilon: float, warmup: int = WARMUP
) -> dict[int, Fraction]:
    """Worst error probability at each step given the bag of examples so far.

    Every distinct ordering of ``bag`` is enumerated with its exact
    probability; for step ``n`` the conditioning event is the bag of the
    first ``n`` examples.
    """
    bag = Bag(bag)
    cache: dict = {}
    weight: dict = defaultdict(Fraction)
    wrong: dict = defaultdict(Fraction)
    for order in distinct_orderings(bag):
        prob = bag_ordering_probability(bag, order)
        for n in range(warmup + 1, len(order) + 1):
            key = (order[: n - 1], order[n - 1])
            if key not in cache:
                X, y = _split(list(order[:n]))
                region, _ = predictor.predict(X[:-1], y[:-1], X[-1], epsilon)
                cache[key] = not _label_in(y[-1], region)
            group = (n, Bag(order[:n]))
            weight[group] += prob
            wrong[group] += prob * cache[key]
    worst: dict[int, Fraction] = {}
    for (n, b), w in weight.items():
        worst[n] = max(worst.get(n, Fraction(0)), wrong[(n, b)] / w)
    return dict(sorted(worst.items()))


def resampling_study(
    X, y, predictors: dict[str, Predictor], epsilon: float = 0.08,
    n_samples: int = 1000, sample_size: int = 25, seed: int = 0,
) -> dict[str, dict]:
    """Predict the last example of many random subsamples.

    Each sample of ``sample_size`` rows is drawn without replacement; the
    first ``sample_size - 1`` rows predict the last one.  All predictors see
    the same samples.
    """
    y = np.asarray(y, dtype=object)
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    rng = np.random.default_rng(seed)
    samples = [rng.choice(len(y), size=sample_size, replace=False) for _ in range(n_samples)]
    out = {}
    for name, predictor in predictors.items():
        ledger = ValidityLedger(float(epsilon), predictor=name)
        for k, idx in enumerate(samples):
            region, pvalues = predictor.predict(X[idx[:-1]], y[idx[:-1]], X[idx[-1]], epsilon)
            hit = _label_in(y[idx[-1]], region)
            ledger.outcomes.append(StepOutcome(k + 1, y[idx[-1]], region, hit, _size_class(region), False, pvalues))
        out[name] = ledger.aggregates()
    return out
