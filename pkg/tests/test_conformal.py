import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conformal_ocm.conformal import (
    ClassificationTask,
    ConformalClassifier,
    ConformalRegressor,
    RegressionTask,
    conformal_classify,
    conformal_old_examples,
    conformal_regress_exact,
    count_profile,
    crossing_points,
)
from conformal_ocm.core import Example, RealRegion, grid_snap
from conformal_ocm.nonconformity import AffineScoreForm, NonconformityMeasure, get_measure, least_squares_affine
from conformal_ocm.validity import strangeness_bound_check

from oracles import scan_mismatches


def _classify(X, y, name, eps=(), **kw):
    task = ClassificationTask(X[:-1], y[:-1], X[-1], ("s", "v"), name)
    return conformal_classify(task, eps, **kw)


@pytest.mark.parametrize(
    "name, ps, pv",
    [("knn-ratio", Fraction(2, 25), Fraction(8, 25)),
     ("label-mean", Fraction(1, 25), Fraction(2, 25)),
     ("band", Fraction(2, 25), Fraction(1))],
)
def test_iris_classification_pvalues(iris_class, name, ps, pv):
    X, y = iris_class
    result = _classify(X, y, name)
    assert result.pvalues == {"s": ps, "v": pv}


def test_iris_regions_and_confidence(iris_class):
    X, y = iris_class
    result = _classify(X, y, "knn-ratio", (0.08, 0.05, Fraction(1, 3)))
    assert list(result.regions[0.08]) == ["v"]
    assert list(result.regions[0.05]) == ["s", "v"]
    assert result.regions[Fraction(1, 3)].is_empty
    assert (result.confidence, result.credibility) == (Fraction(23, 25), Fraction(8, 25))


def test_single_old_example():
    task = ClassificationTask([[0.0]], ["a"], [1.0], ("a", "b"), "knn-ratio")
    result = conformal_classify(task, (0.4,))
    assert result.pvalues["a"] in (Fraction(1, 2), 1)
    assert "a" in result.regions[0.4]


class Boom(NonconformityMeasure):
    name = "boom"

    def scores(self, X, y):
        if y[-1] == "b":
            raise ValueError("cannot score")
        return np.zeros(len(y))


def test_measure_errors_become_warnings():
    task = ClassificationTask([[0.0], [1.0]], ["a", "a"], [0.5], ("a", "b"), Boom())
    result = conformal_classify(task)
    assert result.pvalues == {"a": 1, "b": Fraction(1, 3)}
    assert len(result.report.warnings) == 1


def test_czuber_conformal(czuber):
    region = conformal_old_examples(czuber, [0.05])[0.05]
    (lo, hi), = region.intervals
    assert lo == pytest.approx(10, abs=1e-9)
    assert hi == pytest.approx(214 / 9, abs=1e-9)
    assert grid_snap(region, 1) == RealRegion.interval(10, 23)


def test_old_examples_trivial():
    for eps in (0.1, 0.5, 0.74):
        assert 5.0 in conformal_old_examples([5, 5, 5], [eps])[eps]
    region = conformal_old_examples([0, 10], [0.5])[0.5]
    assert scan_mismatches(region, "average", np.empty((3, 0)), np.array([0.0, 10.0]), 0.5, -30, 40) == []
    with pytest.raises(ValueError):
        conformal_old_examples([1.0], [0.1])


def test_iris_regression_intervals(iris_reg):
    X, y = iris_reg
    out = {}
    for name in ("least-squares", "knn-reg"):
        task = RegressionTask(X[:-1], y[:-1], X[-1], name)
        out[name] = {e: grid_snap(r, 0.1) for e, r in conformal_regress_exact(task, [0.04, 0.08]).items()}
    assert out["least-squares"][0.04] == RealRegion.interval(1.0, 2.4)
    assert out["least-squares"][0.08] == RealRegion.interval(1.0, 2.3)
    assert out["knn-reg"][0.08] == RealRegion.interval(1.2, 1.9)
    # largest other score is 0.7 (see test_nn_regression_scores_by_hand)
    raw = conformal_regress_exact(RegressionTask(X[:-1], y[:-1], X[-1], "knn-reg"), [0.04])[0.04]
    assert raw.intervals[0] == pytest.approx((1.55 - 0.7, 1.55 + 0.7))


def test_crossing_points_table(iris_reg):
    X, y = iris_reg
    form = least_squares_affine(X[:-1], y[:-1], X[-1])
    roots = crossing_points(form)
    c, d = form.c, form.d
    for i in (14, 17):
        for r in roots[i]:
            assert abs(c[i] * r + d[i]) == pytest.approx(abs(c[-1] * r + d[-1]), abs=1e-12)


def test_constant_new_score():
    form = AffineScoreForm(np.array([1.0, 1.0, 0.0]), np.array([0.0, -1.0, 0.5]))
    profile = count_profile(form)
    assert profile.region(0.5) == RealRegion.everything()
    # both old scores must reach 0.5: the two rays plus the isolated point 0.5
    assert profile.region(0.7) == RealRegion(((-math.inf, -0.5), (0.5, 0.5), (1.5, math.inf)))
    flat = AffineScoreForm(np.zeros(3), np.array([1.0, 2.0, 3.0]))
    assert conformal_regress_exact(flat, [0.5])[0.5].is_empty
    assert conformal_regress_exact(flat, [0.2])[0.2] == RealRegion.everything()


REG = ["average", "average-bag", "knn-reg", "least-squares", "least-squares-deleted"]


def _instance(seed, name):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 12))
    if name.startswith("average"):
        X = np.empty((n + 1, 0))
    else:
        X = rng.integers(0, 5, size=(n + 1, 1)).astype(float)
        X[:2, 0] = [0.0, 4.0]
    y_old = rng.integers(0, 5, size=n).astype(float)
    return X, y_old


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(REG), st.integers(0, 10**6), st.sampled_from([0.05, 0.1, 0.2, 0.3, 0.5]))
def test_engine_matches_brute_force(name, seed, eps):
    X, y_old = _instance(seed, name)
    task = RegressionTask(X[:-1], y_old, X[-1], name)
    region = conformal_regress_exact(task, [eps])[eps]
    assert scan_mismatches(region, name, X, y_old, eps, -25, 30, points=4000) == []


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(REG), st.integers(0, 10**6))
def test_regression_regions_nested(name, seed):
    X, y_old = _instance(seed, name)
    task = RegressionTask(X[:-1], y_old, X[-1], name)
    levels = [0.05, 0.1, 0.2, 0.3, 0.5, 0.8]
    regions = conformal_regress_exact(task, levels)
    for lo, hi in zip(levels, levels[1:]):
        assert regions[hi].issubset(regions[lo], tol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["knn-ratio", "label-mean", "band"]), st.integers(0, 10**6))
def test_classification_regions_nested(name, seed):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 6, size=(10, 1)).astype(float)
    y = rng.choice(np.array(["s", "v"], dtype=object), size=10)
    result = _classify(X, y, name, (0.05, 0.1, 0.2, 0.4, 0.6))
    eps = sorted(result.regions)
    for lo, hi in zip(eps, eps[1:]):
        assert result.regions[hi].issubset(result.regions[lo])


class Transformed(NonconformityMeasure):
    def __init__(self, base):
        self.base = get_measure(base)
        self.inclusive = self.base.inclusive
        self.name = f"f({self.base.name})"

    def scores(self, X, y):
        a = self.base.scores(X, y)
        return np.where(np.isinf(a), np.inf, np.arctan(a) + a**3)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["knn-ratio", "label-mean", "band"]), st.integers(0, 10**6))
def test_monotone_transform_classification(name, seed):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 6, size=(12, 1)).astype(float)
    y = rng.choice(np.array(["s", "v"], dtype=object), size=12)
    plain = _classify(X, y, name, (0.1, 0.3))
    bent = _classify(X, y, Transformed(name), (0.1, 0.3))
    assert plain.pvalues == bent.pvalues and plain.regions == bent.regions


def test_old_examples_measures_agree(rng):
    for _ in range(50):
        values = rng.integers(0, 10, size=int(rng.integers(2, 9)))
        for eps in (0.1, 0.25, 0.5):
            a = conformal_old_examples(values, [eps], "average")[eps]
            b = conformal_old_examples(values, [eps], "average-bag")[eps]
            assert a.issubset(b, 1e-9) and b.issubset(a, 1e-9)


def test_strangeness_bound_on_czuber():
    values = [17, 20, 10, 17, 12, 15, 19, 22, 17, 19, 14, 22, 18, 17, 13, 12, 18, 15, 17, 16]
    bag = [Example((), float(v)) for v in values]
    count, ok = strangeness_bound_check(bag, ConformalRegressor("average"), 0.05)
    assert ok and count <= 1


@pytest.mark.parametrize("eps", [0.1, 0.3])
def test_strangeness_bound_random_bags(eps):
    rng = np.random.default_rng(7)
    for _ in range(100):
        X = rng.integers(0, 4, size=(10, 1)).astype(float)
        y = rng.choice(np.array(["a", "b"], dtype=object), size=10)
        bag = [Example(tuple(x), lab) for x, lab in zip(X, y)]
        count, ok = strangeness_bound_check(bag, ConformalClassifier("knn-ratio", ("a", "b")), eps)
        assert ok, count


def test_near_parallel_rows_do_not_cross():
    # row 0 and the new example share a slope up to rounding
    X = np.array([[0.0], [4.0], [2.0], [3.0], [2.0]])
    y_old = np.array([3.0, 3.0, 0.0, 3.0])
    region = conformal_regress_exact(RegressionTask(X[:-1], y_old, X[-1], "least-squares-deleted"), [0.2])[0.2]
    assert 10.0 not in region
    assert scan_mismatches(region, "least-squares-deleted", X, y_old, 0.2, -25, 30) == []
