from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conformal_ocm.conformal import ClassificationTask, conformal_classify
from conformal_ocm.core import Bag, Example, RealRegion, grid_snap
from conformal_ocm.ocm import (
    DegenerateIntervalWarning,
    ExchangeabilityModel,
    FisherPredictor,
    GaussianLinearModel,
    GaussianSummary,
    WithinLabelModel,
    fisher_hits,
    fisher_interval,
    gaussian_linear_interval,
    ocm_conformal,
    sphere_conditional_sample,
    t_statistics,
)

from oracles import fisher_direct


def _examples(X, y):
    return [Example(tuple(x), lab) for x, lab in zip(X, y)]


def test_exchangeability_model_on_iris(iris_class):
    X, y = iris_class
    ex = _examples(X, y)
    pvalues, regions = ocm_conformal(ExchangeabilityModel(), ex[:-1], Example(ex[-1].x), "knn-ratio", [0.08], ("s", "v"))
    assert pvalues == {"s": Fraction(2, 25), "v": Fraction(8, 25)}
    assert list(regions[0.08]) == ["v"]


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["knn-ratio", "label-mean", "band"]), st.integers(0, 10**6), st.booleans())
def test_cross_engine_identity(name, seed, within):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    X = rng.integers(0, 4, size=(n, 1)).astype(float)
    y = rng.choice(np.array(["s", "v"], dtype=object), size=n)
    model = WithinLabelModel() if within else ExchangeabilityModel()
    ex = _examples(X, y)
    slow, _ = ocm_conformal(model, ex[:-1], Example(ex[-1].x), name, (), ("s", "v"))
    task = ClassificationTask(X[:-1], y[:-1], X[-1], ("s", "v"), name)
    fast = conformal_classify(task, within_label=within).pvalues
    assert slow == fast


def test_within_label_by_hand():
    # labels (s, s, v) then a v: the kernel picks one of the two v positions
    history = [Example((0.0,), "s"), Example((1.0,), "s"), Example((5.0,), "v")]
    model = WithinLabelModel()
    p = model.p_value(history, Example((9.0,), "v"), "label-mean")
    # v objects {5, 9}, mean 7: both score 2, so both count
    assert p == 1
    p = model.p_value(history + [Example((5.0,), "v")], Example((9.0,), "v"), "label-mean")
    assert p == Fraction(1, 3)
    # a label seen for the first time is only compared with itself
    assert model.p_value(history, Example((100.0,), "w"), "knn-ratio") == 1


def test_update_path_independence(rng):
    X = rng.normal(size=(8, 2))
    y = rng.normal(size=8)
    ex = _examples(X, y)
    assert ExchangeabilityModel().summarize(ex) == Bag(ex)
    s = GaussianLinearModel(2).summarize(ex)
    assert np.allclose(s.X, X) and np.allclose(s.xty, X.T @ y) and s.yty == pytest.approx(y @ y)
    labels = rng.choice(np.array(["a", "b"], dtype=object), size=8)
    ex = _examples(X, labels)
    wl = WithinLabelModel().summarize(ex)
    assert wl.labels == tuple(labels)
    for lab in ("a", "b"):
        assert wl.bag(lab) == Bag(tuple(x) for x, l in zip(X, labels) if l == lab)


def test_within_label_kernel_peels_same_label():
    model = WithinLabelModel()
    s = model.summarize([Example((1.0,), "a"), Example((2.0,), "b"), Example((3.0,), "a")])
    steps = model.one_step(s)
    assert sorted((float(p), z.x) for p, _, z in steps) == [(0.5, (1.0,)), (0.5, (3.0,))]
    for _, prev, z in steps:
        assert model.update(prev, z) == s


def test_fisher_czuber(czuber):
    region = fisher_interval(czuber, 0.05)
    (lo, hi), = region.intervals
    ref = fisher_direct(czuber, 0.05, stats.t.isf(0.025, 18))
    assert (lo, hi) == pytest.approx(ref, abs=1e-9)
    assert grid_snap(region, 1) == RealRegion.interval(10, 23)


def test_fisher_small_and_degenerate():
    region = fisher_interval([0, 0, 0, 1], 0.5)
    (lo, hi), = region.intervals
    assert (lo + hi) / 2 == pytest.approx(0.25)
    assert (lo, hi) == pytest.approx(fisher_direct([0, 0, 0, 1], 0.5, stats.t.isf(0.25, 3)))
    with pytest.warns(DegenerateIntervalWarning):
        region = fisher_interval([4.0, 4.0, 4.0], 0.1)
    (lo, hi), = region.intervals
    assert lo == hi == pytest.approx(4.0)
    with pytest.raises(ValueError):
        fisher_interval([1.0], 0.1)


def test_gaussian_is_fisher_for_constant_design(rng):
    for _ in range(20):
        v = rng.normal(size=int(rng.integers(3, 30)))
        eps = float(rng.uniform(0.01, 0.5))
        g = gaussian_linear_interval(np.ones((len(v), 1)), v, [1.0], eps)
        assert g == fisher_interval(v, eps)


def test_gaussian_iris(iris_reg):
    X, y = iris_reg
    for eps, snapped in ((0.04, (1.0, 2.3)), (0.08, (1.1, 2.2))):
        region = gaussian_linear_interval(X[:-1], y[:-1], X[-1], eps, intercept=True)
        (lo, hi), = region.intervals
        assert (lo + hi) / 2 == pytest.approx(1.66, abs=0.005)
        assert (hi - lo) / 2 / stats.t.isf(eps / 2, 22) == pytest.approx(0.311, abs=0.0005)
        assert grid_snap(region, 0.1) == RealRegion.interval(*snapped)


def test_gaussian_preconditions():
    with pytest.raises(ValueError, match="rank"):
        gaussian_linear_interval(np.ones((6, 1)), np.arange(6.0), [1.0], 0.1, intercept=True)
    with pytest.raises(ValueError):
        gaussian_linear_interval(np.eye(2), [1.0, 2.0], [1.0, 1.0], 0.1)


def test_gaussian_pvalue_matches_interval(rng):
    X = np.column_stack([np.ones(12), rng.normal(size=12)])
    y = X @ [1.0, 2.0] + rng.normal(size=12)
    model = GaussianLinearModel(2)
    region = gaussian_linear_interval(X[:-1], y[:-1], X[-1], 0.1)
    (lo, hi), = region.intervals
    hist = [Example(tuple(x), v) for x, v in zip(X[:-1], y[:-1])]
    for cand in np.linspace(lo - 1, hi + 1, 41):
        p = model.p_value(hist, Example(tuple(X[-1]), cand))
        if abs(cand - lo) > 1e-6 and abs(cand - hi) > 1e-6:
            assert (p > 0.1) == (lo <= cand <= hi)


def test_sphere_sample_constraints(rng):
    X = rng.normal(size=(7, 2))
    y = rng.normal(size=7)
    s = GaussianSummary(X, X.T @ y, float(y @ y))
    Y = sphere_conditional_sample(s, rng, size=200)
    assert np.allclose(Y @ X, X.T @ y, atol=1e-9)
    assert np.allclose((Y**2).sum(axis=1), y @ y, atol=1e-9)
    with pytest.raises(ValueError):
        sphere_conditional_sample(GaussianSummary(X, X.T @ y, 0.0), rng)


def test_sphere_sample_circle():
    s = GaussianSummary(np.empty((2, 0)), np.zeros(0), 1.0)
    Y = sphere_conditional_sample(s, 3, size=100_000)
    assert np.allclose((Y**2).sum(axis=1), 1.0)
    assert (Y[:, 0] ** 2).mean() == pytest.approx(0.5, abs=0.01)


def test_t_statistics_match_interval(rng):
    X = np.column_stack([np.ones(10), rng.normal(size=10)])
    y = rng.normal(size=10)
    t = t_statistics(X, y)[0]
    region = gaussian_linear_interval(X[:-1], y[:-1], X[-1], 0.2)
    (lo, hi), = region.intervals
    half = (hi - lo) / 2
    assert abs(t) * half / stats.t.isf(0.1, 7) == pytest.approx(abs(y[-1] - (lo + hi) / 2))


def test_fisher_hits_match_predictor(rng):
    z = rng.normal(size=30)
    hits = fisher_hits(z[None, :], 0.1)[0]
    for n in range(3, 31):
        region, _ = FisherPredictor().predict(None, z[: n - 1], None, 0.1)
        assert hits[n - 3] == (z[n - 1] in region)
