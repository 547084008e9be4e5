"""Conformal prediction regions under on-line compression models."""

from .conformal import (
    ClassificationTask,
    ConformalClassifier,
    ConformalRegressor,
    RegressionTask,
    conformal_classify,
    conformal_old_examples,
    conformal_regress_exact,
    count_profile,
)
from .core import (
    Bag,
    Example,
    LabelSet,
    PValueReport,
    RealRegion,
    SignificanceLevel,
    bag_draw_probability,
    bag_ordering_probability,
    confidence_credibility,
    grid_snap,
    p_value_from_scores,
    region_from_pvalues,
)
from .datasets import Dataset, DatasetError, emit, ingest, load_bundled
from .nonconformity import MEASURES, AffineScoreForm, get_measure, least_squares_affine
from .ocm import (
    ExchangeabilityModel,
    GaussianLinearModel,
    WithinLabelModel,
    fisher_interval,
    gaussian_linear_interval,
    ocm_conformal,
    sphere_conditional_sample,
)
from .tdist import TDistribution, t_cdf, t_quantile
from .validity import betting_audit, strangeness_bound_check, online_eval, permutation_experiment

__version__ = "0.1.0"

__all__ = [
    "ClassificationTask",
    "ConformalClassifier",
    "ConformalRegressor",
    "RegressionTask",
    "conformal_classify",
    "conformal_old_examples",
    "conformal_regress_exact",
    "count_profile",
    "Bag",
    "Example",
    "LabelSet",
    "PValueReport",
    "RealRegion",
    "SignificanceLevel",
    "bag_draw_probability",
    "bag_ordering_probability",
    "confidence_credibility",
    "grid_snap",
    "p_value_from_scores",
    "region_from_pvalues",
    "Dataset",
    "DatasetError",
    "emit",
    "ingest",
    "load_bundled",
    "MEASURES",
    "AffineScoreForm",
    "get_measure",
    "least_squares_affine",
    "ExchangeabilityModel",
    "GaussianLinearModel",
    "WithinLabelModel",
    "fisher_interval",
    "gaussian_linear_interval",
    "ocm_conformal",
    "sphere_conditional_sample",
    "TDistribution",
    "t_cdf",
    "t_quantile",
    "betting_audit",
    "strangeness_bound_check",
    "online_eval",
    "permutation_experiment",
]
