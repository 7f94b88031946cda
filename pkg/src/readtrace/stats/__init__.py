"""Inferential statistics used by the analysis pipelines."""

from .descriptive import Correlation, Descriptives, descriptives, pearson, stars
from .distributions import f_cdf, f_sf, reg_inc_beta, t_cdf, t_critical, t_sf_two_sided
from .regression import (
    Design,
    FTestResult,
    Prediction,
    RankDeficientError,
    RegressionReport,
    StepwiseResult,
    cross,
    interact,
    ols_fit,
    omnibus_block_test,
    partial_f,
    partial_f_r2,
    predict_with_intervals,
    stepwise_select,
)

__all__ = [
    "Correlation",
    "Descriptives",
    "Design",
    "FTestResult",
    "Prediction",
    "RankDeficientError",
    "RegressionReport",
    "StepwiseResult",
    "cross",
    "descriptives",
    "f_cdf",
    "f_sf",
    "interact",
    "ols_fit",
    "omnibus_block_test",
    "partial_f",
    "partial_f_r2",
    "pearson",
    "predict_with_intervals",
    "reg_inc_beta",
    "stars",
    "stepwise_select",
    "t_cdf",
    "t_critical",
    "t_sf_two_sided",
]
