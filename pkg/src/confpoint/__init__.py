"""Conformal changepoint localization and testing for univariate series."""

from .core import RandomStream, Series, validate_series
from .ksdist import null_cdf, null_quantile, scaled_pvalue
from .mcp import confidence_set, estimate, localize, sweep
from .scores import identity_score, nearly_optimal_score, ratio_score

__version__ = "0.1.0"

__all__ = [
    "RandomStream", "Series", "validate_series",
    "null_cdf", "null_quantile", "scaled_pvalue",
    "sweep", "estimate", "confidence_set", "localize",
    "identity_score", "ratio_score", "nearly_optimal_score",
]
