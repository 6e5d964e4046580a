"""Structural equation estimation: RAM layout, ML fitting and fit indices."""

from .estimate import (
    CORRELATION_BANNER,
    EstimateOptions,
    FitResult,
    NestedComparison,
    ParamEstimate,
    compare_nested,
    estimate,
    fit_model,
    information_comparison,
    start_values,
)
from .indices import FitIndices, Rmsea, fit_indices
from .ml import Discrepancy, ml_fit_value
from .ram import RamSystem, build_ram, implied_cov

__all__ = [
    "CORRELATION_BANNER", "Discrepancy", "EstimateOptions", "FitIndices", "FitResult",
    "NestedComparison", "ParamEstimate", "RamSystem", "Rmsea", "build_ram", "compare_nested",
    "estimate", "fit_indices", "fit_model", "implied_cov", "information_comparison",
    "ml_fit_value", "start_values",
]
