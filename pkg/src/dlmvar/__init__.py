"""Bayes linear variance learning for the locally linear dynamic linear model."""
from .adjust import (
    AdjustmentResult,
    adjust_variances,
    adjustment_operator,
    apply_adjustment,
    pseudo_inverse,
    sequential_adjustments,
    unbiased_estimates,
)
from .reference import load_table, verify_table
from .covariance import PriorStructure, build_prior_structure
from .forecast import forecast_series
from .model import (
    ObservedSeries,
    PriorSpec,
    QuadraticLayout,
    build_quadratic_vector,
    difference_series,
    example_prior,
)
from .simulate import SimConfig, calibration_run, mc_check_var_D, simulate_series

__version__ = "0.1.0"

__all__ = [
    "AdjustmentResult",
    "ObservedSeries",
    "PriorSpec",
    "PriorStructure",
    "QuadraticLayout",
    "SimConfig",
    "adjust_variances",
    "adjustment_operator",
    "apply_adjustment",
    "build_prior_structure",
    "build_quadratic_vector",
    "calibration_run",
    "difference_series",
    "example_prior",
    "forecast_series",
    "load_table",
    "mc_check_var_D",
    "pseudo_inverse",
    "sequential_adjustments",
    "simulate_series",
    "unbiased_estimates",
    "verify_table",
]
