"""Interpretable polynomial learning for time series."""

from .earlywarn import WarningTree, build_warning_tree, consecutive_warning_horizon, render_rules, warning_metrics
from .interpret import (
    ImportanceReport,
    feature_overlap_ratio,
    interpretability_metrics,
    perturbation_analysis,
    rank_features,
    ranking_similarity,
    sparsity_accuracy_sweep,
    value_similarity,
)
from .pipeline import FittedIPL, fit_ipl
from .polycore import (
    KernelModel,
    SparsePolynomial,
    build_centers,
    expand_to_monomials,
    kernel_matrix,
    predict_kernel,
    predict_sparse,
)
from .solver import AdmmConfig, FitReport, SolverDivergence, fit_admm, fit_pinv, fit_weights
from .timeseries import (
    LagSpec,
    RawSeries,
    SupervisedDataset,
    chronological_split,
    lag_embed,
    simulate_alarm,
    simulate_benchmark,
    simulate_prices,
)

__version__ = "0.1.0"

__all__ = [
    "AdmmConfig",
    "FitReport",
    "FittedIPL",
    "ImportanceReport",
    "KernelModel",
    "LagSpec",
    "RawSeries",
    "SolverDivergence",
    "SparsePolynomial",
    "SupervisedDataset",
    "WarningTree",
    "build_centers",
    "build_warning_tree",
    "chronological_split",
    "consecutive_warning_horizon",
    "expand_to_monomials",
    "feature_overlap_ratio",
    "fit_admm",
    "fit_ipl",
    "fit_pinv",
    "fit_weights",
    "interpretability_metrics",
    "kernel_matrix",
    "lag_embed",
    "perturbation_analysis",
    "predict_kernel",
    "predict_sparse",
    "rank_features",
    "ranking_similarity",
    "render_rules",
    "simulate_alarm",
    "simulate_benchmark",
    "simulate_prices",
    "sparsity_accuracy_sweep",
    "value_similarity",
    "warning_metrics",
]
