"""Clustering and forecasting of multiple functional time series."""

__version__ = "0.1.0"

from .actuarial import AnnuityQuote, MortalitySurface, annuity_price, survival_probabilities
from .clustering import (
    ClusterAssignment,
    InitialClusteringConfig,
    adjusted_rand_index,
    cluster_mftsc,
    correct_classification_rate,
    initial_clustering,
)
from .core import FTSPanel, Grid, GridFunction, inner_product, l2_distance, make_uniform_grid
from .estimators import MFTSC, FunctionalPanelModel, PanelForecaster
from .forecasting import (
    ForecastReport,
    PredictionInterval,
    VARModel,
    bootstrap_prediction_interval,
    expanding_window_evaluation,
    fit_var,
    forecast_curves,
    forecast_scores,
    interval_score,
    rmsfe,
)
from .fpca import EigenSystem, KernelMatrix, LongRunConfig, eigen_decompose, long_run_covariance
from .panel import PanelModelFit, decompose_panel, fit_panel_model, joint_score_projection
from .simulation import generate_scenario, run_scenario, simulate_ar1
from .smoothing import RawMortalitySurface, SmoothingConfig, smooth_curve

__all__ = [
    "AnnuityQuote", "MortalitySurface", "annuity_price", "survival_probabilities",
    "ClusterAssignment", "InitialClusteringConfig", "adjusted_rand_index", "cluster_mftsc",
    "correct_classification_rate", "initial_clustering",
    "FTSPanel", "Grid", "GridFunction", "inner_product", "l2_distance", "make_uniform_grid",
    "MFTSC", "FunctionalPanelModel", "PanelForecaster",
    "ForecastReport", "PredictionInterval", "VARModel", "bootstrap_prediction_interval",
    "expanding_window_evaluation", "fit_var", "forecast_curves", "forecast_scores",
    "interval_score", "rmsfe",
    "EigenSystem", "KernelMatrix", "LongRunConfig", "eigen_decompose", "long_run_covariance",
    "PanelModelFit", "decompose_panel", "fit_panel_model", "joint_score_projection",
    "generate_scenario", "run_scenario", "simulate_ar1",
    "RawMortalitySurface", "SmoothingConfig", "smooth_curve",
]
