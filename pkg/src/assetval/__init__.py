"""Forecasting and valuation of post-revenue pharmaceutical assets.

The pipeline is ingest -> fit -> scenario -> valuation, with holdout
validation and post-hoc regressions in :mod:`assetval.analysis`.
"""

from .curve import CurveParams, QuadParams, curve_series, eval_curve, eval_quad
from .fit import FitResult, detect_saturation, fit_full, fit_growth, fit_quad
from .ingest import AssetRecord, Category, Orientation, RunConfig, load_assets, load_config
from .scenario import (
    Scenario,
    ScenarioSet,
    build_scenarios,
    expected_cumulative,
    forecast_path,
    sample_trunc_exp,
    scenario_distribution,
)
from .valuation import BalanceSheet, ValuationResult, implied_prerevenue, npv, simulate_portfolio

__version__ = "0.1.0"
