"""Synthetic assets drawn from the logistic sales curve, for tests and demos."""

import numpy as np

from .curve import CurveParams, eval_curve
from .ingest import AssetRecord, Category


def midpoint_params(s, ramp_rate, t_s) -> CurveParams:
    """Curve whose growth inflection sits halfway between launch and ``t_s``."""
    return CurveParams(s=s, beta0=ramp_rate * t_s / 2.0, beta1=-ramp_rate, t_s=t_s)


def noisy_series(params: CurveParams, n_years: int, noise=0.0, rng=None):
    """``(t, y)`` for ``t = 0..n_years-1`` with uniform multiplicative noise of +-``noise``."""
    t = np.arange(n_years, dtype=float)
    y = np.atleast_1d(eval_curve(params, t))
    if noise:
        y = y * (1.0 + rng.uniform(-noise, noise, size=n_years))
    return list(zip(t.astype(int).tolist(), y.tolist()))


def make_asset(asset_id, params: CurveParams, n_years: int, first_year=2005,
               ip_expiry_year=None, noise=0.0, rng=None, category=Category.OTHER,
               n_phase3_trials=0, n_conditions=1, display_name=None) -> AssetRecord:
    series = noisy_series(params, n_years, noise, rng)
    if ip_expiry_year is None:
        ip_expiry_year = first_year + n_years + 5
    return AssetRecord(
        asset_id=asset_id,
        display_name=display_name or asset_id,
        launch_year=first_year,
        ip_expiry_year=ip_expiry_year,
        category=category,
        n_phase3_trials=n_phase3_trials,
        n_conditions=n_conditions,
        sales=tuple((first_year + t, y) for t, y in series),
    )
