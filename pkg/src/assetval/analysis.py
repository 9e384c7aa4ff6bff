"""
Holdout validation and post-hoc regressions.

Validation truncates a saturated asset's history at the year sales first
reach a fraction of their peak, pretends the asset has not saturated, and
compares the scenario-weighted forecast through the last observed year with
what actually sold.

The post-hoc part is plain OLS with intercept: fit residuals against asset
features, and the fitted slope against indication category.
"""

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import special

from .errors import FractionNeverReached, InsufficientData, NotSaturated, SingularDesign
from .fit import FitResult, fit_full, fitted_saturation_year
from .ingest import AssetRecord, Category, RunConfig
from .scenario import build_scenarios

FRACTIONS = (0.25, 0.5, 0.75, 1.0)


@dataclass
class ValidationRow:
    asset_id: str
    fraction: float
    predicted_total: float
    actual_total: float

    @property
    def difference(self) -> float:
        return self.predicted_total - self.actual_total

    @property
    def pct_difference(self) -> float:
        if self.actual_total > 0:
            return 100.0 * self.difference / self.actual_total
        return math.nan


@dataclass
class RegressionTerm:
    name: str
    coefficient: float
    standard_error: float
    t_statistic: float
    p_value: float


@dataclass
class RegressionReport:
    outcome_name: str
    terms: List[RegressionTerm]
    n_observations: int
    residuals: np.ndarray = field(repr=False)
    qq_points: List[Tuple[float, float]] = field(repr=False, default_factory=list)
    name: str = ""

    @property
    def dof(self) -> int:
        return self.n_observations - len(self.terms)

    def term(self, name: str) -> RegressionTerm:
        for t in self.terms:
            if t.name == name:
                return t
        raise KeyError(name)


# ---------------------------------------------------------------------------
# holdout validation
# ---------------------------------------------------------------------------

def truncate_at_fraction(asset: AssetRecord, fraction: float,
                         config: RunConfig = RunConfig(), fit: FitResult = None,
                         peak: float = None) -> AssetRecord:
    """History up to and including the first year revenue reaches ``fraction`` of peak.

    ``peak`` defaults to the largest observed revenue; pass the full-history
    peak when re-truncating a prefix. ``fraction=1.0`` cuts at the detected
    saturation year instead.
    """
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    if fit is None:
        fit = fit_full(asset, config)
    if not fit.saturated:
        raise NotSaturated(f"{asset.asset_id}: not saturated on the full history")
    if fraction == 1.0:
        cut = fit.saturation_year
    else:
        if peak is None:
            peak = max(asset.revenues)
        hits = [year for year, v in asset.sales if v >= fraction * peak]
        if peak <= 0 or not hits:
            raise FractionNeverReached(f"{asset.asset_id}: never reaches {fraction:g} of peak")
        cut = hits[0]
    return asset.with_sales([(y, v) for y, v in asset.sales if y <= cut])


def validate_asset(asset: AssetRecord, fraction: float,
                   config: RunConfig = RunConfig(), fit: FitResult = None) -> ValidationRow:
    """Backtest one saturated asset on the history up to ``fraction`` of peak."""
    train = truncate_at_fraction(asset, fraction, config, fit)
    refit = fit_full(train, config, force_unsaturated=True)
    scen = build_scenarios(refit, train, config)
    horizon = asset.last_year
    predicted = math.fsum(
        sc.probability * (sum(train.revenues) + sum(v for y, v in sc.path if y <= horizon))
        for sc in scen.scenarios)
    return ValidationRow(asset.asset_id, fraction, predicted, math.fsum(asset.revenues))


def portfolio_row(rows: Sequence[ValidationRow], fraction: float) -> ValidationRow:
    picked = [r for r in rows if r.fraction == fraction and r.asset_id != "portfolio"]
    return ValidationRow(
        "portfolio", fraction,
        math.fsum(r.predicted_total for r in picked),
        math.fsum(r.actual_total for r in picked))


def validate_portfolio(assets: Sequence[AssetRecord], fractions=FRACTIONS,
                       config: RunConfig = RunConfig()):
    """Per-asset rows for every saturated asset plus one portfolio row per fraction.

    Assets that are not saturated on their full history, or whose holdout
    prefix is too short to fit, are skipped and reported by id.
    """
    from .errors import AssetValError

    rows, skipped = [], {}
    for asset in sorted(assets, key=lambda a: a.asset_id):
        try:
            fit = fit_full(asset, config)
        except AssetValError as exc:
            skipped[asset.asset_id] = str(exc)
            continue
        if not fit.saturated:
            skipped[asset.asset_id] = "not saturated"
            continue
        asset_rows = []
        try:
            for frac in fractions:
                asset_rows.append(validate_asset(asset, frac, config, fit))
        except AssetValError as exc:
            skipped[asset.asset_id] = str(exc)
            continue
        rows.extend(asset_rows)
    rows.extend(portfolio_row(rows, frac) for frac in fractions)
    return rows, skipped


def validation_csv(rows: Sequence[ValidationRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["asset_id", "fraction", "predicted_busd", "actual_busd", "diff_busd", "pct_diff"])
    for r in rows:
        w.writerow([r.asset_id, f"{r.fraction:g}", f"{r.predicted_total / 1000:.3f}",
                    f"{r.actual_total / 1000:.3f}", f"{r.difference / 1000:.3f}",
                    f"{r.pct_difference:.2f}"])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# OLS
# ---------------------------------------------------------------------------

def t_sf(t, dof):
    """Upper tail of Student's t via the regularized incomplete beta function."""
    t = np.asarray(t, dtype=float)
    x = dof / (dof + t * t)
    tail = 0.5 * special.betainc(0.5 * dof, 0.5, x)
    return np.where(t >= 0, tail, 1.0 - tail)


def two_sided_p(t, dof):
    t = np.abs(np.asarray(t, dtype=float))
    return np.clip(special.betainc(0.5 * dof, 0.5, dof / (dof + t * t)), 0.0, 1.0)


def qq_points(residuals) -> List[Tuple[float, float]]:
    """Sorted standardized residuals against normal quantiles at (i - 0.5)/n."""
    r = np.sort(np.asarray(residuals, dtype=float))
    n = len(r)
    sd = r.std(ddof=1) if n > 1 else 0.0
    z = (r - r.mean()) / sd if sd > 0 else np.zeros(n)
    theo = special.ndtri((np.arange(1, n + 1) - 0.5) / n)
    return [(float(a), float(b)) for a, b in zip(theo, z)]


def ols(y, X, names=None, outcome_name="y", add_intercept=True) -> RegressionReport:
    """Ordinary least squares with t-based two-sided p-values.

    ``X`` holds the feature columns; an intercept column is prepended unless
    ``add_intercept`` is false.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = len(y)
    if X.shape[0] != n:
        raise ValueError("X and y have different numbers of rows")
    if names is None:
        names = [f"x{j}" for j in range(X.shape[1])]
    if add_intercept:
        X = np.column_stack([np.ones(n), X])
        names = ["intercept", *names]
    p = X.shape[1]
    if n <= p:
        raise InsufficientData(f"{n} observations for {p} coefficients")

    # QR keeps the solve stable; R also gives (X'X)^-1 = R^-1 R^-T
    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise SingularDesign("design columns are collinear")
    if add_intercept:
        # slopes from centred data so a constant outcome gives exact zeros
        xm, ym = X[:, 1:].mean(axis=0), y.mean()
        Qc, Rc = np.linalg.qr(X[:, 1:] - xm)
        slopes = np.linalg.solve(Rc, Qc.T @ (y - ym))
        beta = np.concatenate([[ym - xm @ slopes], slopes])
        resid = (y - ym) - (X[:, 1:] - xm) @ slopes
    else:
        beta = np.linalg.solve(R, Q.T @ y)
        resid = y - X @ beta
    dof = n - p
    sigma2 = float(resid @ resid) / dof
    Rinv = np.linalg.solve(R, np.eye(p))
    se = np.sqrt(sigma2 * np.sum(Rinv * Rinv, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        tstat = np.where(se > 0, beta / se, np.where(beta == 0, 0.0, np.inf))
    pvals = two_sided_p(tstat, dof)
    terms = [RegressionTerm(nm, float(b), float(s), float(t), float(pv))
             for nm, b, s, t, pv in zip(names, beta, se, tstat, pvals)]
    return RegressionReport(outcome_name, terms, n, resid, qq_points(resid))


# ---------------------------------------------------------------------------
# post-hoc regressions
# ---------------------------------------------------------------------------

def category_dummies(assets: Sequence[AssetRecord]) -> np.ndarray:
    """Cancer and Immune indicators; Infectious and Other form the reference."""
    return np.array([[a.category is Category.CANCER, a.category is Category.IMMUNE]
                     for a in assets], dtype=float)


def observed_saturation_year(asset: AssetRecord, level_fraction: float) -> int:
    peak = max(asset.revenues)
    return next(year for year, v in asset.sales if v >= level_fraction * peak)


def posthoc_features(assets: Sequence[AssetRecord], fits: Sequence[FitResult],
                     level_fraction: float = 0.95) -> Dict[str, RegressionReport]:
    """Feature regressions on fit residuals, and slope-by-category regressions.

    Residual saturation value is the observed peak minus fitted ``s``;
    residual saturation year is the observed minus the fitted year of
    reaching ``level_fraction`` of the plateau.
    """
    if len(assets) != len(fits):
        raise ValueError("assets and fits differ in length")
    resid_value = np.array([max(a.revenues) - f.params.s for a, f in zip(assets, fits)])
    resid_year = np.array([
        observed_saturation_year(a, level_fraction) - fitted_saturation_year(f, level_fraction)
        for a, f in zip(assets, fits)], dtype=float)
    trials = np.array([a.n_phase3_trials for a in assets], dtype=float)
    conds = np.array([a.n_conditions for a in assets], dtype=float)
    cats = category_dummies(assets)
    beta1 = np.array([f.params.beta1 for f in fits])

    reports = {}
    for outcome, y in (("residual_saturation_value", resid_value),
                       ("residual_saturation_year", resid_year)):
        for label, X, names in (("n_phase3_trials", trials, ["n_phase3_trials"]),
                                ("category", cats, ["cancer", "immune"]),
                                ("n_conditions", conds, ["n_conditions"])):
            key = f"{outcome}~{label}"
            reports[key] = ols(y, X, names, outcome_name=outcome)
            reports[key].name = key
    for outcome, y in (("beta1", beta1), ("ramp_rate", -beta1)):
        key = f"{outcome}~category"
        reports[key] = ols(y, cats, ["cancer", "immune"], outcome_name=outcome)
        reports[key].name = key
    return reports


def posthoc_csv(reports: Dict[str, RegressionReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["regression", "term", "coefficient", "std_err", "t_stat", "p_value"])
    for key in sorted(reports):
        for t in reports[key].terms:
            w.writerow([key, t.name, repr(t.coefficient), repr(t.standard_error),
                        repr(t.t_statistic), repr(t.p_value)])
    return buf.getvalue()


def qq_csv(report: RegressionReport) -> str:
    lines = ["theoretical,sample"]
    lines += [f"{a!r},{b!r}" for a, b in report.qq_points]
    return "\n".join(lines) + "\n"
