"""
Estimation of the logistic sales curve from an annual revenue series.

The growth fit alternates two blocks on the squared-error objective

    SSE(s, b0, b1) = sum_k (s / (1 + exp(b0 + b1*t_k)) - y_k)^2,  t_k <= t_max

* scale step: with (b0, b1) fixed the objective is quadratic in ``s`` and the
  minimiser is ``sum(w*y) / sum(w*w)`` with ``w = 1/(1+exp(b0+b1*t))``,
  projected onto ``s > max(y)``;
* shape step: with ``s`` fixed, (b0, b1) start from ordinary least squares on
  ``z = log(s'/y - 1)``, ``s' = max(s, 1.001*max(y))``, and are then refined by damped Gauss-Newton on the
  same objective. A refinement is only kept if it lowers SSE.

Between the blocks a joint Gauss-Newton step on all three parameters is
tried and kept only if it lowers SSE. None of the steps can increase SSE,
so the recorded history is monotone.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .curve import CurveParams, QuadParams, level_crossing_time, logistic_growth
from .errors import DegenerateSeries, FitError, NotEnoughPoints, SingularSystem
from .ingest import AssetRecord, RunConfig

log = logging.getLogger(__name__)

# the logit transform needs headroom above the data; the iterate itself only
# needs to stay strictly above the largest observation
TRANSFORM_HEADROOM = 1.001
S_FLOOR_FACTOR = 1.0 + 1e-9
S_INIT_FACTOR = 1.05
FRACTION_CLIP = 1e-6
MIN_POINTS = 3


@dataclass
class FitResult:
    params: CurveParams
    sse: float
    n_iterations: int
    converged: bool
    t_max: int
    saturated: bool = False
    saturation_year: Optional[int] = None
    first_sales_year: Optional[int] = None
    # SSE after every half-step, starting from the initial guess
    sse_history: List[float] = field(default_factory=list, repr=False)

    @property
    def ramp_rate(self) -> float:
        return self.params.ramp_rate


def _as_arrays(sales) -> Tuple[np.ndarray, np.ndarray]:
    if len(sales) == 0:
        raise NotEnoughPoints("empty series")
    t, y = (np.asarray(col, dtype=float) for col in zip(*sales))
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
        raise FitError("series contains non-finite values")
    order = np.argsort(t, kind="stable")
    return t[order], y[order]


def growth_window(t, y) -> Tuple[np.ndarray, np.ndarray, float]:
    """Points up to and including the first occurrence of the maximum."""
    k = int(np.argmax(y))  # earliest maximum wins
    return t[: k + 1], y[: k + 1], float(t[k])


def sse_of(s, beta0, beta1, t, y) -> float:
    r = logistic_growth(s, beta0, beta1, t) - y
    return float(r @ r)


def _scale_step(beta0, beta1, t, y, s_min):
    w = logistic_growth(1.0, beta0, beta1, t)
    ww = float(w @ w)
    if ww <= 0.0:
        return s_min
    return max(float(w @ y) / ww, s_min)


def _logit_ols(s, t, y):
    s = max(s, TRANSFORM_HEADROOM * float(y.max()))
    frac = np.clip(y / s, FRACTION_CLIP, 1.0 - FRACTION_CLIP)
    z = np.log(1.0 / frac - 1.0)
    A = np.column_stack([np.ones_like(t), t])
    coef, *_ = np.linalg.lstsq(A, z, rcond=None)
    return float(coef[0]), float(coef[1])


def _refine_shape(s, beta0, beta1, t, y, max_steps=100):
    """Levenberg-Marquardt on (beta0, beta1) with ``s`` held fixed."""
    beta = np.array([beta0, beta1])
    cur = sse_of(s, *beta, t, y)
    mu = 1e-3
    for _ in range(max_steps):
        sig = logistic_growth(1.0, beta[0], beta[1], t)
        r = s * sig - y
        d = -s * sig * (1.0 - sig)
        J = np.column_stack([d, d * t])
        g = J.T @ r
        H = J.T @ J
        improved = False
        for _ in range(30):
            try:
                step = np.linalg.solve(H + mu * np.diag(np.diag(H) + 1e-12), -g)
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            trial = beta + step
            new = sse_of(s, *trial, t, y)
            if new < cur:
                rel = (cur - new) / max(cur, 1e-300)
                beta, cur = trial, new
                mu = max(mu / 3.0, 1e-12)
                improved = True
                break
            mu *= 10.0
        if not improved or rel < 1e-15 or np.max(np.abs(step)) < 1e-13:
            break
    return float(beta[0]), float(beta[1]), cur


def _shape_step(s, beta0, beta1, t, y):
    cur = sse_of(s, beta0, beta1, t, y)
    # the transform fit is a candidate starting point, never accepted blindly
    b0, b1 = _logit_ols(s, t, y)
    if b1 < 0 and sse_of(s, b0, b1, t, y) < cur:
        beta0, beta1 = b0, b1
    b0, b1, new = _refine_shape(s, beta0, beta1, t, y)
    if new <= cur and b1 < 0:
        return b0, b1
    return beta0, beta1


def _joint_step(s, beta0, beta1, t, y, s_min, cur):
    """One damped Gauss-Newton step on all three parameters.

    Plain block alternation crawls when ``s`` and ``beta0`` are strongly
    coupled; this step is kept only when it lowers SSE and stays feasible.
    """
    sig = logistic_growth(1.0, beta0, beta1, t)
    r = s * sig - y
    d = -s * sig * (1.0 - sig)
    J = np.column_stack([sig, d, d * t])
    g = J.T @ r
    H = J.T @ J
    theta = np.array([s, beta0, beta1])
    for mu in (1e-6, 1e-4, 1e-2, 1.0):
        try:
            step = np.linalg.solve(H + mu * np.diag(np.diag(H) + 1e-12), -g)
        except np.linalg.LinAlgError:
            continue
        trial = theta + step
        if trial[0] < s_min or not trial[2] < 0:
            continue
        new = sse_of(*trial, t, y)
        if new < cur:
            return float(trial[0]), float(trial[1]), float(trial[2])
    return s, beta0, beta1


def fit_growth(sales: Sequence[Tuple[float, float]], tolerance: float = 1e-6,
               max_iter: int = 200) -> FitResult:
    """Fit ``(s, beta0, beta1)`` to the growth phase of ``sales``.

    ``sales`` is a sequence of ``(t, y)``; points after the first maximum of
    ``y`` are ignored. Non-convergence is reported through
    ``FitResult.converged`` rather than an exception.
    """
    t_all, y_all = _as_arrays(sales)
    if len(t_all) < MIN_POINTS:
        raise NotEnoughPoints(f"need at least {MIN_POINTS} points, got {len(t_all)}")
    if np.any(y_all < 0):
        raise FitError("negative sales value")
    if np.ptp(y_all) == 0.0:
        raise DegenerateSeries("all sales values equal; slope is unidentifiable")
    t, y, t_max = growth_window(t_all, y_all)
    if len(t) < MIN_POINTS:
        raise NotEnoughPoints(
            f"only {len(t)} point(s) up to the sales peak at t={t_max:g}; "
            f"need {MIN_POINTS}")
    if np.ptp(y) == 0.0:
        raise DegenerateSeries("all sales values equal; slope is unidentifiable")

    y_max = float(y.max())
    s_min = S_FLOOR_FACTOR * y_max
    s = S_INIT_FACTOR * y_max
    beta0, beta1 = _logit_ols(s, t, y)
    if not beta1 < 0:
        # flat-ish start: fall back to a gentle rise through the data
        beta0, beta1 = 0.0, -1.0 / max(np.ptp(t), 1.0)
    history = [sse_of(s, beta0, beta1, t, y)]

    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        beta0, beta1 = _shape_step(s, beta0, beta1, t, y)
        history.append(sse_of(s, beta0, beta1, t, y))
        s_new, beta0, beta1 = _joint_step(s, beta0, beta1, t, y, s_min, history[-1])
        history.append(sse_of(s_new, beta0, beta1, t, y))
        s_new = _scale_step(beta0, beta1, t, y, s_min)
        history.append(sse_of(s_new, beta0, beta1, t, y))
        change = abs(s_new - s) / s
        s = s_new
        if change < tolerance:
            converged = True
            break

    if not converged:
        log.warning("growth fit did not converge in %d iterations", max_iter)
    params = CurveParams(s=s, beta0=beta0, beta1=beta1)
    return FitResult(params=params, sse=history[-1], n_iterations=n_iter,
                     converged=converged, t_max=int(round(t_max)), sse_history=history)


def fit_quad(sales: Sequence[Tuple[float, float]]) -> QuadParams:
    """Least-squares quadratic ``a + b t + c t^2`` through all points."""
    t, y = _as_arrays(sales)
    if len(t) < 3:
        raise NotEnoughPoints(f"need at least 3 points, got {len(t)}")
    if len(np.unique(t)) < 3:
        raise SingularSystem("fewer than three distinct t values")
    # centre and scale t so the normal equations stay well conditioned
    mid = t.mean()
    half = max(np.ptp(t) / 2.0, 1.0)
    u = (t - mid) / half
    V = np.column_stack([np.ones_like(u), u, u * u])
    G = V.T @ V
    if np.linalg.cond(G) > 1e12:
        raise SingularSystem("normal equations are singular")
    a, b, c = np.linalg.solve(G, V.T @ y)
    # back to the original t
    c0 = c / half**2
    b0 = b / half - 2.0 * c0 * mid
    a0 = a - b * mid / half + c0 * mid**2
    return QuadParams(float(a0), float(b0), float(c0))


def saturation_offset(params: CurveParams, level_fraction: float) -> int:
    """First integer offset at which the growth branch reaches the level."""
    return max(0, math.ceil(level_crossing_time(params, level_fraction) - 1e-9))


def detect_saturation(sales, fit: FitResult, level_fraction: float = 0.95,
                      growth_threshold: float = 0.05, first_year: int = 0):
    """Decide whether the series has plateaued.

    Saturated means the fitted growth curve is at or above ``level_fraction``
    of ``s`` at the last observation and the last two year-over-year changes
    are both below ``growth_threshold``. Returns ``(saturated, year)``.
    """
    t, y = _as_arrays(sales)
    p = fit.params
    at_last = float(logistic_growth(p.s, p.beta0, p.beta1, t[-1]))
    if at_last < level_fraction * p.s or len(y) < 3:
        return False, None
    prev, cur = y[-3:-1], y[-2:]
    with np.errstate(divide="ignore", invalid="ignore"):
        growth = np.where(prev > 0, cur / prev - 1.0, np.inf)
    if not np.all(growth < growth_threshold):
        return False, None
    offset = saturation_offset(p, level_fraction)
    return True, int(first_year + min(offset, int(t[-1])))


def _reflected_fit(t, y, config):
    """Best-effort fit for a series that peaks too early for a growth fit.

    The curve is symmetric, so the decline observed after the peak is fitted
    as growth in reversed time about the peak.
    """
    k = int(np.argmax(y))
    t_peak = t[k]
    tail_t, tail_y = t[k:], y[k:]
    mirrored = list(zip(2.0 * t_peak - tail_t[::-1], tail_y[::-1]))
    res = fit_growth(mirrored, config.saturation_fit_tolerance, config.max_fit_iterations)
    res.t_max = int(round(t_peak))
    return res


def fit_full(asset: AssetRecord, config: RunConfig = RunConfig(),
             force_unsaturated: bool = False) -> FitResult:
    """Growth fit plus saturation check for one asset.

    Saturated assets get ``t_s`` pinned at the detected saturation offset;
    otherwise ``t_s`` stays unset for the scenario module to enumerate.
    """
    sales = asset.offsets()
    t, y = _as_arrays(sales)
    first = asset.first_year
    try:
        res = fit_growth(sales, config.saturation_fit_tolerance, config.max_fit_iterations)
    except NotEnoughPoints:
        if force_unsaturated or len(t) < MIN_POINTS or len(t) - int(np.argmax(y)) < MIN_POINTS:
            raise
        log.info("%s: peak at first observations, fitting the decline instead",
                 asset.asset_id)
        res = _reflected_fit(t, y, config)
        res.converged = False
        res.first_sales_year = first
        res.saturated = True
        res.saturation_year = first + res.t_max
        res.params = res.params.with_ts(float(res.t_max))
        return res

    res.first_sales_year = first
    if force_unsaturated:
        return res
    saturated, year = detect_saturation(
        sales, res, config.saturation_level_fraction,
        config.saturation_growth_threshold, first_year=first)
    res.saturated = saturated
    res.saturation_year = year
    if saturated:
        res.params = res.params.with_ts(float(year - first))
    return res


def fitted_saturation_year(fit: FitResult, level_fraction: float) -> int:
    """Calendar year the fitted growth branch first reaches the level."""
    return int(fit.first_sales_year + saturation_offset(fit.params, level_fraction))


# ---------------------------------------------------------------------------
# fits.json
# ---------------------------------------------------------------------------

def fit_to_dict(asset_id: str, fit: FitResult, asset: Optional[AssetRecord] = None) -> dict:
    p = fit.params
    out = {
        "asset_id": asset_id,
        "s": p.s,
        "beta0": p.beta0,
        "beta1": p.beta1,
        "t_s": p.t_s,
        "saturated": fit.saturated,
        "sse": fit.sse,
        "converged": fit.converged,
        "first_sales_year": fit.first_sales_year,
        "saturation_year": fit.saturation_year,
        "n_iterations": fit.n_iterations,
        "t_max": fit.t_max,
    }
    if asset is not None:
        out["asset"] = {
            "display_name": asset.display_name,
            "launch_year": asset.launch_year,
            "ip_expiry_year": asset.ip_expiry_year,
            "category": asset.category.value,
            "n_phase3_trials": asset.n_phase3_trials,
            "n_conditions": asset.n_conditions,
            "sales": [[year, rev] for year, rev in asset.sales],
        }
    return out


def fit_from_dict(obj: dict) -> FitResult:
    params = CurveParams(obj["s"], obj["beta0"], obj["beta1"], obj.get("t_s"))
    return FitResult(
        params=params,
        sse=obj["sse"],
        n_iterations=obj.get("n_iterations", 0),
        converged=obj["converged"],
        t_max=obj.get("t_max", 0),
        saturated=obj["saturated"],
        saturation_year=obj.get("saturation_year"),
        first_sales_year=obj["first_sales_year"],
    )


def asset_from_dict(asset_id: str, obj: dict) -> AssetRecord:
    from .ingest import Category

    a = obj["asset"]
    return AssetRecord(
        asset_id=asset_id,
        display_name=a["display_name"],
        launch_year=a["launch_year"],
        ip_expiry_year=a["ip_expiry_year"],
        category=Category.parse(a["category"]),
        n_phase3_trials=a["n_phase3_trials"],
        n_conditions=a["n_conditions"],
        sales=tuple((int(yr), float(v)) for yr, v in a["sales"]),
    )


def dump_fits(entries) -> str:
    """``entries``: iterable of ``(asset, FitResult)``; output sorted by asset_id."""
    rows = [fit_to_dict(a.asset_id, f, a) for a, f in sorted(entries, key=lambda e: e[0].asset_id)]
    return json.dumps(rows, indent=2) + "\n"


def load_fits(text: str):
    """Inverse of :func:`dump_fits`: list of ``(AssetRecord, FitResult)``."""
    rows = json.loads(text)
    return [(asset_from_dict(r["asset_id"], r), fit_from_dict(r)) for r in rows]
