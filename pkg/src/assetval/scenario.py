"""
Saturation-timing scenarios for assets that have not plateaued yet.

The mid-cycle year is uncertain between the last observed year and IP expiry.
A lag measured from one end of that window follows an exponential law
truncated to the window, and each candidate year gets the probability mass
of its unit interval. Every candidate year comes with its own forecast path;
the expected cumulative sales are the probability-weighted average.
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .curve import eval_curve
from .errors import AlreadySaturated, InvalidBound, NoFutureWindow
from .fit import FitResult
from .ingest import AssetRecord, Orientation, RunConfig

log = logging.getLogger(__name__)


@dataclass
class Scenario:
    t_s_year: int
    probability: float
    path: List[Tuple[int, float]] = field(default_factory=list)
    cumulative_sales: float = 0.0


@dataclass
class ScenarioSet:
    asset_id: str
    scenarios: List[Scenario]
    expected_cumulative: float
    last_observed_year: Optional[int] = None

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([sc.probability for sc in self.scenarios])


# ---------------------------------------------------------------------------
# truncated exponential
# ---------------------------------------------------------------------------

def trunc_exp_ppf(u, rate: float, upper: float):
    """Inverse CDF of Exp(rate) truncated to [0, upper]."""
    if not upper > 0:
        raise InvalidBound(f"truncation bound must be positive, got {upper}")
    if not rate > 0:
        raise InvalidBound(f"rate must be positive, got {rate}")
    u = np.asarray(u, dtype=float)
    # -expm1(-x) = 1 - exp(-x) without cancellation for small rate*upper
    mass = -np.expm1(-rate * upper)
    out = -np.log1p(-u * mass) / rate
    out = np.minimum(out, upper)
    return float(out) if out.ndim == 0 else out


def trunc_exp_cdf(x, rate: float, upper: float):
    x = np.clip(np.asarray(x, dtype=float), 0.0, upper)
    out = np.expm1(-rate * x) / np.expm1(-rate * upper)
    return float(out) if out.ndim == 0 else out


def trunc_exp_mean(rate: float, upper: float) -> float:
    return 1.0 / rate - upper * math.exp(-rate * upper) / -math.expm1(-rate * upper)


def sample_trunc_exp(rng: np.random.Generator, rate: float, upper: float, size=None):
    """Draw from Exp(rate) truncated to [0, upper] by inverse-CDF sampling."""
    if not upper > 0:
        raise InvalidBound(f"truncation bound must be positive, got {upper}")
    return trunc_exp_ppf(rng.random(size), rate, upper)


def substream(seed: int, *keys) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``, stable across runs and platforms."""
    words = []
    for key in keys:
        digest = hashlib.sha256(str(key).encode("utf-8")).digest()
        words.append(int.from_bytes(digest[:8], "little"))
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(words))
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# scenario construction
# ---------------------------------------------------------------------------

def _check_window(fit: FitResult, asset: AssetRecord):
    if fit.saturated:
        raise AlreadySaturated(f"{asset.asset_id}: already saturated in {fit.saturation_year}")
    if asset.ip_expiry_year <= asset.last_year:
        raise NoFutureWindow(
            f"{asset.asset_id}: IP expiry {asset.ip_expiry_year} is not after "
            f"the last observed year {asset.last_year}")


def scenario_distribution(fit: FitResult, asset: AssetRecord,
                          config: RunConfig = RunConfig()) -> List[Tuple[int, float]]:
    """Candidate mid-cycle years with their probabilities.

    Candidates run from the last observed year to the IP expiry year
    inclusive. A candidate's probability is the truncated-exponential mass of
    its unit interval of lag, with the lag counted forward from the last
    observed year or backward from IP expiry depending on
    ``config.ts_orientation``.
    """
    _check_window(fit, asset)
    first, last = asset.last_year, asset.ip_expiry_year
    n = last - first + 1
    edges = trunc_exp_cdf(np.arange(n + 1, dtype=float), config.lambda_rate, float(n))
    mass = np.diff(edges)
    mass = mass / mass.sum()
    years = np.arange(first, last + 1)
    if config.ts_orientation is Orientation.BACKWARD_FROM_IP:
        mass = mass[::-1]
    return [(int(y), float(p)) for y, p in zip(years, mass)]


def forecast_path(fit: FitResult, t_s_year: int, asset: AssetRecord,
                  config: RunConfig = RunConfig()) -> List[Tuple[int, float]]:
    """Forecast revenue for the years after the last observation.

    The path stops before the first post-peak year whose forecast falls below
    ``forecast_floor_fraction * s``, and never runs longer than
    ``max_horizon_years``.
    """
    first = asset.first_year
    params = fit.params.with_ts(float(t_s_year - first))
    floor = config.forecast_floor_fraction * params.s
    years = np.arange(asset.last_year + 1, asset.last_year + config.max_horizon_years + 1)
    values = np.atleast_1d(eval_curve(params, years - first))
    path = []
    for year, value in zip(years, values):
        # growth-branch values may start small; only the decline is cut off
        if year > t_s_year and value < floor:
            break
        path.append((int(year), float(value)))
    return path


def expected_cumulative(scenarios: Sequence[Scenario], historical) -> float:
    """Fill in each scenario's cumulative sales and return the weighted mean."""
    past = math.fsum(v for _, v in historical)
    total = []
    for sc in scenarios:
        sc.cumulative_sales = past + math.fsum(v for _, v in sc.path)
        total.append(sc.probability * sc.cumulative_sales)
    return math.fsum(total)


def build_scenarios(fit: FitResult, asset: AssetRecord,
                    config: RunConfig = RunConfig()) -> ScenarioSet:
    if fit.saturated:
        t_s_year = fit.first_sales_year + int(round(fit.params.t_s))
        dist = [(t_s_year, 1.0)]
    else:
        try:
            dist = scenario_distribution(fit, asset, config)
        except NoFutureWindow:
            log.warning("%s: no window before IP expiry; using the last observed year",
                        asset.asset_id)
            dist = [(asset.last_year, 1.0)]
    scenarios = [Scenario(year, prob, forecast_path(fit, year, asset, config))
                 for year, prob in dist]
    expected = expected_cumulative(scenarios, asset.sales)
    return ScenarioSet(asset.asset_id, scenarios, expected, asset.last_year)


# ---------------------------------------------------------------------------
# scenarios.json
# ---------------------------------------------------------------------------

def scenarios_to_dict(ss: ScenarioSet) -> dict:
    return {
        "asset_id": ss.asset_id,
        "scenarios": [
            {
                "t_s_year": sc.t_s_year,
                "probability": sc.probability,
                "cumulative_musd": sc.cumulative_sales,
                "path": [[y, v] for y, v in sc.path],
            }
            for sc in ss.scenarios
        ],
        "expected_cumulative_musd": ss.expected_cumulative,
        "last_observed_year": ss.last_observed_year,
    }


def dump_scenarios(sets: Sequence[ScenarioSet]) -> str:
    rows = [scenarios_to_dict(ss) for ss in sorted(sets, key=lambda s: s.asset_id)]
    return json.dumps(rows, indent=2) + "\n"


def load_scenarios(text: str) -> List[ScenarioSet]:
    out = []
    for row in json.loads(text):
        scs = [Scenario(sc["t_s_year"], sc["probability"],
                        [(int(y), float(v)) for y, v in sc.get("path", [])],
                        sc["cumulative_musd"])
               for sc in row["scenarios"]]
        out.append(ScenarioSet(row["asset_id"], scs, row["expected_cumulative_musd"],
                               row.get("last_observed_year")))
    return out
