"""Discounted cash flows and Monte Carlo valuation of a post-revenue portfolio."""

import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptyPortfolio
from .ingest import RunConfig
from .scenario import ScenarioSet, substream


@dataclass
class ValuationResult:
    samples: np.ndarray
    mean: float
    ci_low: float
    ci_high: float
    n_sims: int
    seed: int
    per_asset_expected_npv: Dict[str, float] = field(default_factory=dict)
    valuation_year: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "mean_musd": self.mean,
            "ci_low_musd": self.ci_low,
            "ci_high_musd": self.ci_high,
            "n_sims": self.n_sims,
            "seed": self.seed,
            "per_asset_expected_npv": dict(sorted(self.per_asset_expected_npv.items())),
            "valuation_year": self.valuation_year,
        }


@dataclass(frozen=True)
class BalanceSheet:
    market_cap: float
    current_assets: float
    cash_on_hand: float
    total_liabilities: float

    def __post_init__(self):
        if not self.market_cap > 0:
            raise ValueError("market_cap must be positive")
        for name in ("current_assets", "cash_on_hand", "total_liabilities"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def npv(cash_flows: Iterable[Tuple[int, float]], r: float) -> float:
    """Present value of ``(t, amount)`` flows received at the end of year ``t``."""
    if not r > -1:
        raise ValueError(f"discount rate must exceed -1, got {r}")
    terms = []
    for t, x in cash_flows:
        if t < 1:
            raise ValueError(f"flows are indexed from t=1, got t={t}")
        terms.append(x / (1.0 + r) ** t)
    return math.fsum(terms)


def path_npv(path: Sequence[Tuple[int, float]], valuation_year: int, r: float) -> float:
    """NPV of a forecast path; years at or before the valuation year are sunk."""
    return npv(((year - valuation_year, v) for year, v in path if year > valuation_year), r)


def simulate_portfolio(scenario_sets: Sequence[ScenarioSet], config: RunConfig = RunConfig(),
                       rate: Optional[float] = None, n_sims: Optional[int] = None,
                       seed: Optional[int] = None) -> ValuationResult:
    """Monte Carlo distribution of the portfolio NPV.

    Each replicate picks one scenario per asset according to the scenario
    probabilities and sums the NPVs of the chosen forecast paths. Replicate
    ``j`` of asset ``a`` uses element ``j`` of the uniform stream keyed by
    ``(seed, a)``, so results do not depend on asset order or on how
    replicates are split across workers.

    ``rate``, ``n_sims`` and ``seed`` override the config values.
    """
    if not scenario_sets:
        raise EmptyPortfolio("no assets to value")
    r = config.discount_rate if rate is None else rate
    n = config.n_sims if n_sims is None else int(n_sims)
    seed = config.seed if seed is None else int(seed)
    if n < 1:
        raise ValueError("n_sims must be positive")

    valuation_year = max(ss.last_observed_year for ss in scenario_sets)
    totals = np.zeros(n)
    per_asset = {}
    for ss in sorted(scenario_sets, key=lambda s: s.asset_id):
        values = np.array([path_npv(sc.path, valuation_year, r) for sc in ss.scenarios])
        probs = ss.probabilities
        cdf = np.cumsum(probs)
        cdf /= cdf[-1]
        per_asset[ss.asset_id] = math.fsum(probs * values)
        if len(values) == 1:
            totals += values[0]
            continue
        u = substream(seed, ss.asset_id).random(n)
        idx = np.minimum(np.searchsorted(cdf, u, side="right"), len(values) - 1)
        totals += values[idx]

    lo, hi = np.percentile(totals, [2.5, 97.5])
    # constant samples: report the value itself, not a rounded average
    mean = float(totals[0]) if np.ptp(totals) == 0 else float(totals.mean())
    return ValuationResult(
        samples=totals,
        mean=mean,
        ci_low=float(lo),
        ci_high=float(hi),
        n_sims=n,
        seed=seed,
        per_asset_expected_npv=per_asset,
        valuation_year=valuation_year,
    )


def implied_prerevenue(v: BalanceSheet, post_revenue_npv: float) -> float:
    """Pre-revenue portfolio value implied by the market-cap decomposition."""
    return (v.market_cap - v.current_assets - post_revenue_npv
            - v.cash_on_hand + v.total_liabilities)


def dump_valuation(res: ValuationResult, prerevenue: Optional[float] = None) -> str:
    out = res.to_dict()
    if prerevenue is not None:
        out["implied_prerevenue_musd"] = prerevenue
    return json.dumps(out, indent=2) + "\n"


def samples_csv(res: ValuationResult) -> str:
    lines = ["replicate,npv_musd"]
    lines += [f"{j},{v!r}" for j, v in enumerate(res.samples.tolist())]
    return "\n".join(lines) + "\n"
