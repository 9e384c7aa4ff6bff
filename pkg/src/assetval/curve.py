"""Sales curve models: the quadratic life-cycle baseline and the piecewise
symmetric logistic curve.

The logistic curve rises as ``s / (1 + exp(beta0 + beta1*t))`` until the
mid-cycle time ``t_s`` and is mirrored about ``t_s`` afterwards, so decline
runs at the same rate as uptake. Growth needs ``beta1 < 0``; ``ramp_rate``
is ``-beta1``.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

EXP_CLAMP = 700.0


@dataclass(frozen=True)
class QuadParams:
    a: float
    b: float
    c: float


@dataclass(frozen=True)
class CurveParams:
    s: float
    beta0: float
    beta1: float
    t_s: Optional[float] = None

    def __post_init__(self):
        if not (np.isfinite(self.s) and self.s > 0):
            raise ValueError(f"saturation level must be positive, got {self.s}")
        if not (np.isfinite(self.beta0) and np.isfinite(self.beta1)):
            raise ValueError("beta0 and beta1 must be finite")
        if not self.beta1 < 0:
            raise ValueError(f"beta1 must be negative for a growing curve, got {self.beta1}")
        if self.t_s is not None and not np.isfinite(self.t_s):
            raise ValueError("t_s must be finite when set")

    @property
    def ramp_rate(self) -> float:
        return -self.beta1

    def with_ts(self, t_s: Optional[float]) -> "CurveParams":
        return CurveParams(self.s, self.beta0, self.beta1, t_s)


def eval_quad(p: QuadParams, t):
    t = np.asarray(t, dtype=float)
    out = p.a + p.b * t + p.c * t * t
    return float(out) if out.ndim == 0 else out


def logistic_growth(s, beta0, beta1, t):
    """Growth branch only, ignoring any mid-cycle mirror."""
    x = np.clip(beta0 + beta1 * np.asarray(t, dtype=float), -EXP_CLAMP, EXP_CLAMP)
    return s / (1.0 + np.exp(x))


def eval_curve(p: CurveParams, t):
    """Evaluate the piecewise symmetric logistic curve at ``t`` (scalar or array).

    With ``t_s`` unset the curve is the growth branch for every ``t``.
    """
    t = np.asarray(t, dtype=float)
    if p.t_s is not None:
        t = np.where(t <= p.t_s, t, 2.0 * p.t_s - t)
    out = logistic_growth(p.s, p.beta0, p.beta1, t)
    return float(out) if out.ndim == 0 else out


def curve_series(p: CurveParams, t_start: int, t_end: int) -> List[Tuple[int, float]]:
    if t_start > t_end:
        raise ValueError(f"t_start {t_start} > t_end {t_end}")
    ts = np.arange(int(t_start), int(t_end) + 1)
    values = np.atleast_1d(eval_curve(p, ts))
    return [(int(t), float(v)) for t, v in zip(ts, values)]


def level_crossing_time(p: CurveParams, fraction: float) -> float:
    """Real time at which the growth branch reaches ``fraction * s``."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    return (p.beta0 - np.log(1.0 / fraction - 1.0)) / p.ramp_rate
