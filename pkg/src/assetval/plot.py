"""Minimal SVG charts with fixed number formatting so output is byte-stable."""

from typing import List, Sequence, Tuple
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .curve import eval_curve
from .fit import FitResult
from .ingest import AssetRecord
from .scenario import ScenarioSet

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=64, right=16, top=36, bottom=44)


def _f(x: float) -> str:
    return f"{x:.2f}"


class _Frame:
    """Maps data coordinates onto the plotting area."""

    def __init__(self, x0, x1, y0, y1):
        self.x0, self.x1 = float(x0), float(x1) if x1 > x0 else float(x0) + 1.0
        self.y0, self.y1 = float(y0), float(y1) if y1 > y0 else float(y0) + 1.0
        self.left = MARGIN["left"]
        self.right = WIDTH - MARGIN["right"]
        self.top = MARGIN["top"]
        self.bottom = HEIGHT - MARGIN["bottom"]

    def x(self, v):
        return self.left + (v - self.x0) / (self.x1 - self.x0) * (self.right - self.left)

    def y(self, v):
        return self.bottom - (v - self.y0) / (self.y1 - self.y0) * (self.bottom - self.top)

    def points(self, xs, ys):
        return " ".join(f"{_f(self.x(a))},{_f(self.y(b))}" for a, b in zip(xs, ys))


def _axes(fr: _Frame, xlabel: str, ylabel: str, xticks, yticks) -> List[str]:
    out = [
        f'<line class="axis" x1="{_f(fr.left)}" y1="{_f(fr.bottom)}" '
        f'x2="{_f(fr.right)}" y2="{_f(fr.bottom)}" stroke="#333"/>',
        f'<line class="axis" x1="{_f(fr.left)}" y1="{_f(fr.top)}" '
        f'x2="{_f(fr.left)}" y2="{_f(fr.bottom)}" stroke="#333"/>',
    ]
    for v, label in xticks:
        out.append(f'<text x="{_f(fr.x(v))}" y="{_f(fr.bottom + 16)}" font-size="10" '
                   f'text-anchor="middle">{escape(label)}</text>')
    for v, label in yticks:
        out.append(f'<text x="{_f(fr.left - 6)}" y="{_f(fr.y(v) + 3)}" font-size="10" '
                   f'text-anchor="end">{escape(label)}</text>')
    out.append(f'<text x="{_f((fr.left + fr.right) / 2)}" y="{HEIGHT - 8}" font-size="11" '
               f'text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{_f((fr.top + fr.bottom) / 2)}" font-size="11" '
               f'text-anchor="middle" transform="rotate(-90 14 {_f((fr.top + fr.bottom) / 2)})">'
               f'{escape(ylabel)}</text>')
    return out


def _document(title: str, body: Sequence[str]) -> str:
    head = (f'<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">\n'
            f'<title>{escape(title)}</title>\n'
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>\n'
            f'<text x="{WIDTH / 2:.2f}" y="22" font-size="14" text-anchor="middle">'
            f'{escape(title)}</text>\n')
    return head + "\n".join(body) + "\n</svg>\n"


def _nice_ticks(lo, hi, n=5):
    span = hi - lo
    if span <= 0:
        return [lo]
    raw = span / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return list(np.arange(start, hi + step * 1e-9, step))


def weighted_quantile(values, weights, q):
    order = np.argsort(values, kind="stable")
    v, w = np.asarray(values, float)[order], np.asarray(weights, float)[order]
    cw = np.cumsum(w) / np.sum(w)
    idx = np.searchsorted(cw, q, side="left")
    return float(v[min(idx, len(v) - 1)])


def scenario_band(scen: ScenarioSet, years, q=(0.025, 0.975)) -> List[Tuple[int, float, float]]:
    """Probability-weighted quantiles across scenarios for each forecast year."""
    probs = scen.probabilities
    out = []
    for year in years:
        vals = [dict(sc.path).get(year, 0.0) for sc in scen.scenarios]
        out.append((int(year), weighted_quantile(vals, probs, q[0]),
                    weighted_quantile(vals, probs, q[1])))
    return out


def asset_svg(asset: AssetRecord, fit: FitResult, scen: ScenarioSet) -> str:
    """Observed sales, fitted curve, one facet per scenario and a 95% band."""
    years = asset.years
    future = sorted({y for sc in scen.scenarios for y, _ in sc.path})
    x_hi = max([years[-1], *future, *(sc.t_s_year for sc in scen.scenarios)])
    y_hi = max(max(asset.revenues), fit.params.s) * 1.08
    fr = _Frame(years[0], x_hi, 0.0, y_hi)

    xticks = [(v, f"{int(v)}") for v in _nice_ticks(years[0], x_hi, 8) if float(v).is_integer()]
    yticks = [(v, f"{v / 1000:.1f}") for v in _nice_ticks(0.0, y_hi, 5)]
    body = _axes(fr, "year", "annual sales (USD billions)", xticks, yticks)

    if future:
        band = scenario_band(scen, future)
        anchor = (years[-1], asset.revenues[-1], asset.revenues[-1])
        band = [anchor, *band]
        pts = [(y, hi) for y, _, hi in band] + [(y, lo) for y, lo, _ in reversed(band)]
        body.append(f'<polygon class="band" fill="#9ecae1" fill-opacity="0.45" stroke="none" '
                    f'points="{fr.points(*zip(*pts))}"/>')

    grid = np.linspace(0, years[-1] - years[0], max(2, 8 * (len(years) - 1) + 1))
    fitted = np.atleast_1d(eval_curve(fit.params, grid))
    body.append(f'<polyline class="fitted" fill="none" stroke="#08519c" stroke-width="1.5" '
                f'points="{fr.points(grid + years[0], fitted)}"/>')

    for sc in scen.scenarios:
        xs = [years[-1]] + [y for y, _ in sc.path]
        ys = [asset.revenues[-1]] + [v for _, v in sc.path]
        body.append(f'<g class="facet" data-ts-year="{sc.t_s_year}" '
                    f'data-probability={quoteattr(f"{sc.probability:.6f}")}>')
        body.append(f'  <line x1="{_f(fr.x(sc.t_s_year))}" y1="{_f(fr.top)}" '
                    f'x2="{_f(fr.x(sc.t_s_year))}" y2="{_f(fr.bottom)}" stroke="#999" '
                    f'stroke-dasharray="3,3"/>')
        if len(xs) > 1:
            body.append(f'  <polyline fill="none" stroke="#e6550d" stroke-width="1" '
                        f'stroke-opacity="{_f(0.3 + 0.7 * sc.probability)}" '
                        f'points="{fr.points(xs, ys)}"/>')
        body.append("</g>")

    for y, v in asset.sales:
        body.append(f'<circle class="observed" cx="{_f(fr.x(y))}" cy="{_f(fr.y(v))}" r="3" '
                    f'fill="#252525"/>')
    title = f"{asset.display_name}: expected cumulative {scen.expected_cumulative / 1000:.3f} B"
    return _document(title, body)


def histogram_svg(samples, ci_low: float, ci_high: float, mean: float, bins: int = 40) -> str:
    """Histogram of portfolio NPV samples with the mean and 95% interval marked."""
    x = np.asarray(samples, dtype=float) / 1000.0
    lo, hi = float(x.min()), float(x.max())
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(x, bins=bins, range=(lo, hi))
    fr = _Frame(lo, hi, 0.0, counts.max() * 1.1)
    xticks = [(v, f"{v:.1f}") for v in _nice_ticks(lo, hi, 6)]
    yticks = [(v, f"{int(v)}") for v in _nice_ticks(0.0, counts.max() * 1.1, 5)]
    body = _axes(fr, "portfolio NPV (USD billions)", "realizations", xticks, yticks)
    for c, a, b in zip(counts, edges[:-1], edges[1:]):
        body.append(f'<rect class="bar" x="{_f(fr.x(a))}" y="{_f(fr.y(c))}" '
                    f'width="{_f(fr.x(b) - fr.x(a))}" height="{_f(fr.y(0) - fr.y(c))}" '
                    f'fill="#6baed6" stroke="white" stroke-width="0.5"/>')
    for cls, v in (("ci", ci_low / 1000), ("ci", ci_high / 1000), ("mean", mean / 1000)):
        colour = "#de2d26" if cls == "mean" else "#636363"
        body.append(f'<line class="{cls}" x1="{_f(fr.x(v))}" y1="{_f(fr.top)}" '
                    f'x2="{_f(fr.x(v))}" y2="{_f(fr.bottom)}" stroke="{colour}" '
                    f'stroke-dasharray="4,2"/>')
    title = (f"NPV mean {mean / 1000:.3f} B, 95% interval "
             f"[{ci_low / 1000:.3f}, {ci_high / 1000:.3f}] B")
    return _document(title, body)
