import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from assetval import errors
from assetval.curve import CurveParams, eval_curve
from assetval.fit import (
    detect_saturation,
    dump_fits,
    fit_full,
    fit_growth,
    fit_quad,
    load_fits,
    sse_of,
)
from assetval.ingest import AssetRecord, Category, RunConfig
from assetval.synthetic import make_asset, midpoint_params, noisy_series

TRUE = CurveParams(1000.0, 3.0, -1.0)


def _series(p, n, noise=0.0, rng=None):
    return noisy_series(p, n, noise, rng)


class TestFitGrowth:
    def test_noiseless_recovery(self):
        res = fit_growth(_series(TRUE, 7))
        assert res.converged
        for got, want in zip((res.params.s, res.params.beta0, res.params.beta1), (1000, 3, -1)):
            assert got == pytest.approx(want, rel=1e-4)

    def test_noisy_recovery_rate(self):
        rng = np.random.default_rng(7)
        hits = 0
        for _ in range(100):
            res = fit_growth(_series(TRUE, 7, 0.01, rng))
            hits += abs(res.params.s / 1000 - 1) <= 0.02
        assert hits >= 95

    def test_two_points(self):
        with pytest.raises(errors.NotEnoughPoints):
            fit_growth([(0, 1.0), (1, 2.0)])

    def test_all_equal(self):
        with pytest.raises(errors.DegenerateSeries):
            fit_growth([(0, 5.0), (1, 5.0), (2, 5.0)])

    def test_points_after_peak_ignored(self):
        growth = _series(TRUE, 7)
        tail = [(7, 500.0), (8, 10.0), (9, 1.0)]
        a, b = fit_growth(growth), fit_growth(growth + tail)
        assert b.t_max == 6
        assert a.params == b.params

    def test_tie_uses_earliest_peak(self):
        res = fit_growth([(0, 1.0), (1, 4.0), (2, 9.0), (3, 9.0), (4, 2.0)])
        assert res.t_max == 2

    def test_hits_iteration_cap(self):
        res = fit_growth(_series(TRUE, 7, 0.05, np.random.default_rng(3)), tolerance=0.0,
                         max_iter=3)
        assert not res.converged
        assert res.n_iterations == 3

    def test_scale_step_optimal(self):
        # s is the unconstrained least-squares scale, so nudging it must not help
        res = fit_growth(_series(TRUE, 7, 0.01, np.random.default_rng(11)))
        p = res.params
        t, y = np.arange(7.0), np.array([v for _, v in _series(TRUE, 7, 0.01, np.random.default_rng(11))])
        base = sse_of(p.s, p.beta0, p.beta1, t, y)
        for k in (0.999, 1.001):
            assert sse_of(p.s * k, p.beta0, p.beta1, t, y) >= base


recovery_params = st.tuples(
    st.floats(100, 5000), st.floats(0.3, 2.0), st.floats(4.0, 12.0))


@settings(max_examples=60, deadline=None)
@given(recovery_params, st.integers(0, 2**32 - 1))
def test_sse_never_increases(pars, seed):
    s, ramp, ts = pars
    rng = np.random.default_rng(seed)
    res = fit_growth(_series(midpoint_params(s, ramp, ts), int(ts) + 1, 0.01, rng))
    h = np.array(res.sse_history)
    assert np.all(np.diff(h) <= 1e-9 * np.maximum(h[:-1], 1.0))
    assert res.sse >= 0 and res.n_iterations <= 200


@settings(max_examples=40, deadline=None)
@given(recovery_params, st.integers(0, 2**32 - 1), st.integers(-5, 5),
       st.floats(0.1, 10.0))
def test_equivariance(pars, seed, shift, scale):
    s, ramp, ts = pars
    rng = np.random.default_rng(seed)
    data = _series(midpoint_params(s, ramp, ts), int(ts) + 1, 0.01, rng)
    base = fit_growth(data, tolerance=1e-12)
    shifted = fit_growth([(t + shift, y) for t, y in data], tolerance=1e-12)
    scaled = fit_growth([(t, y * scale) for t, y in data], tolerance=1e-12)
    p, q, r = base.params, shifted.params, scaled.params
    assert q.s == pytest.approx(p.s, rel=1e-6)
    assert q.beta1 == pytest.approx(p.beta1, rel=1e-6)
    assert q.beta0 == pytest.approx(p.beta0 - p.beta1 * shift, rel=1e-6, abs=1e-6)
    assert r.s == pytest.approx(p.s * scale, rel=1e-6)
    assert r.beta0 == pytest.approx(p.beta0, rel=1e-6, abs=1e-6)
    assert r.beta1 == pytest.approx(p.beta1, rel=1e-6)


class TestFitQuad:
    def test_square(self):
        q = fit_quad([(t, t * t) for t in range(6)])
        assert (q.a, q.b, q.c) == pytest.approx((0, 0, 1), abs=1e-9)

    def test_constant(self):
        q = fit_quad([(t, 5.0) for t in range(6)])
        assert (q.a, q.b, q.c) == pytest.approx((5, 0, 0), abs=1e-9)

    def test_known_polynomial(self):
        q = fit_quad([(t, 1 + 2 * t + 3 * t * t) for t in range(6)])
        assert (q.a, q.b, q.c) == pytest.approx((1, 2, 3), abs=1e-9)

    def test_calendar_years(self):
        # coefficients at t~2015 are ill-conditioned; the fitted values are not
        pts = [(t, 1 + 2 * t + 3 * t * t) for t in range(2010, 2020)]
        q = fit_quad(pts)
        assert q.c == pytest.approx(3, rel=1e-9)
        for t, y in pts:
            assert q.a + q.b * t + q.c * t * t == pytest.approx(y, rel=1e-12)

    def test_grid_refinement_oracle(self):
        pts = [(0, 1.0), (1, 2.5), (2, 2.9), (3, 4.8), (4, 5.1)]
        q = fit_quad(pts)

        def loss(a, b, c):
            return sum((a + b * t + c * t * t - y) ** 2 for t, y in pts)

        # compass search on a shrinking lattice, independent of any linear algebra
        centre, step = np.zeros(3), 1.0
        moves = [np.array(d) for d in itertools.product((-1, 0, 1), repeat=3) if any(d)]
        while step > 1e-7:
            best = min((centre + step * m for m in moves), key=lambda v: loss(*v))
            if loss(*best) < loss(*centre):
                centre = best
            else:
                step /= 2
        assert (q.a, q.b, q.c) == pytest.approx(tuple(centre), abs=1e-5)

    def test_errors(self):
        with pytest.raises(errors.NotEnoughPoints):
            fit_quad([(0, 1), (1, 2)])
        with pytest.raises(errors.SingularSystem):
            fit_quad([(0, 1), (0, 2), (1, 3)])


class TestDetectSaturation:
    def test_flat_tail(self, saturated_asset):
        sales = saturated_asset.offsets()
        fit = fit_growth(sales)
        sat, year = detect_saturation(sales, fit, first_year=saturated_asset.first_year)
        assert sat
        # 1000/(1+e^(3-t)) first reaches 950 at t=6 (947.4 at t=5.9)
        assert year == 2011

    def test_steep_growth(self, growing_asset):
        sales = growing_asset.offsets()
        y = [v for _, v in sales]
        assert y[-1] / y[-2] - 1 > 0.3
        assert detect_saturation(sales, fit_growth(sales)) == (False, None)

    def test_level_not_reached(self):
        # flat observed growth but the fitted curve sits well below its plateau
        sales = [(0, 10.0), (1, 20.0), (2, 40.0), (3, 41.0), (4, 41.5)]
        fit = fit_growth(sales)
        fit.params = CurveParams(1000.0, 3.0, -0.1)
        assert detect_saturation(sales, fit) == (False, None)

    def test_flat_after_steep_growth(self):
        # stand-in series: steep growth into 2018, then ~642 -> 657 through 2021
        sales = [(2014, 40.0), (2015, 120.0), (2016, 310.0), (2017, 540.0), (2018, 642.0),
                 (2019, 648.0), (2020, 652.0), (2021, 657.0)]
        asset = AssetRecord("flat", "Flat", 2014, 2030, Category.IMMUNE, 5, 4, tuple(sales))
        res = fit_full(asset)
        assert res.saturated
        assert res.saturation_year == 2018


class TestFitFull:
    def test_saturated(self, saturated_asset):
        res = fit_full(saturated_asset)
        assert res.saturated and res.saturation_year == 2011
        assert res.params.t_s == 6.0

    def test_growing(self, growing_asset):
        res = fit_full(growing_asset)
        assert not res.saturated
        assert res.params.t_s is None and res.saturation_year is None

    def test_force_unsaturated(self, saturated_asset):
        res = fit_full(saturated_asset, force_unsaturated=True)
        assert not res.saturated and res.params.t_s is None

    @pytest.mark.parametrize("values", [
        [100.0, 80.0, 60.0, 40.0, 20.0],
        [100.0, 99.0, 50.0, 10.0, 1.0, 0.5],
        [100.0, 0.0, 0.0, 0.0],
        [5.0, 4.0, 3.0],
    ])
    def test_monotone_decline_never_crashes(self, values):
        asset = AssetRecord("dec", "dec", 2010, 2040, Category.OTHER, 0, 1,
                            tuple((2010 + k, v) for k, v in enumerate(values)))
        try:
            res = fit_full(asset)
        except (errors.DegenerateSeries, errors.NotEnoughPoints):
            return
        assert not res.converged
        assert res.saturated
        assert math.isfinite(res.params.s)

    def test_fits_json_round_trip(self, saturated_asset, growing_asset):
        entries = [(a, fit_full(a)) for a in (growing_asset, saturated_asset)]
        text = dump_fits(entries)
        back = load_fits(text)
        assert [a for a, _ in back] == [saturated_asset, growing_asset]
        assert dump_fits(back) == text
        import json

        row = json.loads(text)[0]
        for key in ("asset_id", "s", "beta0", "beta1", "t_s", "saturated", "sse",
                    "converged", "first_sales_year"):
            assert key in row

    def test_noiseless_full_cycle_recovery(self):
        p = midpoint_params(2500.0, 0.8, 9.0)
        asset = make_asset("x", p, 10)
        res = fit_full(asset)
        assert res.params.s == pytest.approx(2500.0, rel=1e-4)
        assert res.ramp_rate == pytest.approx(0.8, rel=1e-4)


def test_config_iteration_cap_is_respected(growing_asset):
    cfg = RunConfig(max_fit_iterations=1, saturation_fit_tolerance=1e-15)
    res = fit_full(growing_asset, cfg)
    assert res.n_iterations <= 1
