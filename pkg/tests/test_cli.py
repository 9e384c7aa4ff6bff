import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from assetval.cli import main, write_atomic
from assetval.curve import CurveParams
from assetval.ingest import Category, write_assets
from assetval.synthetic import make_asset, midpoint_params

SVG = "{http://www.w3.org/2000/svg}"


def portfolio():
    rng = np.random.default_rng(5)
    return [
        make_asset("alpha", midpoint_params(4000.0, 0.9, 9.0), 7, first_year=2015,
                   ip_expiry_year=2026, noise=0.01, rng=rng, category=Category.CANCER,
                   n_phase3_trials=12, n_conditions=4),
        make_asset("beta", CurveParams(1000.0, 3.0, -1.0, 30.0), 12, first_year=2010,
                   ip_expiry_year=2028, noise=0.005, rng=rng, category=Category.IMMUNE,
                   n_phase3_trials=30, n_conditions=9),
        make_asset("gamma", midpoint_params(1500.0, 1.4, 7.0), 5, first_year=2017,
                   ip_expiry_year=2030, noise=0.01, rng=rng, n_phase3_trials=3,
                   n_conditions=1),
        make_asset("delta", midpoint_params(2500.0, 0.7, 11.0), 9, first_year=2013,
                   ip_expiry_year=2027, noise=0.01, rng=rng, category=Category.INFECTIOUS,
                   n_phase3_trials=7, n_conditions=2),
    ]


@pytest.fixture
def inputs(tmp_path):
    write_assets(portfolio(), tmp_path / "assets.csv", tmp_path / "sales.csv")
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


def pipeline(src, out, seed=7):
    out.mkdir(exist_ok=True)
    assert run("fit", "--assets", src / "assets.csv", "--sales", src / "sales.csv",
               "--out", out / "fits.json") == 0
    assert run("value", "--fits", out / "fits.json", "--sims", 2000, "--seed", seed,
               "--rate", 0.1, "--out", out / "valuation.json",
               "--samples", out / "samples.csv") == 0
    assert run("plot", "--fits", out / "fits.json", "--out-dir", out / "svg",
               "--samples", out / "samples.csv") == 0


def test_fit_summary(inputs, capsys):
    assert run("fit", "--assets", inputs / "assets.csv", "--sales", inputs / "sales.csv",
               "--out", inputs / "fits.json") == 0
    lines = capsys.readouterr().out.splitlines()
    assert [ln.split()[0] for ln in lines] == ["alpha", "beta", "delta", "gamma"]
    assert "saturated=true" in lines[1] and "saturated=false" in lines[0]
    rows = json.loads((inputs / "fits.json").read_text())
    assert [r["asset_id"] for r in rows] == ["alpha", "beta", "delta", "gamma"]
    assert rows[1]["t_s"] is not None and rows[0]["t_s"] is None


def test_missing_sales_flag(inputs, capsys):
    with pytest.raises(SystemExit) as exc:
        run("fit", "--assets", inputs / "assets.csv", "--out", inputs / "fits.json")
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err
    assert not (inputs / "fits.json").exists()


def test_bad_input_exit_2(inputs):
    (inputs / "sales.csv").write_text("asset_id,year,revenue_musd\nalpha,2015,1\nalpha,2017,2\n")
    assert run("fit", "--assets", inputs / "assets.csv", "--sales", inputs / "sales.csv",
               "--out", inputs / "fits.json") == 2
    assert not (inputs / "fits.json").exists()


def test_fit_failure_exit_3(inputs):
    text = (inputs / "sales.csv").read_text()
    assets = (inputs / "assets.csv").read_text() + "flat,Flat,2010,2030,other,0,1\n"
    (inputs / "assets.csv").write_text(assets)
    (inputs / "sales.csv").write_text(text + "flat,2010,5\nflat,2011,5\nflat,2012,5\n")
    args = ["fit", "--assets", inputs / "assets.csv", "--sales", inputs / "sales.csv",
            "--out", inputs / "fits.json"]
    assert run(*args) == 3
    assert not (inputs / "fits.json").exists()
    assert run(*args, "--skip-errors") == 0
    assert len(json.loads((inputs / "fits.json").read_text())) == 4


def test_existing_output_untouched_on_error(inputs):
    target = inputs / "fits.json"
    target.write_text("previous\n")
    (inputs / "sales.csv").write_text("asset_id,year,revenue_musd\nalpha,2015,-1\n")
    assert run("fit", "--assets", inputs / "assets.csv", "--sales", inputs / "sales.csv",
               "--out", target) == 2
    assert target.read_text() == "previous\n"
    assert sorted(p.name for p in inputs.iterdir()) == ["assets.csv", "fits.json", "sales.csv"]


def test_write_atomic_cleans_up(tmp_path):
    with pytest.raises(TypeError):
        write_atomic(tmp_path / "x.txt", 123)
    assert list(tmp_path.iterdir()) == []


def test_end_to_end_byte_identical(inputs):
    pipeline(inputs, inputs / "run1")
    pipeline(inputs, inputs / "run2")
    names = ["fits.json", "valuation.json", "samples.csv"]
    svgs = sorted(p.name for p in (inputs / "run1" / "svg").iterdir())
    assert svgs == ["alpha.svg", "beta.svg", "delta.svg", "gamma.svg", "portfolio_hist.svg"]
    for name in names + [f"svg/{s}" for s in svgs]:
        assert (inputs / "run1" / name).read_bytes() == (inputs / "run2" / name).read_bytes()


def test_value_rate_zero_is_undiscounted(inputs, capsys):
    run("fit", "--assets", inputs / "assets.csv", "--sales", inputs / "sales.csv",
        "--out", inputs / "fits.json")
    assert run("forecast", "--fits", inputs / "fits.json", "--out", inputs / "scen.json") == 0
    assert run("value", "--fits", inputs / "fits.json", "--sims", 1000, "--seed", 1,
               "--rate", 0, "--out", inputs / "val.json") == 0
    val = json.loads((inputs / "val.json").read_text())
    scen = json.loads((inputs / "scen.json").read_text())
    vy = val["valuation_year"]
    for row in scen:
        expect = sum(sc["probability"] * sum(v for y, v in sc["path"] if y > vy)
                     for sc in row["scenarios"])
        assert val["per_asset_expected_npv"][row["asset_id"]] == pytest.approx(expect, rel=1e-12)
    out = capsys.readouterr().out
    assert "95% interval" in out and " B" in out


def test_value_requires_seed(inputs):
    with pytest.raises(SystemExit) as exc:
        run("value", "--fits", inputs / "fits.json", "--out", inputs / "v.json")
    assert exc.value.code == 2


def test_value_balance(inputs, capsys):
    run("fit", "--assets", inputs / "assets.csv", "--sales", inputs / "sales.csv",
        "--out", inputs / "fits.json")
    (inputs / "balance.csv").write_text(
        "market_cap_musd,current_assets_musd,cash_musd,total_liabilities_musd\n"
        "174000,74000,40000,117800\n")
    assert run("value", "--fits", inputs / "fits.json", "--sims", 500, "--seed", 3,
               "--out", inputs / "v.json", "--balance", inputs / "balance.csv") == 0
    val = json.loads((inputs / "v.json").read_text())
    assert val["implied_prerevenue_musd"] == pytest.approx(
        174000 - 74000 - val["mean_musd"] - 40000 + 117800, rel=1e-12)
    for key in ("mean_musd", "ci_low_musd", "ci_high_musd", "n_sims", "seed",
                "per_asset_expected_npv"):
        assert key in val
    assert "implied pre-revenue" in capsys.readouterr().out


def test_value_bad_balance(inputs):
    run("fit", "--assets", inputs / "assets.csv", "--sales", inputs / "sales.csv",
        "--out", inputs / "fits.json")
    (inputs / "balance.csv").write_text("cap,assets\n1,2\n")
    assert run("value", "--fits", inputs / "fits.json", "--seed", 3,
               "--out", inputs / "v.json", "--balance", inputs / "balance.csv") == 2
    assert not (inputs / "v.json").exists()


def test_plot_saturated_single_facet(tmp_path):
    asset = make_asset("sat", CurveParams(1000.0, 3.0, -1.0, 30.0), 12, first_year=2005,
                       ip_expiry_year=2025)
    write_assets([asset], tmp_path / "a.csv", tmp_path / "s.csv")
    assert run("fit", "--assets", tmp_path / "a.csv", "--sales", tmp_path / "s.csv",
               "--out", tmp_path / "fits.json") == 0
    assert run("plot", "--fits", tmp_path / "fits.json", "--out-dir", tmp_path / "svg",
               "--seed", 1, "--sims", 200) == 0
    root = ET.parse(tmp_path / "svg" / "sat.svg").getroot()
    facets = [g for g in root.iter(f"{SVG}g") if g.get("class") == "facet"]
    assert len(facets) == 1
    assert facets[0].get("data-probability") == "1.000000"
    ET.parse(tmp_path / "svg" / "portfolio_hist.svg")


def test_plot_unsaturated_facets_and_band(inputs):
    pipeline(inputs, inputs / "out")
    root = ET.parse(inputs / "out" / "svg" / "alpha.svg").getroot()
    facets = [g for g in root.iter(f"{SVG}g") if g.get("class") == "facet"]
    assert [int(g.get("data-ts-year")) for g in facets] == list(range(2021, 2027))
    assert sum(float(g.get("data-probability")) for g in facets) == pytest.approx(1, abs=1e-5)
    assert any(p.get("class") == "band" for p in root.iter(f"{SVG}polygon"))
    assert len([c for c in root.iter(f"{SVG}circle") if c.get("class") == "observed"]) == 7


def test_plot_needs_histogram_source(inputs):
    run("fit", "--assets", inputs / "assets.csv", "--sales", inputs / "sales.csv",
        "--out", inputs / "fits.json")
    assert run("plot", "--fits", inputs / "fits.json", "--out-dir", inputs / "svg") == 2


def test_validate_and_posthoc(inputs, capsys):
    assert run("validate", "--assets", inputs / "assets.csv", "--sales", inputs / "sales.csv",
               "--fractions", "0.5,1.0", "--out", inputs / "validation.csv") == 0
    lines = (inputs / "validation.csv").read_text().splitlines()
    assert lines[0] == "asset_id,fraction,predicted_busd,actual_busd,diff_busd,pct_diff"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["beta", "beta", "portfolio", "portfolio"]

    run("fit", "--assets", inputs / "assets.csv", "--sales", inputs / "sales.csv",
        "--out", inputs / "fits.json")
    assert run("posthoc", "--fits", inputs / "fits.json", "--assets", inputs / "assets.csv",
               "--out", inputs / "posthoc.csv") == 0
    head = (inputs / "posthoc.csv").read_text().splitlines()[0]
    assert head == "regression,term,coefficient,std_err,t_stat,p_value"
    qq = inputs / "qq_ramp_rate_vs_category.csv"
    assert qq.read_text().splitlines()[0] == "theoretical,sample"


def test_validate_bad_fractions(inputs):
    assert run("validate", "--assets", inputs / "assets.csv", "--sales", inputs / "sales.csv",
               "--fractions", "0.5,abc", "--out", inputs / "v.csv") == 2
    assert run("validate", "--assets", inputs / "assets.csv", "--sales", inputs / "sales.csv",
               "--fractions", "1.5", "--out", inputs / "v.csv") == 2


def test_config_file(inputs):
    (inputs / "run.cfg").write_text("lambda_rate = 2.0\n")
    run("fit", "--assets", inputs / "assets.csv", "--sales", inputs / "sales.csv",
        "--out", inputs / "fits.json")
    assert run("forecast", "--fits", inputs / "fits.json", "--out", inputs / "a.json") == 0
    assert run("forecast", "--fits", inputs / "fits.json", "--out", inputs / "b.json",
               "--config", inputs / "run.cfg") == 0
    assert (inputs / "a.json").read_text() != (inputs / "b.json").read_text()
    (inputs / "bad.cfg").write_text("lambda = 2\n")
    assert run("forecast", "--fits", inputs / "fits.json", "--out", inputs / "c.json",
               "--config", inputs / "bad.cfg") == 2
