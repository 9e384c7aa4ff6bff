"""Command-line entry point: ``assetval <verb> ...``.

Verbs: fit, forecast, validate, value, posthoc, plot. Files carry USD
millions; console output is in billions with three decimals.

Exit codes: 0 success, 2 bad arguments or inputs, 3 fitting failure.
"""

import argparse
import csv
import logging
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from . import analysis, fit as fitmod, plot, scenario, valuation
from .errors import AssetValError, ConfigError, FitError, ValidationError
from .ingest import RunConfig, load_asset_metadata, load_assets, load_config

log = logging.getLogger("assetval")

EXIT_INPUT = 2
EXIT_FIT = 3


class InputError(Exception):
    pass


def write_atomic(path, text: str) -> None:
    """Write via a temp file in the target directory, then rename over it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _billions(musd: float) -> str:
    return f"{musd / 1000:.3f}"


def _config(args) -> RunConfig:
    return load_config(args.config) if getattr(args, "config", None) else RunConfig()


def _require_file(path, flag):
    if not Path(path).is_file():
        raise InputError(f"{flag}: no such file {path}")


def _read_fits(path):
    _require_file(path, "--fits")
    try:
        return fitmod.load_fits(Path(path).read_text(encoding="utf-8"))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"--fits: malformed fits file ({exc})") from None


def _scenarios_for(entries, config):
    return [scenario.build_scenarios(f, a, config) for a, f in entries]


def read_balance(path) -> valuation.BalanceSheet:
    _require_file(path, "--balance")
    cols = ["market_cap_musd", "current_assets_musd", "cash_musd", "total_liabilities_musd"]
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or [c.strip() for c in rows[0].keys()] != cols:
        raise InputError(f"--balance: expected header {','.join(cols)} and one row")
    row = {k.strip(): v for k, v in rows[0].items()}
    try:
        return valuation.BalanceSheet(
            market_cap=float(row["market_cap_musd"]),
            current_assets=float(row["current_assets_musd"]),
            cash_on_hand=float(row["cash_musd"]),
            total_liabilities=float(row["total_liabilities_musd"]))
    except ValueError as exc:
        raise InputError(f"--balance: {exc}") from None


# ---------------------------------------------------------------------------
# verbs
# ---------------------------------------------------------------------------

def cmd_fit(args) -> int:
    _require_file(args.assets, "--assets")
    _require_file(args.sales, "--sales")
    config = _config(args)
    assets = load_assets(args.assets, args.sales)
    entries = []
    for asset in assets:
        try:
            res = fitmod.fit_full(asset, config)
        except FitError as exc:
            if not args.skip_errors:
                print(f"error: fit failed for {asset.asset_id}: {exc}", file=sys.stderr)
                return EXIT_FIT
            log.warning("skipping %s: %s", asset.asset_id, exc)
            continue
        entries.append((asset, res))
    write_atomic(args.out, fitmod.dump_fits(entries))
    for asset, res in sorted(entries, key=lambda e: e[0].asset_id):
        print(f"{asset.asset_id}  s={_billions(res.params.s)}B  "
              f"ramp_rate={res.ramp_rate:.4f}  saturated={str(res.saturated).lower()}")
    return 0


def cmd_forecast(args) -> int:
    config = _config(args)
    entries = _read_fits(args.fits)
    sets = _scenarios_for(entries, config)
    write_atomic(args.out, scenario.dump_scenarios(sets))
    for ss in sets:
        print(f"{ss.asset_id}  scenarios={len(ss.scenarios)}  "
              f"expected_cumulative={_billions(ss.expected_cumulative)}B")
    return 0


def cmd_validate(args) -> int:
    _require_file(args.assets, "--assets")
    _require_file(args.sales, "--sales")
    try:
        fractions = tuple(float(x) for x in args.fractions.split(","))
    except ValueError:
        raise InputError(f"--fractions: expected comma-separated numbers, got {args.fractions!r}")
    if not all(0 < f <= 1 for f in fractions):
        raise InputError("--fractions: every fraction must lie in (0, 1]")
    config = _config(args)
    assets = load_assets(args.assets, args.sales)
    rows, skipped = analysis.validate_portfolio(assets, fractions, config)
    write_atomic(args.out, analysis.validation_csv(rows))
    for aid, why in sorted(skipped.items()):
        log.info("validation skipped %s: %s", aid, why)
    for r in rows:
        if r.asset_id == "portfolio":
            print(f"portfolio  {r.fraction:>5g}  diff={_billions(r.difference)}B  "
                  f"({r.pct_difference:.2f}%)")
    return 0


def cmd_value(args) -> int:
    config = _config(args)
    rate = config.discount_rate if args.rate is None else args.rate
    if not 0 <= rate < 1:
        raise InputError(f"--rate must lie in [0, 1), got {rate}")
    if args.sims < 1:
        raise InputError("--sims must be positive")
    if not 0 <= args.seed < 2**64:
        raise InputError("--seed must be a 64-bit unsigned integer")
    balance = read_balance(args.balance) if args.balance else None
    entries = _read_fits(args.fits)
    sets = _scenarios_for(entries, config)
    res = valuation.simulate_portfolio(sets, config, rate=rate, n_sims=args.sims, seed=args.seed)
    pre = valuation.implied_prerevenue(balance, res.mean) if balance else None
    if args.samples:
        write_atomic(args.samples, valuation.samples_csv(res))
    write_atomic(args.out, valuation.dump_valuation(res, pre))
    print(f"portfolio NPV mean {_billions(res.mean)} B, 95% interval "
          f"[{_billions(res.ci_low)}, {_billions(res.ci_high)}] B "
          f"over {res.n_sims} realizations")
    if pre is not None:
        print(f"implied pre-revenue value {_billions(pre)} B")
    return 0


def cmd_posthoc(args) -> int:
    entries = _read_fits(args.fits)
    _require_file(args.assets, "--assets")
    meta = load_asset_metadata(args.assets)
    config = _config(args)
    assets, fits = [], []
    for asset, res in entries:
        if asset.asset_id not in meta:
            raise InputError(f"--assets: no metadata for {asset.asset_id}")
        m = meta[asset.asset_id]
        assets.append(replace(asset, category=m["category"],
                              n_phase3_trials=m["n_phase3_trials"],
                              n_conditions=m["n_conditions"]))
        fits.append(res)
    reports = analysis.posthoc_features(assets, fits, config.saturation_level_fraction)
    out = Path(args.out)
    write_atomic(out, analysis.posthoc_csv(reports))
    for key, rep in sorted(reports.items()):
        write_atomic(out.parent / f"qq_{key.replace('~', '_vs_')}.csv", analysis.qq_csv(rep))
        slopes = ", ".join(f"{t.name}={t.coefficient:.4g} (p={t.p_value:.3g})"
                           for t in rep.terms if t.name != "intercept")
        print(f"{key}: {slopes}")
    return 0


def cmd_plot(args) -> int:
    config = _config(args)
    entries = _read_fits(args.fits)
    if args.samples is None and args.seed is None:
        raise InputError("plot needs --samples or --seed for the NPV histogram")
    sets = _scenarios_for(entries, config)
    out = Path(args.out_dir)
    for (asset, res), ss in zip(entries, sets):
        write_atomic(out / f"{asset.asset_id}.svg", plot.asset_svg(asset, res, ss))
    if args.samples:
        _require_file(args.samples, "--samples")
        import numpy as np

        with open(args.samples, newline="", encoding="utf-8") as fh:
            samples = np.array([float(r["npv_musd"]) for r in csv.DictReader(fh)])
        if samples.size == 0:
            raise InputError("--samples: no rows")
        lo, hi = np.percentile(samples, [2.5, 97.5])
        mean = float(samples.mean())
    else:
        res = valuation.simulate_portfolio(sets, config, n_sims=args.sims, seed=args.seed)
        samples, lo, hi, mean = res.samples, res.ci_low, res.ci_high, res.mean
    write_atomic(out / "portfolio_hist.svg", plot.histogram_svg(samples, lo, hi, mean))
    print(f"wrote {len(entries) + 1} SVG files to {out}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="assetval",
        description="Sales-curve forecasting and Monte Carlo NPV for post-revenue drug assets.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("fit", help="fit sales curves, write fits.json")
    p.add_argument("--assets", required=True)
    p.add_argument("--sales", required=True)
    p.add_argument("--out", default="fits.json")
    p.add_argument("--config")
    p.add_argument("--skip-errors", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("forecast", help="build saturation scenarios, write scenarios.json")
    p.add_argument("--fits", required=True)
    p.add_argument("--out", default="scenarios.json")
    p.add_argument("--config")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("validate", help="holdout validation at fractions of peak sales")
    p.add_argument("--assets", required=True)
    p.add_argument("--sales", required=True)
    p.add_argument("--fractions", default="0.25,0.5,0.75,1.0")
    p.add_argument("--out", default="validation.csv")
    p.add_argument("--config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("value", help="Monte Carlo portfolio NPV")
    p.add_argument("--fits", required=True)
    p.add_argument("--sims", type=int, default=RunConfig.n_sims)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--rate", type=float)
    p.add_argument("--out", default="valuation.json")
    p.add_argument("--balance")
    p.add_argument("--samples")
    p.add_argument("--config")
    p.set_defaults(func=cmd_value)

    p = sub.add_parser("posthoc", help="OLS of fit residuals and slopes on asset features")
    p.add_argument("--fits", required=True)
    p.add_argument("--assets", required=True)
    p.add_argument("--out", default="posthoc.csv")
    p.add_argument("--config")
    p.set_defaults(func=cmd_posthoc)

    p = sub.add_parser("plot", help="per-asset SVG charts and the NPV histogram")
    p.add_argument("--fits", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--samples")
    p.add_argument("--seed", type=int)
    p.add_argument("--sims", type=int, default=RunConfig.n_sims)
    p.add_argument("--config")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, ValidationError, ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except AssetValError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
