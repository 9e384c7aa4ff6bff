"""
Loading and validation of asset metadata, annual sales and run configuration.

Two CSV files describe a portfolio::

    assets.csv  asset_id,display_name,launch_year,ip_expiry_year,category,n_phase3_trials,n_conditions
    sales.csv   asset_id,year,revenue_musd

Revenue is in USD millions throughout. A run configuration is a plain
``key = value`` file with ``#`` comments; keys are the field names of
:class:`RunConfig`.
"""

import csv
import enum
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import List, Optional, Tuple

from .errors import (
    DuplicateAsset,
    DuplicateYear,
    GapInSeries,
    MissingAsset,
    MissingSales,
    NegativeRevenue,
    OutOfRange,
    SchemaError,
    UnknownKey,
    ValidationError,
)

ASSET_COLUMNS = (
    "asset_id",
    "display_name",
    "launch_year",
    "ip_expiry_year",
    "category",
    "n_phase3_trials",
    "n_conditions",
)
SALES_COLUMNS = ("asset_id", "year", "revenue_musd")

# last sales year must stay below ip_expiry_year + this many years
IP_SANITY_YEARS = 40


class Category(enum.Enum):
    CANCER = "cancer"
    IMMUNE = "immune"
    INFECTIOUS = "infectious"
    OTHER = "other"

    @classmethod
    def parse(cls, text: str) -> "Category":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise SchemaError(f"unknown category {text!r}") from None


class Orientation(enum.Enum):
    FORWARD_FROM_LAST = "ForwardFromLast"
    BACKWARD_FROM_IP = "BackwardFromIP"

    @classmethod
    def parse(cls, text: str) -> "Orientation":
        key = text.strip().lower()
        for member in cls:
            if member.value.lower() == key or member.name.lower() == key:
                return member
        raise OutOfRange(f"ts_orientation must be one of "
                         f"{[m.value for m in cls]}, got {text!r}")


@dataclass(frozen=True)
class AssetRecord:
    asset_id: str
    display_name: str
    launch_year: int
    ip_expiry_year: int
    category: Category
    n_phase3_trials: int
    n_conditions: int
    sales: Tuple[Tuple[int, float], ...]

    def __post_init__(self):
        _check_record(self)

    @property
    def years(self) -> List[int]:
        return [year for year, _ in self.sales]

    @property
    def revenues(self) -> List[float]:
        return [rev for _, rev in self.sales]

    @property
    def first_year(self) -> int:
        return self.sales[0][0]

    @property
    def last_year(self) -> int:
        return self.sales[-1][0]

    def offsets(self) -> List[Tuple[int, float]]:
        """Sales as ``(t, revenue)`` with ``t = year - first_year``."""
        first = self.first_year
        return [(year - first, rev) for year, rev in self.sales]

    def with_sales(self, sales) -> "AssetRecord":
        return replace(self, sales=tuple((int(y), float(v)) for y, v in sales))


def _check_record(rec: AssetRecord) -> None:
    where = f"asset {rec.asset_id!r}"
    if not rec.asset_id or any(c.isspace() for c in rec.asset_id):
        raise SchemaError(f"asset_id must be a non-empty token, got {rec.asset_id!r}")
    if rec.n_phase3_trials < 0 or rec.n_conditions < 0:
        raise ValidationError(f"{where}: trial and condition counts must be >= 0")
    if not rec.sales:
        raise MissingSales(f"{where}: no sales rows")
    prev = None
    for year, rev in rec.sales:
        if not math.isfinite(rev):
            raise ValidationError(f"{where}, year {year}: revenue is not finite")
        if rev < 0:
            raise NegativeRevenue(f"{where}, year {year}: negative revenue {rev}")
        if prev is not None:
            if year == prev:
                raise DuplicateYear(f"{where}: year {year} appears more than once")
            if year < prev:
                raise ValidationError(f"{where}: sales years not increasing at {year}")
            if year > prev + 1:
                raise GapInSeries(f"{where}: missing year {prev + 1}")
        prev = year
    first, last = rec.sales[0][0], rec.sales[-1][0]
    if rec.launch_year > first:
        raise ValidationError(
            f"{where}: launch_year {rec.launch_year} after first sales year {first}")
    if last >= rec.ip_expiry_year + IP_SANITY_YEARS:
        raise ValidationError(
            f"{where}: last sales year {last} implausibly far past "
            f"ip_expiry_year {rec.ip_expiry_year}")


@dataclass(frozen=True)
class RunConfig:
    discount_rate: float = 0.1
    lambda_rate: float = 0.5
    ts_orientation: Orientation = Orientation.FORWARD_FROM_LAST
    n_sims: int = 10000
    seed: int = 0
    saturation_fit_tolerance: float = 1e-6
    max_fit_iterations: int = 200
    saturation_level_fraction: float = 0.95
    saturation_growth_threshold: float = 0.05
    forecast_floor_fraction: float = 0.005
    max_horizon_years: int = 40

    def __post_init__(self):
        _check_config(self)


def _check_config(cfg: RunConfig) -> None:
    def bad(name, why):
        raise OutOfRange(f"{name} = {getattr(cfg, name)!r}: {why}")

    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, float) and not math.isfinite(value):
            bad(f.name, "must be finite")
    if not 0 < cfg.discount_rate < 1:
        bad("discount_rate", "must lie in (0, 1)")
    if not cfg.lambda_rate > 0:
        bad("lambda_rate", "must be positive")
    if not isinstance(cfg.ts_orientation, Orientation):
        bad("ts_orientation", "must be an Orientation")
    if cfg.n_sims < 1:
        bad("n_sims", "must be a positive integer")
    if not 0 <= cfg.seed < 2**64:
        bad("seed", "must be a 64-bit unsigned integer")
    if not cfg.saturation_fit_tolerance > 0:
        bad("saturation_fit_tolerance", "must be positive")
    if cfg.max_fit_iterations < 1:
        bad("max_fit_iterations", "must be a positive integer")
    if not 0 < cfg.saturation_level_fraction < 1:
        bad("saturation_level_fraction", "must lie in (0, 1)")
    if not 0 <= cfg.forecast_floor_fraction < 1:
        bad("forecast_floor_fraction", "must lie in [0, 1)")
    if cfg.max_horizon_years < 1:
        bad("max_horizon_years", "must be a positive integer")


# ---------------------------------------------------------------------------
# CSV loading
# ---------------------------------------------------------------------------

def _read_rows(path, columns, label):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = tuple(h.strip() for h in (reader.fieldnames or ()))
        if header != columns:
            raise SchemaError(f"{label} header must be {','.join(columns)}; got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if None in row or any(v is None for v in row.values()):
                raise SchemaError(f"{path.name}:{lineno}: wrong number of fields")
            yield lineno, {k.strip(): v.strip() for k, v in row.items()}


def _int(value, where):
    try:
        return int(value)
    except ValueError:
        raise SchemaError(f"{where}: expected an integer, got {value!r}") from None


def _float(value, where):
    try:
        out = float(value)
    except ValueError:
        raise SchemaError(f"{where}: expected a number, got {value!r}") from None
    if not math.isfinite(out):
        raise SchemaError(f"{where}: value must be finite, got {value!r}")
    return out


def load_asset_metadata(assets_path) -> dict:
    """``asset_id -> field dict`` from assets.csv alone (no sales)."""
    meta = {}
    for lineno, row in _read_rows(assets_path, ASSET_COLUMNS, "assets.csv"):
        where = f"assets.csv:{lineno}"
        aid = row["asset_id"]
        if aid in meta:
            raise DuplicateAsset(f"{where}: asset_id {aid!r} defined twice")
        meta[aid] = dict(
            asset_id=aid,
            display_name=row["display_name"],
            launch_year=_int(row["launch_year"], where),
            ip_expiry_year=_int(row["ip_expiry_year"], where),
            category=Category.parse(row["category"]),
            n_phase3_trials=_int(row["n_phase3_trials"], where),
            n_conditions=_int(row["n_conditions"], where),
        )
    return meta


def load_assets(assets_path, sales_path) -> List[AssetRecord]:
    """Read and validate both CSV files; records come back sorted by asset_id."""
    meta = load_asset_metadata(assets_path)
    series = {aid: {} for aid in meta}
    for lineno, row in _read_rows(sales_path, SALES_COLUMNS, "sales.csv"):
        where = f"sales.csv:{lineno}"
        aid = row["asset_id"]
        if aid not in meta:
            raise MissingAsset(f"{where}: unknown asset_id {aid!r}")
        year = _int(row["year"], where)
        rev = _float(row["revenue_musd"], where)
        if rev < 0:
            raise NegativeRevenue(f"{where}: asset {aid!r}, year {year}: negative revenue {rev}")
        if year in series[aid]:
            raise DuplicateYear(f"{where}: asset {aid!r} has year {year} twice")
        series[aid][year] = rev

    records = []
    for aid in sorted(meta):
        sales = tuple(sorted(series[aid].items()))
        records.append(AssetRecord(sales=sales, **meta[aid]))
    return records


def write_assets(records, assets_path, sales_path) -> None:
    """Inverse of :func:`load_assets`."""
    with Path(assets_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ASSET_COLUMNS)
        for r in records:
            w.writerow([r.asset_id, r.display_name, r.launch_year, r.ip_expiry_year,
                        r.category.value, r.n_phase3_trials, r.n_conditions])
    with Path(sales_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SALES_COLUMNS)
        for r in records:
            for year, rev in r.sales:
                w.writerow([r.asset_id, year, repr(float(rev))])


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

_CONFIG_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key, text):
    kind = _CONFIG_TYPES[key]
    if kind in (Orientation, "Orientation"):
        return Orientation.parse(text)
    if kind in (int, "int"):
        try:
            return int(text)
        except ValueError:
            raise OutOfRange(f"{key}: expected an integer, got {text!r}") from None
    try:
        return float(text)
    except ValueError:
        raise OutOfRange(f"{key}: expected a number, got {text!r}") from None


def parse_config(text: str, base: Optional[RunConfig] = None) -> RunConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise OutOfRange(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_TYPES:
            raise UnknownKey(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, value)
    return replace(base or RunConfig(), **values)


def load_config(config_path) -> RunConfig:
    return parse_config(Path(config_path).read_text(encoding="utf-8"))
