"""Loading, validation and preprocessing of exogenous data.

Time series live in two-column CSV files (``t,value``, integer hour index).
A dataset bundle is a directory with one CSV per series plus a
``dataset.toml`` manifest; see ``docs/formats.md`` for the key names.
"""

from __future__ import annotations

import csv
import logging
import math
import sys
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import tomli_w

from flexopt import catalog as cat
from flexopt.core_types import (
    BevGroup,
    FlexoptError,
    FuelParams,
    GridParams,
    HPParams,
    TechParams,
    TimeSeries,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

HOURS_PER_YEAR = 8760
DATASET_SCHEMA = "flexopt-dataset/1"
MANIFEST_NAME = "dataset.toml"


class IngestionError(FlexoptError, ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    """All exogenous inputs of one study."""

    prices: TimeSeries
    cefs: TimeSeries
    edem: TimeSeries
    heat_dem: Mapping[str, TimeSeries]
    pv_profile: TimeSeries
    wt_profile: TimeSeries
    bev_groups: tuple[BevGroup, ...]
    grid: GridParams = field(default_factory=cat.default_grid)
    fuel: FuelParams = field(default_factory=cat.default_fuel)
    catalog: Mapping[str, TechParams] = field(default_factory=cat.default_catalog)
    hp: HPParams = field(default_factory=cat.default_hp)
    discount_rate: float = cat.DISCOUNT_RATE

    def __post_init__(self) -> None:
        object.__setattr__(self, "heat_dem", dict(self.heat_dem))
        object.__setattr__(self, "catalog", dict(self.catalog))
        object.__setattr__(self, "bev_groups", tuple(self.bev_groups))
        horizon, dt = len(self.prices), self.prices.dt_hours
        for name, ts in self.named_series():
            if len(ts) != horizon:
                raise IngestionError(f"{name}: length {len(ts)} differs from horizon {horizon}")
            if ts.dt_hours != dt:
                raise IngestionError(f"{name}: dt {ts.dt_hours} differs from {dt}")
        for name in ("pv_profile", "wt_profile"):
            v = getattr(self, name).values
            if v.min() < 0 or v.max() > 1.2:
                raise IngestionError(f"{name} must lie in [0, 1.2] kW/kW_p")
        for name, ts in [("edem", self.edem), *self.heat_dem.items()]:
            if ts.values.min() < 0:
                raise IngestionError(f"demand {name} has negative entries")
        missing = {lvl.level_id for lvl in cat.HEAT_LEVELS} - set(self.heat_dem)
        if missing:
            raise IngestionError(f"missing heat demand for {sorted(missing)}")

    @property
    def horizon(self) -> int:
        return len(self.prices)

    @property
    def dt(self) -> float:
        return self.prices.dt_hours

    def named_series(self) -> list[tuple[str, TimeSeries]]:
        out = [
            ("prices", self.prices),
            ("cefs", self.cefs),
            ("edem", self.edem),
            ("pv_profile", self.pv_profile),
            ("wt_profile", self.wt_profile),
        ]
        out += [(f"heat_{k}", v) for k, v in sorted(self.heat_dem.items())]
        for g in self.bev_groups:
            out += [(f"bev_{g.group_id}_avail", g.avail), (f"bev_{g.group_id}_drive", g.drive)]
        return out


# -- CSV series ---------------------------------------------------------------


def load_timeseries(
    path: str | Path,
    column: str = "value",
    horizon: int | None = None,
    unit: str = "",
    dt_hours: float = 1.0,
) -> TimeSeries:
    """Read a ``t,value`` CSV file into a validated series."""
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or "t" not in header or column not in header:
            raise IngestionError(f"{path}: expected header with columns 't' and '{column}'")
        it, iv = header.index("t"), header.index(column)
        hours: dict[int, float] = {}
        for k, row in enumerate(reader):
            if not row or all(not c.strip() for c in row):
                raise IngestionError(f"{path}: missing value at row {k}")
            cells = row + [""] * (len(header) - len(row))
            t_raw, v_raw = cells[it].strip(), cells[iv].strip()
            if not v_raw:
                raise IngestionError(f"{path}: missing value at row {k}")
            try:
                t = int(t_raw)
            except ValueError:
                raise IngestionError(f"{path}: non-integer time index {t_raw!r} at row {k}") from None
            try:
                v = float(v_raw)
            except ValueError:
                raise IngestionError(f"{path}: non-numeric cell {v_raw!r} at row {k}") from None
            if not math.isfinite(v):
                raise IngestionError(f"{path}: missing value at row {k}")
            if t in hours:
                raise IngestionError(f"{path}: duplicate timestamp t={t} at row {k}")
            hours[t] = v
    if not hours:
        raise IngestionError(f"{path}: no data rows")
    if horizon is not None and len(hours) != horizon:
        raise IngestionError(f"{path}: horizon mismatch, {len(hours)} rows vs declared {horizon}")
    if sorted(hours) != list(range(len(hours))):
        raise IngestionError(f"{path}: time index must cover 0..{len(hours) - 1} without gaps")
    values = [hours[t] for t in range(len(hours))]
    return TimeSeries(np.array(values), dt_hours=dt_hours, unit=unit)


def write_timeseries(ts: TimeSeries, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "value"])
        for t, v in enumerate(ts.values):
            w.writerow([t, repr(float(v))])


# -- preprocessing --------------------------------------------------------------


def derive_inflexible_demand(
    eg_buy_hist: TimeSeries,
    pv_oc_hist: TimeSeries,
    bev_drive_hist: TimeSeries,
    cm_approx_hist: TimeSeries,
) -> tuple[TimeSeries, int]:
    """Reconstruct the inflexible electricity demand from historic metering.

    Returns the demand and the number of hours clamped from negative to zero.
    """
    series = (eg_buy_hist, pv_oc_hist, bev_drive_hist, cm_approx_hist)
    if len({len(s) for s in series}) != 1:
        raise IngestionError("input series differ in length")
    raw = eg_buy_hist.values + pv_oc_hist.values - bev_drive_hist.values - cm_approx_hist.values
    negative = raw < 0
    n_clamped = int(negative.sum())
    if n_clamped:
        log.warning("inflexible demand negative in %d hours, clamped to 0", n_clamped)
    out = np.where(negative, 0.0, raw)
    return TimeSeries(out, eg_buy_hist.dt_hours, "kW", eg_buy_hist.start_label), n_clamped


def aggregate_bev_fleet(
    batteries: Sequence[tuple],
    patterns: Mapping[str, TimeSeries],
    **group_params,
) -> list[BevGroup]:
    """Merge vehicle batteries that share an availability pattern.

    Each battery is ``(kWh, pattern_id)`` or ``(kWh, pattern_id, drive)``.
    Groups come out in order of first appearance; capacities and drive
    series are summed.
    """
    caps: dict[str, float] = {}
    drives: dict[str, np.ndarray] = {}
    for item in batteries:
        kwh, pid = item[0], item[1]
        drive = item[2] if len(item) > 2 else None
        if pid not in patterns:
            raise IngestionError(f"unknown availability pattern {pid!r}")
        avail = patterns[pid]
        if pid not in caps:
            caps[pid] = 0.0
            drives[pid] = np.zeros(len(avail))
        caps[pid] += float(kwh)
        if drive is not None:
            if len(drive) != len(avail):
                raise IngestionError(f"drive series of a {pid!r} battery has the wrong length")
            drives[pid] = drives[pid] + drive.values
    groups = []
    for pid, cap in caps.items():
        avail = patterns[pid]
        drive = TimeSeries(drives[pid], avail.dt_hours, "kW")
        groups.append(BevGroup(pid, cap, avail, drive, **group_params))
    return groups


def scale_prices(series: TimeSeries, target_mean: float, target_std: float) -> TimeSeries:
    """Affine map of a price series onto a target mean and standard deviation."""
    src_mean = series.mean()
    src_std = series.std()
    if not src_std > 0:
        raise IngestionError("cannot scale a series with zero standard deviation")
    if not target_std > 0:
        raise IngestionError("target standard deviation must be positive")
    a = target_std / src_std
    b = target_mean - a * src_mean
    return series.with_values(a * series.values + b)


# -- synthetic site -------------------------------------------------------------


def synthetic_parameters() -> dict:
    text = resources.files("flexopt.data").joinpath("synthetic.toml").read_text("utf-8")
    return tomllib.loads(text)


def _ar1(rng: np.random.Generator, n: int, phi: float, std: float) -> np.ndarray:
    eps = rng.normal(0.0, std * math.sqrt(1.0 - phi * phi), n)
    out = np.empty(n)
    out[0] = rng.normal(0.0, std)
    for k in range(1, n):
        out[k] = phi * out[k - 1] + eps[k]
    return out


def _shift_mask(hod: np.ndarray, blocks: Iterable[Sequence[int]]) -> np.ndarray:
    mask = np.zeros(hod.shape, dtype=bool)
    for start, stop in blocks:
        mask |= (hod >= start) & (hod < stop)
    return mask


def _synthetic_year(seed: int, p: dict) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    n = HOURS_PER_YEAR
    hour = np.arange(n)
    day = hour // 24
    hod = hour % 24
    weekday = (day + p["calendar"]["first_weekday"]) % 7
    workday = weekday < 5
    # +1 at midsummer, -1 at midwinter
    season = np.cos(2 * np.pi * (day - 172) / 365.0)
    summer = np.clip(season, 0, None)
    winter = np.clip(-season, 0, None)

    # PV: half-sine between sunrise and sunset, daily cloudiness
    daylen = 12.0 + 4.0 * season
    sunrise = 12.0 - daylen / 2
    phase = (hod + 0.5 - sunrise) / daylen
    clear = np.where((phase > 0) & (phase < 1), np.sin(np.pi * np.clip(phase, 0, 1)), 0.0)
    clear = clear * (0.55 + 0.35 * season)
    pp = p["pv"]
    cloud = rng.beta(pp["cloud_alpha"], pp["cloud_beta"], n // 24 + 1)[day]
    pv = clear * cloud
    pv *= pp["capacity_factor"] / pv.mean()
    pv = np.clip(pv, 0.0, 1.0)

    # wind: AR(1) speed through a cubic power curve, rescaled to the capacity factor
    wp = p["wind"]
    speed = wp["mean_speed"] + 1.2 * season * -1 + _ar1(rng, n, wp["ar"], wp["speed_std"])
    speed = np.clip(speed, 0.0, None)
    raw = np.clip((speed - wp["cut_in"]) / (wp["rated"] - wp["cut_in"]), 0.0, 1.0) ** 3
    wt = raw.copy()
    for _ in range(20):
        wt = np.clip(wt * wp["capacity_factor"] / wt.mean(), 0.0, 1.0)

    # prices: double-peak diurnal shape with a solar dip
    pr = p["prices"]
    shape = (
        0.55 * np.exp(-0.5 * ((hod - 8.5) / 1.8) ** 2)
        + 0.75 * np.exp(-0.5 * ((hod - 19.0) / 2.0) ** 2)
        - 0.5
    )
    price = (
        pr["mean"]
        + pr["daily_spread"] * shape
        - pr["weekend_drop"] * (~workday)
        + pr["winter_premium"] * winter
        - 0.4 * pr["daily_spread"] * (pv - pv.mean())
        - 6.0 * (wt - wt.mean())
        + _ar1(rng, n, pr["noise_ar"], pr["noise_std"])
    )
    price += pr["mean"] - price.mean()

    cp = p["cefs"]
    cef = (
        cp["mean"]
        + cp["price_coupling"] * (price - pr["mean"])
        - cp["solar_dip"] * (pv - pv.mean())
        + rng.normal(0.0, cp["noise_std"], n)
    )
    cef = np.clip(cef, cp["floor"], cp["cap"])

    dp = p["demand"]
    production = workday & (hod >= 6) & (hod < 22)
    noise = lambda: 1.0 + rng.normal(0.0, dp["heat_noise"], n)  # noqa: E731
    proc = (dp["proc_base"] + dp["proc_production"] * production) * noise()
    space = (
        dp["space_base"]
        + dp["space_winter"] * winter
        + dp["space_day"] * ((hod >= 6) & (hod < 18))
    ) * noise()
    cool = (dp["cool_base"] + dp["cool_summer"] * summer + dp["cool_production"] * production) * noise()
    elec_true = (
        dp["elec_base"]
        + dp["elec_production"] * production
        + dp["elec_summer"] * summer
        + rng.normal(0.0, dp["elec_noise"], n)
    )

    bp = p["bev"]
    sat = weekday == 5
    run_a = workday & _shift_mask(hod, bp["pattern_A"])
    run_b = (workday & _shift_mask(hod, bp["pattern_B"])) | (sat & _shift_mask(hod, bp["saturday_B"]))
    drive_a = np.where(run_a, rng.uniform(bp["drive_low"], bp["drive_high"], n), 0.0)
    drive_b = np.where(run_b, rng.uniform(bp["drive_low"], bp["drive_high"], n), 0.0)

    # historic metering from which the inflexible demand is reconstructed
    pv_oc = np.minimum(dp["pv_existing_kwp"] * pv, elec_true)
    cm = cool / dp["cm_cop"]
    eg_buy = elec_true - pv_oc + (drive_a + drive_b) + cm
    return {
        "price": price,
        "cef": cef,
        "pv": pv,
        "wt": wt,
        "proc": np.clip(proc, 0, None),
        "space": np.clip(space, 0, None),
        "cool": np.clip(cool, 0, None),
        "eg_buy_hist": eg_buy,
        "pv_oc_hist": pv_oc,
        "cm_hist": cm,
        "avail_A": (~run_a).astype(float),
        "avail_B": (~run_b).astype(float),
        "drive_A": drive_a,
        "drive_B": drive_b,
    }


def generate_synthetic_dataset(
    seed: int, horizon_hours: int, params: dict | None = None
) -> Dataset:
    """Deterministic synthetic site standing in for measured plant data."""
    if not 24 <= horizon_hours <= HOURS_PER_YEAR:
        raise IngestionError(f"horizon must lie in [24, {HOURS_PER_YEAR}], got {horizon_hours}")
    p = params or synthetic_parameters()
    year = _synthetic_year(seed, p)
    start = 24 * int(p["calendar"]["start_day"])
    idx = (start + np.arange(horizon_hours)) % HOURS_PER_YEAR
    label = f"synthetic seed={seed} day={p['calendar']['start_day']}"

    def ts(key: str, unit: str) -> TimeSeries:
        return TimeSeries(year[key][idx], 1.0, unit, label)

    edem, _ = derive_inflexible_demand(
        ts("eg_buy_hist", "kW"),
        ts("pv_oc_hist", "kW"),
        TimeSeries(year["drive_A"][idx] + year["drive_B"][idx], 1.0, "kW"),
        ts("cm_hist", "kW"),
    )
    bp = p["bev"]
    patterns = {"A": ts("avail_A", "-"), "B": ts("avail_B", "-")}
    per_battery = {
        k: TimeSeries(year[f"drive_{k}"][idx] / bp["batteries_per_group"], 1.0, "kW") for k in patterns
    }
    batteries = [
        (bp["battery_kwh"], k, per_battery[k]) for k in patterns for _ in range(bp["batteries_per_group"])
    ]
    groups = aggregate_bev_fleet(batteries, patterns)
    return Dataset(
        prices=ts("price", "EUR/MWh"),
        cefs=ts("cef", "t/MWh"),
        edem=edem,
        heat_dem={
            cat.COOL.level_id: ts("cool", "kW"),
            cat.SPACE.level_id: ts("space", "kW"),
            cat.PROC.level_id: ts("proc", "kW"),
        },
        pv_profile=ts("pv", "kW/kW_p"),
        wt_profile=ts("wt", "kW/kW_p"),
        bev_groups=tuple(groups),
    )


# -- bundle I/O -----------------------------------------------------------------

_SERIES_UNITS = {
    "prices": "EUR/MWh",
    "cefs": "t/MWh",
    "edem": "kW",
    "pv_profile": "kW/kW_p",
    "wt_profile": "kW/kW_p",
}


def _tech_to_toml(tp: TechParams) -> dict:
    out = {}
    for f in fields(tp):
        v = getattr(tp, f.name)
        if v is None:
            continue
        if hasattr(v, "value"):
            v = v.value
        out[f.name] = dict(v) if f.name == "efficiencies" else v
    return out


def save_dataset(ds: Dataset, directory: str | Path) -> Path:
    """Write a dataset bundle; returns the manifest path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    series = {}
    for name, ts in ds.named_series():
        if name.startswith("bev_"):
            continue
        fname = f"{name}.csv"
        write_timeseries(ts, d / fname)
        series[name] = {"file": fname, "unit": ts.unit or _SERIES_UNITS.get(name, "kW")}
    bev = []
    for g in ds.bev_groups:
        write_timeseries(g.avail, d / f"bev_{g.group_id}_avail.csv")
        write_timeseries(g.drive, d / f"bev_{g.group_id}_drive.csv")
        entry = {f.name: getattr(g, f.name) for f in fields(g) if f.name not in ("avail", "drive")}
        entry["avail"] = f"bev_{g.group_id}_avail.csv"
        entry["drive"] = f"bev_{g.group_id}_drive.csv"
        bev.append(entry)
    manifest = {
        "schema": DATASET_SCHEMA,
        "horizon": ds.horizon,
        "dt_hours": ds.dt,
        "discount_rate": ds.discount_rate,
        "series": series,
        "grid": {f.name: getattr(ds.grid, f.name) for f in fields(ds.grid)},
        "fuel": {f.name: getattr(ds.fuel, f.name) for f in fields(ds.fuel)},
        "hp": {"eta_carnot": ds.hp.eta_carnot, "n_modes": ds.hp.n_modes},
        "bev": bev,
        "catalog": {name: _tech_to_toml(tp) for name, tp in ds.catalog.items()},
    }
    path = d / MANIFEST_NAME
    path.write_bytes(tomli_w.dumps(manifest).encode("utf-8"))
    return path


def load_dataset(directory: str | Path) -> Dataset:
    d = Path(directory)
    path = d / MANIFEST_NAME if d.is_dir() else d
    d = path.parent
    if not path.is_file():
        raise IngestionError(f"{path}: manifest not found")
    m = tomllib.loads(path.read_text("utf-8"))
    if m.get("schema") != DATASET_SCHEMA:
        raise IngestionError(f"{path}: unsupported schema {m.get('schema')!r}")
    horizon, dt = int(m["horizon"]), float(m["dt_hours"])

    def load(fname: str, unit: str = "") -> TimeSeries:
        return load_timeseries(d / fname, horizon=horizon, unit=unit, dt_hours=dt)

    s = m["series"]
    heat = {k[len("heat_"):]: load(v["file"], v["unit"]) for k, v in s.items() if k.startswith("heat_")}
    groups = []
    for entry in m.get("bev", []):
        e = dict(entry)
        avail, drive = load(e.pop("avail"), "-"), load(e.pop("drive"), "kW")
        groups.append(BevGroup(avail=avail, drive=drive, **e))
    catalog = {name: TechParams(**params) for name, params in m["catalog"].items()}
    hp = replace(cat.default_hp(), **m.get("hp", {}))
    return Dataset(
        prices=load(s["prices"]["file"], s["prices"]["unit"]),
        cefs=load(s["cefs"]["file"], s["cefs"]["unit"]),
        edem=load(s["edem"]["file"], s["edem"]["unit"]),
        heat_dem=heat,
        pv_profile=load(s["pv_profile"]["file"], s["pv_profile"]["unit"]),
        wt_profile=load(s["wt_profile"]["file"], s["wt_profile"]["unit"]),
        bev_groups=tuple(groups),
        grid=GridParams(**m["grid"]),
        fuel=FuelParams(**m["fuel"]),
        catalog=catalog,
        hp=hp,
        discount_rate=float(m.get("discount_rate", cat.DISCOUNT_RATE)),
    )
