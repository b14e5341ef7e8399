"""Shared domain types, units and the two closed-form helpers.

Units are fixed per field and never converted at runtime: power in kW,
energy in kWh, money in EUR, emissions in t CO2eq, time in hours. Prices
and emission factors are quoted per MWh as on the market.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

KELVIN_OFFSET = 273.15
MIN_TEMPERATURE_GAP_K = 1.0


class FlexoptError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(FlexoptError, ValueError):
    pass


class DegenerateTemperatureError(FlexoptError, ValueError):
    """Condensation temperature not above evaporation temperature."""


class TechId(str, Enum):
    CHP = "CHP"
    Elc = "Elc"
    FC = "FC"
    HOB = "HOB"
    HP = "HP"
    P2H = "P2H"
    PV = "PV"
    WT = "WT"
    BES = "BES"
    TES = "TES"
    H2S = "H2S"
    BEV = "BEV"


class BaseUnit(str, Enum):
    kW_el = "kW_el"
    kW_th = "kW_th"
    kW_p = "kW_p"
    kWh_el = "kWh_el"
    kWh_th = "kWh_th"
    kWh_H2 = "kWh_H2"


def _check_fraction(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise InvalidParameterError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Equidistant series on a flat hour index ``0..T-1``.

    ``values`` is stored as a read-only float64 array.
    """

    values: np.ndarray
    dt_hours: float = 1.0
    unit: str = ""
    start_label: str = ""

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        if arr.size < 1:
            raise InvalidParameterError("time series must hold at least one value")
        if not np.all(np.isfinite(arr)):
            k = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise InvalidParameterError(f"missing value at row {k}")
        if not self.dt_hours > 0:
            raise InvalidParameterError(f"dt_hours must be positive, got {self.dt_hours}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (
            self.dt_hours == other.dt_hours
            and self.unit == other.unit
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self) -> int:
        return hash((self.values.tobytes(), self.dt_hours, self.unit))

    @property
    def horizon(self) -> int:
        return self.values.size

    def total(self) -> float:
        return math.fsum(self.values)

    def mean(self) -> float:
        return math.fsum(self.values) / self.values.size

    def std(self) -> float:
        """Population standard deviation."""
        return float(np.std(self.values))

    def weighted_mean(self, weights: Sequence[float] | np.ndarray) -> float:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != self.values.shape:
            raise InvalidParameterError("weights must match the series length")
        den = math.fsum(w)
        if den == 0.0:
            raise InvalidParameterError("weights sum to zero")
        return math.fsum(self.values * w) / den

    def with_values(self, values: Sequence[float] | np.ndarray) -> "TimeSeries":
        return TimeSeries(np.asarray(values), self.dt_hours, self.unit, self.start_label)

    def window(self, start: int, stop: int) -> "TimeSeries":
        return TimeSeries(self.values[start:stop], self.dt_hours, self.unit, self.start_label)


@dataclass(frozen=True)
class TechParams:
    """Techno-economic parameters of one component.

    ``efficiencies`` maps output carrier to output per unit of input; storage
    components use ``eta_cycle`` and ``eta_time`` instead.
    """

    tech_id: TechId
    c_inv: float
    base_unit: BaseUnit
    rmi_frac: float
    life_years: int
    efficiencies: Mapping[str, float] = field(default_factory=dict)
    c_rate_in: float | None = None
    c_rate_out: float | None = None
    eta_cycle: float = 1.0
    eta_time: float = 1.0
    cap_existing: float = 0.0
    cap_new_max: float | None = None
    k_ini: float = 0.5
    level: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "tech_id", TechId(self.tech_id))
        object.__setattr__(self, "base_unit", BaseUnit(self.base_unit))
        object.__setattr__(self, "efficiencies", dict(self.efficiencies))
        for k, v in self.efficiencies.items():
            _check_fraction(f"efficiency[{k}]", v)
        _check_fraction("rmi_frac", self.rmi_frac)
        _check_fraction("eta_cycle", self.eta_cycle)
        _check_fraction("eta_time", self.eta_time)
        _check_fraction("k_ini", self.k_ini)
        if self.life_years < 1:
            raise InvalidParameterError(f"life_years must be >= 1, got {self.life_years}")
        if self.c_inv < 0:
            raise InvalidParameterError("c_inv must be non-negative")
        if self.cap_existing < 0 or (self.cap_new_max is not None and self.cap_new_max < 0):
            raise InvalidParameterError("capacities must be non-negative")


@dataclass(frozen=True)
class GridParams:
    p_buy_max: float = 20_000.0
    p_sell_max: float = 20_000.0
    c_addon: float = 62.28
    c_peak_fee: float = 70.0

    def __post_init__(self) -> None:
        for name in ("p_buy_max", "p_sell_max", "c_addon", "c_peak_fee"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be non-negative")


@dataclass(frozen=True)
class FuelParams:
    c_ng: float = 43.0
    cef_ng: float = 0.240
    c_carbon_tax: float = 55.0

    def __post_init__(self) -> None:
        for name in ("c_ng", "cef_ng", "c_carbon_tax"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be non-negative")


@dataclass(frozen=True)
class HeatLevel:
    """Thermal demand level given by flow/return temperatures in degC."""

    level_id: str
    flow_c: float
    return_c: float
    exchanger_dt: float = 5.0

    def __post_init__(self) -> None:
        if self.flow_c == self.return_c:
            raise InvalidParameterError(f"{self.level_id}: flow and return temperature coincide")
        if self.exchanger_dt < 0:
            raise InvalidParameterError("exchanger_dt must be non-negative")

    @property
    def temp_c(self) -> float:
        return self.flow_c


@dataclass(frozen=True)
class Well:
    """Constant-temperature reservoir (ground or well water)."""

    level_id: str = "well"
    temp_c: float = 10.0
    exchanger_dt: float = 5.0


@dataclass(frozen=True)
class HPParams:
    eta_carnot: float = 0.5
    n_modes: int = 2
    sources: tuple = ()
    sinks: tuple = ()

    def __post_init__(self) -> None:
        if not 0.0 < self.eta_carnot <= 1.0:
            raise InvalidParameterError(f"eta_carnot must lie in (0, 1], got {self.eta_carnot}")
        if self.n_modes < 1:
            raise InvalidParameterError("n_modes must be >= 1")
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "sinks", tuple(self.sinks))


@dataclass(frozen=True)
class BevGroup:
    """Aggregated vehicle batteries sharing one availability pattern."""

    group_id: str
    e_cap: float
    avail: TimeSeries
    drive: TimeSeries
    k_ini: float = 0.5
    k_empty: float = 0.15
    k_full: float = 0.85
    lambda_in: float = 0.7
    lambda_v2x: float = 0.7
    eta_cycle: float = 0.95
    eta_time: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.k_empty <= self.k_ini <= self.k_full <= 1.0:
            raise InvalidParameterError(
                f"{self.group_id}: need 0 <= k_empty <= k_ini <= k_full <= 1"
            )
        if self.e_cap < 0:
            raise InvalidParameterError("e_cap must be non-negative")
        if len(self.avail) != len(self.drive):
            raise InvalidParameterError("avail and drive must share the horizon")
        if not np.all(np.isin(self.avail.values, (0.0, 1.0))):
            raise InvalidParameterError("availability must be 0/1")
        if np.any(self.drive.values < 0):
            raise InvalidParameterError("drive power must be non-negative")


@dataclass(frozen=True)
class ScenarioConfig:
    """Flexibility switches of one scenario.

    ``hp_modes`` restricts the heat pump to the listed ``source>sink`` modes;
    ``None`` enables every non-degenerate mode.
    """

    name: str
    allow_conversion_invest: bool = True
    use_existing_flex: bool = True
    allow_storage_invest: bool = True
    decarbonize: bool = False
    z_smart: bool = True
    z_v2x: bool = True
    chp_fixed_to_ref: bool = False
    hp_modes: frozenset | None = None

    def __post_init__(self) -> None:
        if self.hp_modes is not None:
            object.__setattr__(self, "hp_modes", frozenset(self.hp_modes))
        if self.decarbonize and self.chp_fixed_to_ref:
            raise InvalidParameterError(
                f"{self.name}: natural gas is banned under decarbonize, CHP cannot be fixed"
            )

    @property
    def ng_allowed(self) -> bool:
        return not self.decarbonize


@dataclass(frozen=True)
class ContextConfig:
    name: str
    c_dac: float
    price_series: TimeSeries

    def __post_init__(self) -> None:
        if not self.c_dac > 0:
            raise InvalidParameterError(f"c_dac must be positive, got {self.c_dac}")


def annuity_factor(r: float, n: int) -> float:
    """Equal annual payment per unit of investment at rate ``r`` over ``n`` years."""
    if not r > 0:
        raise InvalidParameterError(f"discount rate must be positive, got {r}")
    if n < 1 or int(n) != n:
        raise InvalidParameterError(f"economic life must be an integer >= 1, got {n}")
    q = (1.0 + r) ** int(n)
    return r * q / (q - 1.0)


def _sink_temperature(level: HeatLevel | Well) -> float:
    return level.temp_c + level.exchanger_dt


def _source_temperature(level: HeatLevel | Well) -> float:
    return level.temp_c - level.exchanger_dt


def carnot_cop(
    sink: HeatLevel | Well,
    source: HeatLevel | Well,
    eta_carnot: float,
    min_gap_k: float = 0.0,
) -> float:
    """Heat-pump COP as a fixed share of the Carnot COP.

    The condensation temperature sits ``exchanger_dt`` above the sink supply
    temperature, evaporation ``exchanger_dt`` below the source temperature.
    """
    cond = _sink_temperature(sink)
    eva = _source_temperature(source)
    gap = cond - eva
    if gap <= 0 or gap < min_gap_k:
        raise DegenerateTemperatureError(
            f"{source.level_id}>{sink.level_id}: condensation {cond} degC vs "
            f"evaporation {eva} degC (gap {gap} K)"
        )
    return eta_carnot * (cond + KELVIN_OFFSET) / gap
