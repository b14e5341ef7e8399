"""Default technology, grid and fuel parameters of the case-study site."""

from __future__ import annotations

from flexopt.core_types import (
    BaseUnit,
    FuelParams,
    GridParams,
    HeatLevel,
    HPParams,
    TechId,
    TechParams,
    Well,
)

DISCOUNT_RATE = 0.10

COOL = HeatLevel("COOL_7_12", 7.0, 12.0)
SPACE = HeatLevel("SPACE_75_55", 75.0, 55.0)
PROC = HeatLevel("PROC_95_75", 95.0, 75.0)
WELL = Well("well", 10.0)

HEAT_LEVELS = (COOL, SPACE, PROC)

# existing site assets
PV_EXISTING_KWP = 307.0
PV_NEW_MAX_KWP = 2_770.0
CHP_EXISTING_KW_TH = 410.0
HOB_EXISTING_KW_TH = 1_620.0
COOLING_MACHINE_KW_COND = 1_147.0
HP_NEW_MAX_KW = 5_000.0
BEV_GROUP_KWH = 973.2

# TES component name per heat level
TES_BY_LEVEL = {
    PROC.level_id: "TES_95",
    SPACE.level_id: "TES_75",
    COOL.level_id: "TES_cool",
}


def default_hp() -> HPParams:
    return HPParams(eta_carnot=0.5, n_modes=2, sources=(COOL, WELL), sinks=(WELL, SPACE))


def default_grid() -> GridParams:
    return GridParams(p_buy_max=20_000.0, p_sell_max=20_000.0, c_addon=62.28, c_peak_fee=70.0)


def default_fuel() -> FuelParams:
    return FuelParams(c_ng=43.0, cef_ng=0.240, c_carbon_tax=55.0)


def default_catalog() -> dict[str, TechParams]:
    chp_el_cap = CHP_EXISTING_KW_TH * 0.40 / 0.45
    cat = {
        "CHP": TechParams(
            TechId.CHP, 589.46, BaseUnit.kW_el, 0.18, 25,
            {"elec": 0.40, "heat": 0.45}, cap_existing=chp_el_cap, cap_new_max=0.0,
        ),
        "Elc": TechParams(TechId.Elc, 1_295.0, BaseUnit.kW_el, 0.038, 14, {"h2": 0.71}),
        "FC": TechParams(TechId.FC, 1_684.0, BaseUnit.kW_el, 0.038, 14, {"elec": 0.50, "heat": 0.34}),
        "HOB": TechParams(
            TechId.HOB, 57.13, BaseUnit.kW_th, 0.18, 15, {"heat": 0.90},
            cap_existing=HOB_EXISTING_KW_TH, cap_new_max=0.0,
        ),
        "HP": TechParams(
            TechId.HP, 387.0, BaseUnit.kW_th, 0.025, 18,
            cap_existing=COOLING_MACHINE_KW_COND, cap_new_max=HP_NEW_MAX_KW,
        ),
        "P2H": TechParams(TechId.P2H, 100.0, BaseUnit.kW_th, 0.0, 30, {"heat": 0.90}),
        "PV": TechParams(
            TechId.PV, 460.0, BaseUnit.kW_p, 0.02, 25,
            cap_existing=PV_EXISTING_KWP, cap_new_max=PV_NEW_MAX_KWP,
        ),
        "WT": TechParams(TechId.WT, 1_682.0, BaseUnit.kW_p, 0.01, 20),
        "BES": TechParams(
            TechId.BES, 600.0, BaseUnit.kWh_el, 0.02, 20,
            c_rate_in=0.7, c_rate_out=0.7, eta_cycle=0.95, eta_time=0.99998,
        ),
        "H2S": TechParams(TechId.H2S, 10.0, BaseUnit.kWh_H2, 0.0, 23, eta_cycle=0.90),
    }
    for level_id, name in TES_BY_LEVEL.items():
        cat[name] = TechParams(
            TechId.TES, 28.71, BaseUnit.kWh_th, 0.001, 30,
            c_rate_in=0.5, c_rate_out=0.5, eta_cycle=1.0, eta_time=0.995, level=level_id,
        )
    return cat
