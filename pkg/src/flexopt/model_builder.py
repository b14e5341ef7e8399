"""Translate a dataset and one study cell into a :class:`ModelInstance`.

Buses balanced every hour: ``elec``, ``ng``, ``h2`` and the three heat
levels (process heat 95/75, space heat 75/55, cooling 7/12). Operating
costs and emissions of the modelled window are scaled to one year by
``opex_weight`` (8760 h divided by the window length).
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from flexopt import catalog as cat
from flexopt.core_types import (
    ContextConfig,
    DegenerateTemperatureError,
    HPParams,
    FlexoptError,
    MIN_TEMPERATURE_GAP_K,
    ScenarioConfig,
    TechId,
    TechParams,
    TimeSeries,
    annuity_factor,
    carnot_cop,
)
from flexopt.ingestion import HOURS_PER_YEAR, Dataset
from flexopt.model import EQ, GE, LE, ModelInstance

log = logging.getLogger(__name__)

ELEC, NG, H2 = "elec", "ng", "h2"
PROC, SPACE, COOL = cat.PROC.level_id, cat.SPACE.level_id, cat.COOL.level_id
BUSES = (ELEC, NG, H2, PROC, SPACE, COOL)

# carrier -> bus for each conversion technology: (input bus, {output carrier: bus})
CONVERSION_BUSES = {
    "CHP": (NG, {"elec": ELEC, "heat": PROC}),
    "HOB": (NG, {"heat": PROC}),
    "P2H": (ELEC, {"heat": PROC}),
    "Elc": (ELEC, {"h2": H2}),
    "FC": (H2, {"elec": ELEC, "heat": SPACE}),
}
# which flow the installed capacity limits: ("out", carrier) or ("in", None)
CAPACITY_REF = {
    "CHP": ("out", "elec"),
    "HOB": ("out", "heat"),
    "P2H": ("out", "heat"),
    "Elc": ("in", None),
    "FC": ("out", "elec"),
}
GAS_FIRED = ("CHP", "HOB")
CONVERSION_INVEST = ("PV", "WT", "HP", "P2H")
STORAGE_INVEST = ("BES", "TES_95", "TES_75", "TES_cool", "H2S", "Elc", "FC")
STORAGE_BUS = {"BES": ELEC, "H2S": H2, "TES_95": PROC, "TES_75": SPACE, "TES_cool": COOL}


class BuildError(FlexoptError):
    """The model cannot be built or is infeasible by construction."""


@dataclass(frozen=True)
class BuildOptions:
    opex_weight: float | None = None
    min_temperature_gap_k: float = MIN_TEMPERATURE_GAP_K


@dataclass
class BuildReport:
    var_counts: dict[str, int]
    con_counts: dict[str, int]
    n_vars: int
    n_cons: int
    n_binaries: int
    warnings: list[str] = field(default_factory=list)
    checks: dict[str, float] = field(default_factory=dict)


# -- helpers ----------------------------------------------------------------------


def _state(model: ModelInstance) -> dict:
    st = model.meta.setdefault("_build", {})
    st.setdefault("bus", defaultdict(list))
    st.setdefault("sell", [])
    st.setdefault("warnings", [])
    st.setdefault("checks", {})
    return st


def _bus(model: ModelInstance, bus: str, cols, coef) -> None:
    """Register ``coef * x[cols]`` as supply (positive) to ``bus``."""
    _state(model)["bus"][bus].append((cols, coef))


def _money_per_kw(model: ModelInstance) -> float:
    """EUR/MWh price times this factor gives the annualized cost per kW in one step."""
    return model.meta["opex_weight"] * model.meta["dt"] / 1000.0


def _invest_allowed(name: str, scenario: ScenarioConfig) -> bool:
    if name in CONVERSION_INVEST:
        return scenario.allow_conversion_invest
    if name in STORAGE_INVEST:
        return scenario.allow_storage_invest
    return False


def _add_capacity(model: ModelInstance, name: str, tp: TechParams, investable: bool) -> int:
    """New-capacity variable with annuity and RMI cost; returns its index."""
    ub = (np.inf if tp.cap_new_max is None else tp.cap_new_max) if investable else 0.0
    idx = model.add_vars("P_capn", name, ub=ub)
    a = annuity_factor(model.meta["discount_rate"], tp.life_years)
    model.add_objective(idx, a * tp.c_inv + tp.rmi_frac * tp.c_inv)
    model.meta["capacities"][name] = {
        "existing": tp.cap_existing,
        "annuity": a,
        "c_inv": tp.c_inv,
        "rmi_frac": tp.rmi_frac,
        "unit": tp.base_unit.value,
    }
    return idx


# -- blocks -----------------------------------------------------------------------


def add_grid_block(model: ModelInstance) -> None:
    """Real-time tariff purchase, annual peak fee and spot-price feed-in."""
    T = model.meta["T"]
    g = model.meta["grid"]
    prices = model.meta["prices"]
    f = _money_per_kw(model)
    buy = model.add_vars("P_buy", "EG", size=T, ub=g.p_buy_max)
    sell = model.add_vars("P_sell", "EG", size=T, ub=g.p_sell_max)
    peak = model.add_vars("P_peak", "EG", ub=g.p_buy_max)
    model.add_rows("grid_peak", T, [(buy, 1.0), (peak, -1.0)], LE)
    model.add_objective(buy, f * (prices + g.c_addon))
    model.add_objective(peak, g.c_peak_fee)
    model.add_objective(sell, -f * prices)
    _bus(model, ELEC, buy, 1.0)
    # feed-in leaves straight from PV/WT (sell_link), bypassing the bus


def add_ng_block(model: ModelInstance) -> None:
    """Gas purchase at fuel price plus carbon tax on its emissions."""
    scenario: ScenarioConfig = model.meta["scenario"]
    if scenario.decarbonize:
        raise BuildError("natural gas block requested in a decarbonization scenario")
    T = model.meta["T"]
    fu = model.meta["fuel"]
    ng = model.add_vars("P_ng", "NG", size=T)
    model.add_objective(ng, _money_per_kw(model) * (fu.c_ng + fu.c_carbon_tax * fu.cef_ng))
    _bus(model, NG, ng, 1.0)


def add_conversion_block(model: ModelInstance, name: str, tech: TechParams, investable: bool) -> None:
    """Linear input-output conversion with one or two outputs."""
    if tech.tech_id.value not in CONVERSION_BUSES:
        raise BuildError(f"{name}: {tech.tech_id.value} is not a conversion technology")
    in_bus, outputs = CONVERSION_BUSES[tech.tech_id.value]
    T = model.meta["T"]
    dead = tech.cap_existing == 0.0 and (not investable or tech.cap_new_max == 0.0)
    ub = 0.0 if dead else np.inf
    p_in = model.add_vars("P_in", name, size=T, ub=ub)
    _bus(model, in_bus, p_in, -1.0)
    outs = {}
    for carrier, bus in outputs.items():
        eta = tech.efficiencies[carrier]
        p_out = model.add_vars("P_out", name, carrier, size=T, ub=ub)
        model.add_rows(f"conv_eta:{name}:{carrier}", T, [(p_out, 1.0), (p_in, -eta)], EQ)
        _bus(model, bus, p_out, 1.0)
        outs[carrier] = p_out
    capn = _add_capacity(model, name, tech, investable)
    side, carrier = CAPACITY_REF[tech.tech_id.value]
    ref = p_in if side == "in" else outs[carrier]
    model.add_rows(f"conv_cap:{name}", T, [(ref, 1.0), (capn, -1.0)], LE, tech.cap_existing)
    model.meta["conversions"][name] = {
        "in_bus": in_bus,
        "outputs": {c: (b, tech.efficiencies[c]) for c, b in outputs.items()},
        "cap_ref": (side, carrier),
    }


def hp_modes(hp: HPParams, scenario: ScenarioConfig | None = None, min_gap_k: float = MIN_TEMPERATURE_GAP_K):
    """Enumerate heat-pump modes ``source>sink`` with their COP.

    Pairs with identical source and sink are skipped; pairs below the
    temperature-gap floor are dropped with a warning string.
    """
    modes, warnings = {}, []
    for source in hp.sources:
        for sink in hp.sinks:
            if source.level_id == sink.level_id:
                continue
            name = f"{source.level_id}>{sink.level_id}"
            if scenario is not None and scenario.hp_modes is not None and name not in scenario.hp_modes:
                continue
            try:
                cop = carnot_cop(sink, source, hp.eta_carnot, min_gap_k)
            except DegenerateTemperatureError as exc:
                warnings.append(f"heat pump mode excluded: {exc}")
                continue
            modes[name] = {"source": source.level_id, "sink": sink.level_id, "cop": cop}
    return modes, warnings


def add_heat_pump_block(
    model: ModelInstance, tech: TechParams, hp: HPParams, scenario: ScenarioConfig, investable: bool
) -> None:
    """Mode-selecting heat pump; capacity counts on the condenser side."""
    modes, warnings = hp_modes(hp, scenario, model.meta["min_gap_k"])
    _state(model)["warnings"].extend(warnings)
    if not modes:
        raise BuildError("heat pump has no valid operating mode")
    T = model.meta["T"]
    q_max = tech.cap_existing + ((tech.cap_new_max or 0.0) if investable else 0.0)
    if investable and tech.cap_new_max is None:
        raise BuildError("heat pump needs a finite cap_new_max to bound the mode switch")
    capn = _add_capacity(model, "HP", tech, investable)
    qs, ys = [], []
    for name, mode in modes.items():
        q = model.add_vars("Q_hp", "HP", name, size=T)
        y = model.add_vars("Y_hp", "HP", name, size=T, binary=True)
        model.add_rows(f"hp_mode_bound:{name}", T, [(q, 1.0), (y, -q_max)], LE)
        cop = mode["cop"]
        _bus(model, ELEC, q, -1.0 / cop)
        if mode["sink"] in (PROC, SPACE, COOL):
            _bus(model, mode["sink"], q, 1.0)
        if mode["source"] == COOL:
            _bus(model, COOL, q, 1.0 - 1.0 / cop)
        qs.append(q)
        ys.append(y)
    model.add_rows("hp_mode_count", T, [(y, 1.0) for y in ys], LE, float(hp.n_modes))
    model.add_rows("hp_cap", T, [(q, 1.0) for q in qs] + [(capn, -1.0)], LE, tech.cap_existing)
    model.meta["hp_modes"] = modes


def add_vres_block(model: ModelInstance, name: str, tech: TechParams, profile: TimeSeries, investable: bool) -> None:
    """Profile-driven generation split into own consumption and feed-in."""
    T = model.meta["T"]
    if len(profile) != T:
        raise BuildError(f"{name}: profile length {len(profile)} differs from horizon {T}")
    prof = profile.values
    oc = model.add_vars("P_oc", name, size=T)
    fi = model.add_vars("P_fi", name, size=T)
    capn = _add_capacity(model, name, tech, investable)
    model.add_rows(f"vres_avail:{name}", T, [(oc, 1.0), (fi, 1.0), (capn, -prof)], LE, prof * tech.cap_existing)
    _bus(model, ELEC, oc, 1.0)
    _state(model)["sell"].append(fi)
    if tech.tech_id == TechId.WT:
        model.add_objective(oc, _money_per_kw(model) * model.meta["grid"].c_addon)
    model.meta["vres"][name] = prof


def add_storage_block(model: ModelInstance, name: str, tech: TechParams, investable: bool) -> None:
    """State-of-charge recursion with cycle and standing losses.

    The cycle efficiency is split evenly between charging and discharging.
    """
    T, dt = model.meta["T"], model.meta["dt"]
    bus = STORAGE_BUS[name]
    eta = math.sqrt(tech.eta_cycle)
    keep = tech.eta_time
    k = tech.k_ini
    capx = tech.cap_existing
    p_in = model.add_vars("P_in", name, size=T)
    p_out = model.add_vars("P_out", name, size=T)
    soc = model.add_vars("E", name, size=T)
    capn = _add_capacity(model, name, tech, investable)
    prev = np.concatenate(([capn], soc[:-1]))
    prev_coef = np.full(T, -keep)
    prev_coef[0] = -keep * k
    model.add_rows(
        f"sto_soc:{name}",
        T,
        [(soc, 1.0), (prev, prev_coef), (p_in, -dt * eta), (p_out, dt / eta)],
        EQ,
        np.where(np.arange(T) == 0, keep * k * capx, 0.0),
    )
    if tech.c_rate_in is not None:
        model.add_rows(f"sto_cin:{name}", T, [(p_in, 1.0), (capn, -tech.c_rate_in)], LE, tech.c_rate_in * capx)
    if tech.c_rate_out is not None:
        model.add_rows(f"sto_cout:{name}", T, [(p_out, 1.0), (capn, -tech.c_rate_out)], LE, tech.c_rate_out * capx)
    model.add_rows(f"sto_emax:{name}", T, [(soc, 1.0), (capn, -1.0)], LE, capx)
    model.add_row(f"sto_terminal:{name}", [(soc[-1], 1.0), (capn, -k)], EQ, k * capx)
    _bus(model, bus, p_out, 1.0)
    _bus(model, bus, p_in, -1.0)
    model.meta["storages"][name] = {"bus": bus, "eta_ch": eta, "eta_dis": eta, "eta_time": keep, "k_ini": k}


def bev_feasibility(group, dt: float = 1.0) -> tuple[float, list[int]]:
    """Greedy max-charge simulation of one vehicle group.

    Returns the smallest SOC margin above the empty limit in kWh and the hours
    where even maximal charging cannot cover the drive energy or the terminal
    state of charge.
    """
    E = group.e_cap
    eta = math.sqrt(group.eta_cycle)
    lo, hi = group.k_empty * E, group.k_full * E
    soc = group.k_ini * E
    margin, bad = math.inf, []
    avail, drive = group.avail.values, group.drive.values
    for t in range(len(avail)):
        soc = group.eta_time * soc + dt * (eta * avail[t] * group.lambda_in * E - drive[t] / eta)
        soc = min(soc, hi)
        margin = min(margin, soc - lo)
        if soc < lo - 1e-9:
            bad.append(t)
            soc = lo
    if soc < group.k_ini * E - 1e-9:
        bad.append(len(avail) - 1)
    return margin, bad


def add_bev_block(model: ModelInstance, groups, scenario: ScenarioConfig) -> None:
    """Vehicle batteries with exogenous driving, optional V2X and the
    conventional-charging penalty when smart charging is off."""
    T, dt = model.meta["T"], model.meta["dt"]
    t_index = np.arange(T, dtype=float)
    for g in groups:
        margin, bad = bev_feasibility(g, dt)
        if bad:
            raise BuildError(f"BEV group {g.group_id}: drive energy infeasible at hours {bad[:20]}")
        _state(model)["checks"][f"bev_margin_kwh:{g.group_id}"] = margin
        E = g.e_cap
        eta = math.sqrt(g.eta_cycle)
        avail = g.avail.values
        p_in = model.add_vars("P_in", "BEV", g.group_id, size=T, ub=avail * g.lambda_in * E)
        soc = model.add_vars("E", "BEV", g.group_id, size=T, lb=g.k_empty * E, ub=g.k_full * E)
        # t = 0 starts from the initial SOC, which enters the right-hand side
        prev = np.concatenate(([soc[0]], soc[:-1]))
        prev_coef = np.full(T, -g.eta_time)
        prev_coef[0] = 0.0
        terms = [(soc, 1.0), (prev, prev_coef), (p_in, -dt * eta)]
        rhs = -dt * g.drive.values / eta
        rhs[0] += g.eta_time * g.k_ini * E
        if scenario.z_v2x:
            v2x = model.add_vars("P_v2x", "BEV", g.group_id, size=T, ub=avail * g.lambda_v2x * E)
            terms.append((v2x, dt / eta))
            _bus(model, ELEC, v2x, 1.0)
        model.add_rows(f"bev_soc:{g.group_id}", T, terms, EQ, rhs)
        model.add_row(f"bev_terminal:{g.group_id}", [(soc[-1], 1.0)], EQ, g.k_ini * E)
        _bus(model, ELEC, p_in, -1.0)
        if not scenario.z_smart:
            model.add_objective(p_in, t_index)
            model.meta["penalty"].append((p_in, t_index))
        model.meta["bev"][g.group_id] = {"eta": eta, "drive": g.drive.values, "e_start": g.k_ini * E}


def add_emissions_and_dac(model: ModelInstance) -> None:
    """Annual emission balance with purchasable carbon removal."""
    f = _money_per_kw(model)
    scenario, context = model.meta["scenario"], model.meta["context"]
    ce = model.add_vars("CE", lb=-np.inf)
    dac = model.add_vars("CE_dac")
    terms = [(ce, 1.0), (dac, 1.0), (model.var("P_buy", "EG"), -f * model.meta["cefs"])]
    if model.has("P_ng", "NG"):
        terms.append((model.var("P_ng", "NG"), -f * model.meta["fuel"].cef_ng))
    model.add_row("ce_balance", terms, EQ, 0.0)
    model.add_objective(dac, context.c_dac)
    if scenario.decarbonize:
        model.add_row("ce_net_zero", [(ce, 1.0)], EQ, 0.0)


def add_heat_downgrading(model: ModelInstance) -> None:
    """Lossless transfer from process heat (95/75) down to space heat (75/55)."""
    q = model.add_vars("Q_hd", "HD", size=model.meta["T"])
    _bus(model, PROC, q, -1.0)
    _bus(model, SPACE, q, 1.0)


def fix_chp_to_reference(model: ModelInstance, ref_dispatch: TimeSeries | np.ndarray | None) -> None:
    """Pin hourly CHP electrical output to the reference-scenario dispatch."""
    if ref_dispatch is None:
        raise BuildError("CHP fixing requested but no reference dispatch was given")
    if not model.has("P_out", "CHP", "elec"):
        raise BuildError("model has no CHP to fix")
    ref = ref_dispatch.values if isinstance(ref_dispatch, TimeSeries) else np.asarray(ref_dispatch, float)
    T = model.meta["T"]
    if ref.shape != (T,):
        raise BuildError(f"reference dispatch has length {ref.size}, expected {T}")
    cap = model.meta["capacities"]["CHP"]["existing"]
    ref = np.clip(ref, 0.0, cap)
    model.add_rows("chp_fixed", T, [(model.var("P_out", "CHP", "elec"), 1.0)], EQ, ref)


def close_buses(model: ModelInstance) -> None:
    """Turn the registered supply terms into hourly balance rows."""
    st = _state(model)
    T = model.meta["T"]
    demand = model.meta["demand"]
    for bus in BUSES:
        terms = st["bus"].get(bus, [])
        rhs = demand.get(bus, np.zeros(T))
        if not terms:
            if np.any(rhs > 0):
                raise BuildError(f"bus {bus} has demand but no supplying technology")
            continue
        model.add_rows(f"bus:{bus}", T, terms, EQ, rhs)
    sell = model.var("P_sell", "EG")
    model.add_rows("sell_link", T, [(sell, 1.0)] + [(fi, -1.0) for fi in st["sell"]], EQ if st["sell"] else LE, 0.0)


def _components(dataset: Dataset, scenario: ScenarioConfig) -> dict[str, bool]:
    """Components present in this cell mapped to whether they may be extended."""
    present = {}
    for name, tp in dataset.catalog.items():
        investable = _invest_allowed(name, scenario)
        if name in GAS_FIRED and not scenario.ng_allowed:
            continue
        if name in STORAGE_INVEST and not scenario.allow_storage_invest:
            continue
        if tp.cap_existing <= 0 and not investable:
            continue
        present[name] = investable
    return present


def init_model(
    name: str,
    scenario: ScenarioConfig,
    context: ContextConfig,
    cefs,
    demand: dict[str, np.ndarray],
    *,
    grid,
    fuel,
    dt: float = 1.0,
    opex_weight: float = 1.0,
    discount_rate: float = cat.DISCOUNT_RATE,
    min_gap_k: float = MIN_TEMPERATURE_GAP_K,
) -> ModelInstance:
    """Empty model carrying the shared data the blocks read from ``meta``.

    ``demand`` maps bus ids to load series; missing buses have none.
    """
    T = len(context.price_series)
    demand = {bus: np.asarray(d, dtype=float) for bus, d in demand.items()}
    for bus, d in demand.items():
        if bus not in BUSES or d.shape != (T,):
            raise BuildError(f"demand for {bus!r} must be a series of length {T} on a known bus")
    model = ModelInstance(name)
    model.meta.update(
        T=T,
        dt=dt,
        opex_weight=opex_weight,
        discount_rate=discount_rate,
        min_gap_k=min_gap_k,
        scenario=scenario,
        context=context,
        grid=grid,
        fuel=fuel,
        prices=context.price_series.values,
        cefs=np.asarray(cefs, dtype=float),
        capacities={},
        conversions={},
        storages={},
        vres={},
        bev={},
        hp_modes={},
        penalty=[],
        demand=demand,
        proc_bus=PROC,
        space_bus=SPACE,
        cool_bus=COOL,
    )
    _state(model)
    return model


def build_model(
    dataset: Dataset,
    scenario: ScenarioConfig,
    context: ContextConfig,
    ref_dispatch: TimeSeries | np.ndarray | None = None,
    options: BuildOptions | None = None,
) -> tuple[ModelInstance, BuildReport]:
    """Assemble the full MILP of one (scenario, context) cell."""
    options = options or BuildOptions()
    T, dt = dataset.horizon, dataset.dt
    if len(context.price_series) != T:
        raise BuildError(f"context {context.name}: price series length differs from horizon {T}")
    weight = options.opex_weight if options.opex_weight is not None else HOURS_PER_YEAR / (T * dt)
    demand = {
        ELEC: dataset.edem.values,
        PROC: dataset.heat_dem[PROC].values,
        SPACE: dataset.heat_dem[SPACE].values,
        COOL: dataset.heat_dem[COOL].values,
    }
    model = init_model(
        f"{context.name}/{scenario.name}",
        scenario,
        context,
        dataset.cefs.values,
        demand,
        grid=dataset.grid,
        fuel=dataset.fuel,
        dt=dt,
        opex_weight=weight,
        discount_rate=dataset.discount_rate,
        min_gap_k=options.min_temperature_gap_k,
    )
    st = _state(model)

    comps = _components(dataset, scenario)
    add_grid_block(model)
    if scenario.ng_allowed and any(n in comps for n in GAS_FIRED):
        add_ng_block(model)
    for name in ("CHP", "HOB", "P2H", "Elc", "FC"):
        if name in comps:
            add_conversion_block(model, name, dataset.catalog[name], comps[name])
    if "HP" in comps:
        add_heat_pump_block(model, dataset.catalog["HP"], dataset.hp, scenario, comps["HP"])
    for name in ("PV", "WT"):
        if name in comps:
            profile = dataset.pv_profile if name == "PV" else dataset.wt_profile
            add_vres_block(model, name, dataset.catalog[name], profile, comps[name])
    for name in ("BES", "TES_95", "TES_75", "TES_cool", "H2S"):
        if name in comps:
            add_storage_block(model, name, dataset.catalog[name], comps[name])
    if dataset.bev_groups:
        add_bev_block(model, dataset.bev_groups, scenario)
    add_emissions_and_dac(model)
    if st["bus"].get(PROC):
        add_heat_downgrading(model)
    close_buses(model)
    if scenario.chp_fixed_to_ref:
        fix_chp_to_reference(model, ref_dispatch)

    var_counts, con_counts = model.block_counts()
    report = BuildReport(
        var_counts=var_counts,
        con_counts=con_counts,
        n_vars=model.n_vars,
        n_cons=model.n_cons,
        n_binaries=model.n_binaries,
        warnings=list(st["warnings"]),
        checks=dict(st["checks"]),
    )
    for w in report.warnings:
        log.warning("%s: %s", model.name, w)
    return model, report
