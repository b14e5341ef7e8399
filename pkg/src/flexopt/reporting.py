"""Annual balances, energy-flow tables and study emission.

Every figure here is recomputed from variable values and input data; the
solver's objective is only used as a cross-check.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from flexopt.core_types import FlexoptError
from flexopt.model import ModelInstance
from flexopt.solver import SolveResult, verify_solution

SCHEMA_VERSION = "flexopt-study/1"
TABLE_KINDS = ("cells", "capacities", "metrics", "pareto", "flows", "heatmap")


class ReportError(FlexoptError):
    pass


@dataclass(frozen=True)
class AnnualReport:
    """Annualized costs (EUR/yr), emissions (t/yr) and energy (MWh/yr) of one cell."""

    tac: float
    capex: float
    opex: float
    opex_rmi: float
    opex_eg_buy: float
    opex_eg_sell_revenue: float
    opex_eg_energy_fee: float
    opex_eg_peak_fee: float
    opex_wt_fee: float
    opex_ng: float
    opex_ng_tax: float
    opex_dac: float
    penalty: float
    ce_scope1: float
    ce_scope2: float
    ce_removed: float
    ce_net: float
    peak_buy: float
    volume_buy: float
    volume_sell: float
    hp_mode_energy: dict[str, float] = field(default_factory=dict)
    new_capacities: dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AnnualReport":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


class _Values:
    """Variable lookup by block key; absent blocks read as zeros."""

    def __init__(self, model: ModelInstance, x: np.ndarray) -> None:
        self.model, self.x = model, x

    def __call__(self, symbol: str, tech: str | None = None, mode: str | None = None):
        if not self.model.has(symbol, tech, mode):
            return np.zeros(self.model.meta["T"])
        return self.x[self.model.var(symbol, tech, mode)]

    def scalar(self, symbol: str, tech: str | None = None) -> float:
        if not self.model.has(symbol, tech):
            return 0.0
        return float(self.x[self.model.var(symbol, tech)])


def _fsum(a) -> float:
    return math.fsum(np.asarray(a, dtype=float).ravel())


def annual_balances(model: ModelInstance, result: SolveResult, dataset=None, *, verify: bool = True) -> AnnualReport:
    """Recompute costs, emissions and volumes of a solved cell."""
    if result.x is None:
        raise ReportError(f"{model.name}: no solution to report ({result.status.value})")
    if verify:
        check = verify_solution(model, result)
        if not check.passed():
            raise ReportError(
                f"{model.name}: solution failed verification "
                f"(violation {check.max_constraint_violation:.3g} at {check.worst_constraint})"
            )
    meta = model.meta
    v = _Values(model, np.asarray(result.x, dtype=float))
    f = meta["opex_weight"] * meta["dt"] / 1000.0
    grid, fuel = meta["grid"], meta["fuel"]
    prices, cefs = meta["prices"], meta["cefs"]
    ctx = meta["context"]
    if dataset is not None and not np.array_equal(dataset.cefs.values, cefs):
        raise ReportError("dataset does not match the model's CEF series")

    capex = rmi = 0.0
    new_caps = {}
    for name, cap in meta["capacities"].items():
        capn = v.scalar("P_capn", name)
        new_caps[name] = capn
        capex += cap["annuity"] * cap["c_inv"] * capn
        rmi += cap["rmi_frac"] * cap["c_inv"] * capn

    buy, sell = v("P_buy", "EG"), v("P_sell", "EG")
    ng = v("P_ng", "NG")
    peak = v.scalar("P_peak", "EG")
    dac = v.scalar("CE_dac")
    parts = dict(
        opex_rmi=rmi,
        opex_eg_buy=f * _fsum(prices * buy),
        opex_eg_sell_revenue=f * _fsum(prices * sell),
        opex_eg_energy_fee=f * grid.c_addon * _fsum(buy),
        opex_eg_peak_fee=grid.c_peak_fee * peak,
        opex_wt_fee=f * grid.c_addon * _fsum(v("P_oc", "WT")),
        opex_ng=f * fuel.c_ng * _fsum(ng),
        opex_ng_tax=f * fuel.c_carbon_tax * fuel.cef_ng * _fsum(ng),
        opex_dac=ctx.c_dac * dac,
    )
    opex = (
        parts["opex_rmi"]
        + parts["opex_eg_buy"]
        - parts["opex_eg_sell_revenue"]
        + parts["opex_eg_energy_fee"]
        + parts["opex_eg_peak_fee"]
        + parts["opex_wt_fee"]
        + parts["opex_ng"]
        + parts["opex_ng_tax"]
        + parts["opex_dac"]
    )
    penalty = math.fsum(_fsum(coef * v.x[cols]) for cols, coef in meta["penalty"])
    scope1 = f * fuel.cef_ng * _fsum(ng)
    scope2 = f * _fsum(cefs * buy)
    hp = {name: f * _fsum(v("Q_hp", "HP", name)) for name in meta["hp_modes"]}
    return AnnualReport(
        tac=capex + opex,
        capex=capex,
        opex=opex,
        **parts,
        penalty=penalty,
        ce_scope1=scope1,
        ce_scope2=scope2,
        ce_removed=dac,
        ce_net=scope1 + scope2 - dac,
        peak_buy=float(buy.max()) if buy.size else 0.0,
        volume_buy=f * _fsum(buy),
        volume_sell=f * _fsum(sell),
        hp_mode_energy=hp,
        new_capacities=new_caps,
    )


# -- energy flows -----------------------------------------------------------------

BOUNDARY_NODES = ("EG", "NG", "PV", "WT", "feed-in", "losses", "ambient", "well", "drive")


@dataclass
class FlowTable:
    """Annual energy flows ``(source, target, MWh/yr)``."""

    rows: list[tuple[str, str, float]] = field(default_factory=list)

    def add(self, src: str, dst: str, mwh: float, eps: float = 1e-9) -> None:
        if mwh < 0:
            src, dst, mwh = dst, src, -mwh
        if mwh > eps:
            self.rows.append((src, dst, float(mwh)))

    def nodes(self) -> list[str]:
        return sorted({n for r in self.rows for n in r[:2]})

    def inflow(self, node: str) -> float:
        return math.fsum(m for _, d, m in self.rows if d == node)

    def outflow(self, node: str) -> float:
        return math.fsum(m for s, _, m in self.rows if s == node)

    def imbalance(self, node: str) -> float:
        return self.inflow(node) - self.outflow(node)

    def inner_nodes(self) -> list[str]:
        return [n for n in self.nodes() if n not in BOUNDARY_NODES and not n.startswith("demand:")]


def flow_table(model: ModelInstance, result: SolveResult) -> FlowTable:
    """Sankey-ready flows through buses and technologies.

    Cooling is drawn as heat: the cooling load flows into the cooling bus and
    is removed by the heat pump or the cold storage. Storage losses include
    the (zero by construction) change of stored energy over the window.
    """
    if result.x is None:
        raise ReportError(f"{model.name}: no solution")
    meta = model.meta
    v = _Values(model, np.asarray(result.x, dtype=float))
    f = meta["opex_weight"] * meta["dt"] / 1000.0
    dem = meta["demand"]
    ft = FlowTable()

    def e(a) -> float:
        return f * _fsum(a)

    ft.add("EG", "elec", e(v("P_buy", "EG")))
    ft.add("NG", "ng", e(v("P_ng", "NG")))
    for name in meta["vres"]:
        ft.add(name, "elec", e(v("P_oc", name)))
        ft.add(name, "feed-in", e(v("P_fi", name)))
    for name, conv in meta["conversions"].items():
        p_in = e(v("P_in", name))
        ft.add(conv["in_bus"], name, p_in)
        out = 0.0
        for carrier, (bus, _eta) in conv["outputs"].items():
            q = e(v("P_out", name, carrier))
            ft.add(name, bus, q)
            out += q
        ft.add(name, "losses", p_in - out)
    if meta["hp_modes"]:
        for name, mode in meta["hp_modes"].items():
            q = v("Q_hp", "HP", name)
            cop = mode["cop"]
            ft.add("elec", "HP", e(q / cop))
            ft.add(mode["source"], "HP", e(q * (1.0 - 1.0 / cop)))
            ft.add("HP", mode["sink"], e(q))
    for name, sto in meta["storages"].items():
        bus = sto["bus"]
        p_in, p_out = e(v("P_in", name)), e(v("P_out", name))
        soc = v("E", name)
        start = sto["k_ini"] * (meta["capacities"][name]["existing"] + v.scalar("P_capn", name))
        stock = f / meta["dt"] * (soc[-1] - start)
        if bus == meta["cool_bus"]:
            ft.add(bus, name, p_out)
            ft.add(name, bus, p_in)
            ft.add("ambient", name, p_in - p_out - stock)
        else:
            ft.add(bus, name, p_in)
            ft.add(name, bus, p_out)
            ft.add(name, "losses", p_in - p_out - stock)
    for gid, bev in meta["bev"].items():
        p_in, v2x = e(v("P_in", "BEV", gid)), e(v("P_v2x", "BEV", gid))
        drive = e(bev["drive"])
        soc = v("E", "BEV", gid)
        stock = f / meta["dt"] * (soc[-1] - bev["e_start"])
        ft.add("elec", "BEV", p_in)
        ft.add("BEV", "elec", v2x)
        ft.add("BEV", "drive", drive)
        ft.add("BEV", "losses", p_in - v2x - drive - stock)
    ft.add(meta["proc_bus"], meta["space_bus"], e(v("Q_hd", "HD")))
    for bus, load in dem.items():
        if bus == meta["cool_bus"]:
            ft.add(f"demand:{bus}", bus, e(load))
        else:
            ft.add(bus, f"demand:{bus}", e(load))
    return ft


# -- study emission -----------------------------------------------------------------


def _study_dict(study) -> dict[str, Any]:
    d = study if isinstance(study, dict) else study.to_dict()
    if d.get("schema") != SCHEMA_VERSION:
        raise ReportError(f"unsupported study schema {d.get('schema')!r}")
    return d


def study_tables(study) -> dict[str, list[dict[str, Any]]]:
    """Long-format tables derived from a study, one list of records per kind."""
    d = _study_dict(study)
    tables: dict[str, list[dict[str, Any]]] = {k: [] for k in TABLE_KINDS}
    for cell in d["cells"]:
        key = {"context": cell["context"], "scenario": cell["scenario"]}
        rep = cell.get("report") or {}
        tables["cells"].append(
            {
                **key,
                "status": cell["status"],
                "objective": cell.get("objective"),
                "tac": rep.get("tac"),
                "capex": rep.get("capex"),
                "opex": rep.get("opex"),
                "ce_net": rep.get("ce_net"),
                "peak_buy": rep.get("peak_buy"),
                "volume_buy": rep.get("volume_buy"),
                "runtime_s": cell.get("runtime_s"),
                "error": cell.get("error"),
            }
        )
        for tech, cap in sorted((rep.get("new_capacities") or {}).items()):
            tables["capacities"].append({**key, "tech": tech, "new_capacity": cap})
        for metric, value in (cell.get("metrics") or {}).items():
            tables["metrics"].append({**key, "metric": metric, "value": value})
        for src, dst, mwh in cell.get("flows") or []:
            tables["flows"].append({**key, "source": src, "target": dst, "mwh": mwh})
        for t, value in enumerate(cell.get("purchase") or []):
            tables["heatmap"].append({**key, "hour": t, "p_buy_kw": value})
    tables["pareto"] = [dict(p) for p in d.get("pareto", [])]
    return tables


def emit(study, fmt: str, path: str | Path) -> Path:
    """Write a study as one JSON document or as a directory of CSV tables."""
    path = Path(path)
    d = _study_dict(study)
    try:
        if fmt == "json":
            if path.parent and not path.parent.exists():
                path.parent.mkdir(parents=True)
            path.write_text(json.dumps(d, indent=1, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
        elif fmt == "csv-dir":
            path.mkdir(parents=True, exist_ok=True)
            (path / "schema.txt").write_text(SCHEMA_VERSION + "\n", encoding="utf-8")
            for kind, records in study_tables(d).items():
                _write_csv(path / f"{kind}.csv", records)
        else:
            raise ReportError(f"unknown format {fmt!r}; use json or csv-dir")
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc}") from exc
    return path


def _write_csv(path: Path, records: list[dict[str, Any]]) -> None:
    cols: list[str] = []
    for r in records:
        cols.extend(k for k in r if k not in cols)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols or ["empty"], lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def load_study_json(path: str | Path) -> dict[str, Any]:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ReportError(f"cannot read study {path}: {exc}") from exc
    return _study_dict(d)


def format_report(rep: AnnualReport) -> str:
    """Human-readable summary with 2-decimal money."""
    lines = [
        f"TAC      {rep.tac:14,.2f} EUR/yr",
        f"  CapEx  {rep.capex:14,.2f}",
        f"  OpEx   {rep.opex:14,.2f}",
        f"CE net   {rep.ce_net:14,.2f} t/yr (scope1 {rep.ce_scope1:,.2f}, scope2 {rep.ce_scope2:,.2f}, removed {rep.ce_removed:,.2f})",
        f"Peak buy {rep.peak_buy:14,.2f} kW",
    ]
    return "\n".join(lines)
