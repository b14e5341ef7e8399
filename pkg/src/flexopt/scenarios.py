"""Scenario and context presets and the study runner.

A study solves every (context, scenario) cell. Cells with the CHP pinned to
the reference dispatch wait for the REF cell of their context; everything
else runs in the first stage.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from flexopt.core_types import ContextConfig, FlexoptError, ScenarioConfig
from flexopt.ingestion import Dataset, scale_prices, synthetic_parameters
from flexopt.metrics import MetricSet, decarbonization_cost, metric_set, pair_metrics
from flexopt.model_builder import BuildError, BuildOptions, build_model
from flexopt.reporting import SCHEMA_VERSION, AnnualReport, ReportError, annual_balances, flow_table
from flexopt.solver import SolveOptions, SolveResult, SolverError, solve, verify_solution

log = logging.getLogger(__name__)

REF = "REF"
FLEX_LEVELS = ("noFlex", "someFlex", "fullFlex")
PLAIN_SCENARIOS = (REF,) + FLEX_LEVELS
DECARB_SCENARIOS = tuple(f"{s}_d" for s in FLEX_LEVELS)
SCENARIO_NAMES = PLAIN_SCENARIOS + DECARB_SCENARIOS
CONTEXT_NAMES = ("c_base", "c_strict", "c_scaled")
C_DAC_BASE = 222.0
C_DAC_STRICT = 10_000.0

REF_HP_MODES = frozenset({"COOL_7_12>well"})
NOFLEX_HP_MODES = frozenset({"COOL_7_12>well", "well>SPACE_75_55"})


class StudyError(FlexoptError):
    pass


def scenario_presets() -> list[ScenarioConfig]:
    ref = ScenarioConfig(REF, False, False, False, False, 0, 0, False, REF_HP_MODES)
    no = ScenarioConfig("noFlex", True, False, False, False, 0, 0, True, NOFLEX_HP_MODES)
    some = ScenarioConfig("someFlex", True, True, False, False, 1, 1, False, None)
    full = ScenarioConfig("fullFlex", True, True, True, False, 1, 1, False, None)
    decarb = [replace(s, name=f"{s.name}_d", decarbonize=True, chp_fixed_to_ref=False) for s in (no, some, full)]
    return [ref, no, some, full, *decarb]


def context_presets(base_prices, target_mean: float | None = None, target_std: float | None = None) -> list[ContextConfig]:
    if target_mean is None or target_std is None:
        sc = synthetic_parameters()["scaling"]
        target_mean = sc["mean"] if target_mean is None else target_mean
        target_std = sc["std"] if target_std is None else target_std
    return [
        ContextConfig("c_base", C_DAC_BASE, base_prices),
        ContextConfig("c_strict", C_DAC_STRICT, base_prices),
        ContextConfig("c_scaled", C_DAC_BASE, scale_prices(base_prices, target_mean, target_std)),
    ]


def baseline_of(name: str) -> str:
    return "noFlex_d" if name.endswith("_d") else "noFlex"


# -- cells ----------------------------------------------------------------------------


@dataclass
class CellResult:
    context: str
    scenario: str
    status: str
    objective: float | None = None
    gap: float | None = None
    runtime_s: float = 0.0
    backend: str = ""
    report: AnnualReport | None = None
    metrics: MetricSet | None = None
    flows: list = field(default_factory=list)
    purchase: list = field(default_factory=list)
    chp_dispatch: list | None = None
    max_violation: float | None = None
    objective_rel_diff: float | None = None
    n_vars: int = 0
    n_cons: int = 0
    n_binaries: int = 0
    n_ng_vars: int = 0
    warnings: list = field(default_factory=list)
    error: str | None = None
    solve_result: SolveResult | None = field(default=None, repr=False, compare=False)

    @property
    def ok(self) -> bool:
        return self.error is None and self.report is not None

    def to_dict(self) -> dict[str, Any]:
        d = {k: v for k, v in asdict(self).items() if k not in ("solve_result",)}
        d["report"] = self.report.as_dict() if self.report else None
        d["metrics"] = self.metrics.as_dict() if self.metrics else None
        d["flows"] = [list(r) for r in self.flows]
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CellResult":
        d = dict(d)
        if d.get("report") is not None:
            d["report"] = AnnualReport.from_dict(d["report"])
        if d.get("metrics") is not None:
            d["metrics"] = MetricSet(**d["metrics"])
        d["flows"] = [tuple(r) for r in d.get("flows", [])]
        return cls(**d)


def solve_cell(
    dataset: Dataset,
    scenario: ScenarioConfig,
    context: ContextConfig,
    ref_dispatch=None,
    solve_options: SolveOptions | None = None,
    backend: str | None = None,
    build_options: BuildOptions | None = None,
    keep_solution: bool = True,
) -> CellResult:
    """Build, solve, verify and report one cell; failures land in ``error``."""
    cell = CellResult(context.name, scenario.name, status="error")
    t0 = time.perf_counter()
    try:
        model, rep = build_model(dataset, scenario, context, ref_dispatch, build_options)
        cell.n_vars, cell.n_cons, cell.n_binaries = rep.n_vars, rep.n_cons, rep.n_binaries
        cell.n_ng_vars = sum(b.size for b in model.blocks("P_ng"))
        cell.warnings = list(rep.warnings)
        res = solve(model, solve_options, backend)
        cell.status, cell.gap, cell.backend = res.status.value, res.gap, res.backend
        if not res.status.has_solution:
            cell.error = f"solver status {res.status.value}"
            return cell
        chk = verify_solution(model, res)
        cell.max_violation = chk.max_constraint_violation
        cell.objective_rel_diff = chk.objective_rel_diff
        cell.report = annual_balances(model, res, dataset)
        cell.objective = res.objective
        buy = res.x[model.var("P_buy", "EG")]
        cell.purchase = buy.tolist()
        cell.metrics = metric_set(context.price_series, dataset.cefs, buy, dataset.dt)
        cell.flows = flow_table(model, res).rows
        if model.has("P_out", "CHP", "elec"):
            cell.chp_dispatch = res.x[model.var("P_out", "CHP", "elec")].tolist()
        if keep_solution:
            cell.solve_result = res
    except (BuildError, SolverError, ReportError) as exc:
        cell.error = f"{type(exc).__name__}: {exc}"
    finally:
        cell.runtime_s = time.perf_counter() - t0
    log.info("%s/%s: %s in %.1fs", context.name, scenario.name, cell.error or cell.status, cell.runtime_s)
    return cell


# -- study ------------------------------------------------------------------------------


@dataclass(frozen=True)
class StudyOptions:
    solve: SolveOptions = field(default_factory=SolveOptions)
    backend: str | None = None
    jobs: int = 1
    executor: str = "process"
    build: BuildOptions = field(default_factory=BuildOptions)


@dataclass
class StudyResult:
    contexts: list[dict[str, Any]]
    scenarios: list[dict[str, Any]]
    cells: dict[tuple[str, str], CellResult]
    horizon: int
    dt: float
    notes: list[str] = field(default_factory=list)

    def cell(self, context: str, scenario: str) -> CellResult:
        return self.cells[(context, scenario)]

    def context_names(self) -> list[str]:
        return [c["name"] for c in self.contexts]

    def scenario_names(self) -> list[str]:
        return [s["name"] for s in self.scenarios]

    @property
    def all_ok(self) -> bool:
        return all(c.ok for c in self.cells.values())

    def tac(self, context: str, scenario: str) -> float | None:
        c = self.cells.get((context, scenario))
        return c.report.tac if c is not None and c.report is not None else None

    def pair_metrics(self) -> list[dict[str, Any]]:
        out = []
        for (ctx, name), cell in self.cells.items():
            base = self.cells.get((ctx, baseline_of(name)))
            if name == REF or base is None or cell.metrics is None or base.metrics is None:
                continue
            pm = pair_metrics(base.metrics, cell.metrics)
            out.append({"context": ctx, "scenario": name, "baseline": baseline_of(name), **asdict(pm)})
        return out

    def decarbonization_costs(self) -> list[dict[str, Any]]:
        out = []
        for ctx in self.context_names():
            for level in FLEX_LEVELS:
                a, b = self.tac(ctx, level), self.tac(ctx, f"{level}_d")
                if a is None or b is None:
                    continue
                out.append({"context": ctx, "flex_level": level, "c_decarb": decarbonization_cost(a, b)})
        return out

    def pareto_points(self, context: str) -> list[dict[str, Any]]:
        return pareto_points(self, context)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": SCHEMA_VERSION,
            "horizon": self.horizon,
            "dt": self.dt,
            "contexts": self.contexts,
            "scenarios": self.scenarios,
            "cells": [c.to_dict() for c in self.cells.values()],
            "pair_metrics": self.pair_metrics(),
            "decarbonization_costs": self.decarbonization_costs(),
            "pareto": [p for ctx in self.context_names() for p in pareto_points(self, ctx)],
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "StudyResult":
        if d.get("schema") != SCHEMA_VERSION:
            raise StudyError(f"unsupported study schema {d.get('schema')!r}")
        cells = {}
        for c in d["cells"]:
            cell = CellResult.from_dict(c)
            cells[(cell.context, cell.scenario)] = cell
        return cls(d["contexts"], d["scenarios"], cells, d["horizon"], d["dt"], list(d.get("notes", [])))


def _pct(value: float, base: float | None) -> float | None:
    if base is None or base == 0.0:
        return None
    return 100.0 * (value - base) / abs(base)


def pareto_points(study: StudyResult, context: str) -> list[dict[str, Any]]:
    """(TAC, net CE) per scenario with deltas against noFlex or noFlex_d."""
    pts = []
    for name in study.scenario_names():
        cell = study.cells.get((context, name))
        if cell is None or cell.report is None:
            continue
        base = study.cells.get((context, baseline_of(name)))
        brep = base.report if base is not None else None
        pts.append(
            {
                "context": context,
                "scenario": name,
                "tac": cell.report.tac,
                "ce_net": cell.report.ce_net,
                "baseline": baseline_of(name),
                "tac_pct": _pct(cell.report.tac, brep.tac if brep else None),
                "ce_pct": _pct(cell.report.ce_net, brep.ce_net if brep else None),
            }
        )
    return pts


def _context_record(c: ContextConfig) -> dict[str, Any]:
    p = c.price_series
    return {"name": c.name, "c_dac": c.c_dac, "price_mean": p.mean(), "price_std": p.std()}


def _scenario_record(s: ScenarioConfig) -> dict[str, Any]:
    d = asdict(s)
    d["hp_modes"] = sorted(s.hp_modes) if s.hp_modes is not None else None
    return d


def _make_pool(options: StudyOptions):
    if options.jobs <= 1:
        return None
    if options.executor == "thread":
        return ThreadPoolExecutor(options.jobs)
    return ProcessPoolExecutor(options.jobs)


def run_study(
    dataset: Dataset,
    contexts: Sequence[ContextConfig] | None = None,
    scenarios: Sequence[ScenarioConfig] | None = None,
    options: StudyOptions | None = None,
) -> StudyResult:
    """Solve every (context, scenario) cell in two stages."""
    options = options or StudyOptions()
    contexts = list(contexts) if contexts is not None else context_presets(dataset.prices)
    scenarios = list(scenarios) if scenarios is not None else scenario_presets()
    _check_unique(c.name for c in contexts)
    _check_unique(s.name for s in scenarios)
    notes = []
    if any(s.chp_fixed_to_ref for s in scenarios) and not any(s.name == REF for s in scenarios):
        ref = next(s for s in scenario_presets() if s.name == REF)
        scenarios.insert(0, ref)
        notes.append("REF added: required for the CHP reference dispatch")
    cfg = dict(solve_options=options.solve, backend=options.backend, build_options=options.build, keep_solution=options.jobs <= 1)
    stage1 = [(c, s) for c in contexts for s in scenarios if not s.chp_fixed_to_ref]
    stage2 = [(c, s) for c in contexts for s in scenarios if s.chp_fixed_to_ref]
    results: dict[tuple[str, str], CellResult] = {}
    pool = _make_pool(options)
    try:
        for c, s, cell in _run_stage(pool, dataset, [(c, s, None) for c, s in stage1], cfg):
            results[(c.name, s.name)] = cell
        jobs = []
        for c, s in stage2:
            ref = results.get((c.name, REF))
            if ref is None or ref.error is not None or ref.chp_dispatch is None:
                why = "reference cell failed" if ref is None or ref.error else "reference cell has no CHP"
                results[(c.name, s.name)] = CellResult(c.name, s.name, status="error", error=why)
                continue
            jobs.append((c, s, np.asarray(ref.chp_dispatch)))
        for c, s, cell in _run_stage(pool, dataset, jobs, cfg):
            results[(c.name, s.name)] = cell
    finally:
        if pool is not None:
            pool.shutdown()
    ordered = {(c.name, s.name): results[(c.name, s.name)] for c in contexts for s in scenarios}
    return StudyResult(
        contexts=[_context_record(c) for c in contexts],
        scenarios=[_scenario_record(s) for s in scenarios],
        cells=ordered,
        horizon=dataset.horizon,
        dt=dataset.dt,
        notes=notes,
    )


def _run_stage(pool, dataset, jobs, cfg):
    if pool is None:
        return [(c, s, solve_cell(dataset, s, c, ref, **cfg)) for c, s, ref in jobs]
    futures = [(c, s, pool.submit(solve_cell, dataset, s, c, ref, **cfg)) for c, s, ref in jobs]
    return [(c, s, f.result()) for c, s, f in futures]


def _check_unique(names: Iterable[str]) -> None:
    seen = set()
    for n in names:
        if n in seen:
            raise StudyError(f"duplicate name {n!r}")
        seen.add(n)


# -- study config file ----------------------------------------------------------------

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


@dataclass(frozen=True)
class StudyConfig:
    contexts: tuple[str, ...] | None = None
    scenarios: tuple[str, ...] | None = None
    scaling_mean: float | None = None
    scaling_std: float | None = None
    c_dac: dict[str, float] = field(default_factory=dict)
    scenario_overrides: dict[str, dict[str, Any]] = field(default_factory=dict)

    def resolve(self, dataset: Dataset) -> tuple[list[ContextConfig], list[ScenarioConfig]]:
        ctx = {c.name: c for c in context_presets(dataset.prices, self.scaling_mean, self.scaling_std)}
        scen = {s.name: s for s in scenario_presets()}
        names_c = self.contexts or CONTEXT_NAMES
        names_s = self.scenarios or SCENARIO_NAMES
        for name in names_c:
            if name not in ctx:
                raise StudyError(f"unknown context {name!r}; known: {list(ctx)}")
        for name in names_s:
            if name not in scen:
                raise StudyError(f"unknown scenario {name!r}; known: {list(scen)}")
        contexts = [replace(ctx[n], c_dac=self.c_dac.get(n, ctx[n].c_dac)) for n in names_c]
        scenarios = []
        for n in names_s:
            over = dict(self.scenario_overrides.get(n, {}))
            if "hp_modes" in over and over["hp_modes"] is not None:
                over["hp_modes"] = frozenset(over["hp_modes"])
            try:
                scenarios.append(replace(scen[n], **over))
            except TypeError as exc:
                raise StudyError(f"scenario {n}: {exc}") from exc
        return contexts, scenarios


def load_study_config(path: str | Path) -> tuple[StudyConfig, dict[str, Any]]:
    """Read a study TOML; returns the study part and the ``[solver]``/``[run]`` tables."""
    try:
        raw = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise StudyError(f"cannot read study config {path}: {exc}") from exc
    study = raw.get("study", {})
    known = {"contexts", "scenarios"}
    unknown = set(study) - known
    if unknown:
        raise StudyError(f"unknown keys in [study]: {sorted(unknown)}")
    scaling = raw.get("scaling", {})
    cfg = StudyConfig(
        contexts=tuple(study["contexts"]) if "contexts" in study else None,
        scenarios=tuple(study["scenarios"]) if "scenarios" in study else None,
        scaling_mean=scaling.get("mean"),
        scaling_std=scaling.get("std"),
        c_dac={k: float(v["c_dac"]) for k, v in raw.get("contexts", {}).items() if "c_dac" in v},
        scenario_overrides={k: dict(v) for k, v in raw.get("scenarios", {}).items()},
    )
    rest = {k: raw[k] for k in ("solver", "run") if k in raw}
    return cfg, rest


def nesting_gaps(study: StudyResult) -> list[dict[str, Any]]:
    """Relative TAC gaps along REF >= noFlex >= someFlex >= fullFlex and the _d chain."""
    chains = (PLAIN_SCENARIOS, DECARB_SCENARIOS)
    out = []
    for ctx in study.context_names():
        for chain in chains:
            for hi, lo in zip(chain, chain[1:]):
                a, b = study.tac(ctx, hi), study.tac(ctx, lo)
                if a is None or b is None:
                    continue
                out.append({"context": ctx, "upper": hi, "lower": lo, "rel_gap": (a - b) / max(1.0, abs(a))})
    return out

