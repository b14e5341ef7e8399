import csv
import json

import pytest

from flexopt.model_builder import build_model
from flexopt.reporting import (
    SCHEMA_VERSION,
    TABLE_KINDS,
    FlowTable,
    ReportError,
    annual_balances,
    emit,
    flow_table,
    load_study_json,
    study_tables,
)
from flexopt.scenarios import context_presets, scenario_presets
from flexopt.solver import solve

SCEN = {s.name: s for s in scenario_presets()}


@pytest.fixture(scope="module")
def solved(two_days):
    ctx = context_presets(two_days.prices)[0]
    out = {}
    for name in ("REF", "fullFlex", "fullFlex_d"):
        m, _ = build_model(two_days, SCEN[name], ctx)
        out[name] = (m, solve(m))
    return out


@pytest.mark.parametrize("name", ["REF", "fullFlex", "fullFlex_d"])
def test_tac_identities(solved, two_days, name):
    m, r = solved[name]
    rep = annual_balances(m, r, two_days)
    assert rep.tac == pytest.approx(rep.capex + rep.opex, rel=1e-6)
    assert rep.tac == pytest.approx(r.objective - rep.penalty, rel=1e-6)
    assert rep.ce_net == pytest.approx(rep.ce_scope1 + rep.ce_scope2 - rep.ce_removed, abs=1e-9)


def test_ref_has_no_capex(solved):
    m, r = solved["REF"]
    assert annual_balances(m, r).capex == 0.0


def test_decarb_net_zero(solved):
    m, r = solved["fullFlex_d"]
    rep = annual_balances(m, r)
    assert abs(rep.ce_net) <= 1e-6 and rep.ce_scope1 == 0.0


def test_unverified_solution_rejected(solved):
    m, r = solved["REF"]
    bad = type(r)(r.status, r.objective, r.x.copy(), names=r.names)
    bad.x[m.index("P_buy", "EG", 0)] += 50.0
    with pytest.raises(ReportError, match="verification"):
        annual_balances(m, bad)


def test_report_is_backend_independent(two_days):
    ctx = context_presets(two_days.prices)[0]
    m, _ = build_model(two_days, SCEN["REF"], ctx)
    r = solve(m, backend="scipy")
    copy = type(r)(r.status, r.objective, r.x.copy(), backend="highs", names=r.names)
    assert annual_balances(m, r) == annual_balances(m, copy)


@pytest.mark.parametrize("name", ["REF", "fullFlex", "fullFlex_d"])
def test_flow_nodes_balance(solved, name):
    m, r = solved[name]
    ft = flow_table(m, r)
    for node in ft.inner_nodes():
        assert abs(ft.imbalance(node)) <= 1e-6 * max(1.0, ft.inflow(node)), node


def test_hob_efficiency_in_flows(solved):
    m, r = solved["REF"]
    flows = {(s, d): v for s, d, v in flow_table(m, r).rows}
    heat = flows.get(("HOB", "PROC_95_75"), 0.0)
    if heat:
        assert flows[("ng", "HOB")] == pytest.approx(heat / 0.9, rel=1e-9)


def test_absent_technology_has_no_rows(solved):
    m, r = solved["REF"]
    nodes = flow_table(m, r).nodes()
    for tech in ("WT", "BES", "Elc", "FC", "H2S", "P2H"):
        assert tech not in nodes


def test_flowtable_direction():
    ft = FlowTable()
    ft.add("a", "b", -2.0)
    ft.add("a", "c", 0.0)
    assert ft.rows == [("b", "a", 2.0)]


def test_emit_json_idempotent(small_study, tmp_path):
    p1 = emit(small_study, "json", tmp_path / "a.json")
    d = load_study_json(p1)
    assert d["schema"] == SCHEMA_VERSION
    p2 = emit(d, "json", tmp_path / "b.json")
    assert p1.read_bytes() == p2.read_bytes()


def test_emit_csv_dir(small_study, tmp_path):
    out = emit(small_study, "csv-dir", tmp_path / "tables")
    assert sorted(p.stem for p in out.glob("*.csv")) == sorted(TABLE_KINDS)
    with open(out / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    keys = [(r["context"], r["scenario"], r["metric"]) for r in rows]
    assert len(keys) == len(set(keys)) == len(small_study.cells) * 11


def test_metric_table_full_precision(small_study):
    rows = study_tables(small_study)["metrics"]
    cell = small_study.cell("c_base", "fullFlex")
    pi = next(r["value"] for r in rows if r["scenario"] == "fullFlex" and r["metric"] == "pi_rate")
    assert pi == cell.metrics.pi_rate


def test_emit_errors(small_study, tmp_path):
    with pytest.raises(ReportError):
        emit(small_study, "xlsx", tmp_path / "x")
    (tmp_path / "f").write_text("x")
    with pytest.raises(ReportError):
        emit(small_study, "csv-dir", tmp_path / "f")
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema": "other"}))
    with pytest.raises(ReportError):
        load_study_json(bad)
