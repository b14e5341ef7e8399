import numpy as np
import pytest

from flexopt.model import ModelInstance
from flexopt.model_builder import build_model
from flexopt.scenarios import context_presets, scenario_presets
from flexopt.solver import (
    SOLVER_ENV,
    SolveOptions,
    SolveStatus,
    SolverError,
    SolverUnavailableError,
    export_mps,
    read_mps_reference,
    resolve_backend,
    solve,
    verify_solution,
)
from oracles import bes_enumerate
from toys import bes_toy, hp_toy

BACKENDS = ["scipy", "highs"]


def _simple():
    m = ModelInstance("simple")
    x = m.add_vars("x")
    m.add_row("x_min", [(x, 1.0)], ">=", 3.0)
    m.add_objective(x, 1.0)
    return m


@pytest.mark.parametrize("backend", BACKENDS)
def test_min_x_at_least_three(backend):
    r = solve(_simple(), backend=backend)
    assert r.status is SolveStatus.OPTIMAL and r.objective == pytest.approx(3.0)
    assert r.values == {"x[||]": pytest.approx(3.0)}


def test_empty_model_returns_constant():
    m = ModelInstance("empty")
    m.obj_constant = 4.5
    r = solve(m)
    assert r.status is SolveStatus.OPTIMAL and r.objective == 4.5


@pytest.mark.parametrize("backend", BACKENDS)
def test_infeasible_and_unbounded(backend):
    m = _simple()
    m.add_row("x_max", [(m.var("x"), 1.0)], "<=", 1.0)
    assert solve(m, backend=backend).status is SolveStatus.INFEASIBLE
    u = ModelInstance("u")
    y = u.add_vars("y", lb=-np.inf)
    u.add_objective(y, 1.0)
    assert solve(u, backend=backend).status is SolveStatus.UNBOUNDED


@pytest.mark.parametrize("backend", BACKENDS)
def test_bes_toy_matches_enumeration(backend):
    r = solve(bes_toy(), backend=backend)
    best, _ = bes_enumerate((10, 50, 10), (0.3, 1.0, 0.2))
    assert r.objective == pytest.approx(best, abs=1e-6)


def test_backends_agree_on_a_real_cell(two_days):
    ctx = context_presets(two_days.prices)[0]
    scen = {s.name: s for s in scenario_presets()}["fullFlex"]
    m, _ = build_model(two_days, scen, ctx)
    a, b = solve(m, backend="scipy"), solve(m, backend="highs")
    assert a.objective == pytest.approx(b.objective, rel=1e-9)


def test_deterministic_repeat(two_days):
    ctx = context_presets(two_days.prices)[0]
    scen = {s.name: s for s in scenario_presets()}["someFlex"]
    m, _ = build_model(two_days, scen, ctx)
    objs = {solve(m, SolveOptions(seed=7)).objective for _ in range(2)}
    assert max(objs) - min(objs) <= 1e-9 * max(1.0, abs(max(objs)))


def test_unknown_backend_is_explicit(monkeypatch):
    with pytest.raises(SolverUnavailableError):
        solve(_simple(), backend="cplex")
    monkeypatch.setenv(SOLVER_ENV, "nope")
    with pytest.raises(SolverUnavailableError):
        resolve_backend()
    monkeypatch.setenv(SOLVER_ENV, "highs")
    assert solve(_simple()).backend == "highs"


def test_negative_gap_rejected():
    with pytest.raises(ValueError):
        SolveOptions(mip_gap=-0.1)


# -- verification ------------------------------------------------------------------------


def test_verify_clean_toy():
    m = bes_toy()
    rep = verify_solution(m, solve(m))
    assert rep.max_constraint_violation <= 1e-6 and rep.max_bound_violation <= 1e-6
    assert rep.objective_rel_diff <= 1e-6 and rep.passed()


def test_verify_names_violated_constraint():
    m = bes_toy()
    r = solve(m)
    r.x = r.x.copy()
    r.x[m.index("P_buy", "EG", 1)] += 1.0
    rep = verify_solution(m, r)
    assert not rep.passed()
    assert rep.worst_constraint.startswith("bus:elec")
    assert any(n.startswith("bus:elec") for n in rep.violated_constraints)


def test_verify_recomputes_objective_independently():
    m = bes_toy()
    r = solve(m)
    rep = verify_solution(m, r)
    direct = float(np.dot(m.c, r.x)) + m.obj_constant
    assert rep.objective_recomputed == pytest.approx(direct, rel=1e-12)
    assert abs(r.objective - direct) <= 1e-6 * max(1.0, abs(direct))


def test_verify_missing_values():
    m = bes_toy()
    r = solve(m)
    r.x = r.x[:-1]
    with pytest.raises(SolverError, match="missing variable value"):
        verify_solution(m, r)


# -- MPS ---------------------------------------------------------------------------------


def test_mps_round_trip(tmp_path):
    m = hp_toy()
    m.obj_constant = 12.5
    path = export_mps(m, tmp_path / "toy.mps")
    back = read_mps_reference(path)
    assert (back.n_vars, back.n_cons, back.nnz) == (m.n_vars, m.n_cons, m.A.nnz)
    assert back.integer_columns == frozenset(np.flatnonzero(m.integrality == 1).tolist())
    assert back.offset == 12.5
    assert abs(back.A - m.A).max() == 0.0


def test_mps_markers_and_stability(tmp_path):
    m = hp_toy()
    a = export_mps(m, tmp_path / "a.mps").read_bytes()
    b = export_mps(m, tmp_path / "b.mps").read_bytes()
    assert a == b
    text = a.decode()
    assert text.count("'INTORG'") == text.count("'INTEND'") >= 1
    assert " BV BND" in text


def test_mps_unwritable(tmp_path):
    with pytest.raises(SolverError):
        export_mps(_simple(), tmp_path / "missing" / "x.mps")
