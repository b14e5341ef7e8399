import numpy as np
import pytest

from flexopt.scenarios import (
    SCENARIO_NAMES,
    StudyError,
    StudyOptions,
    StudyResult,
    context_presets,
    load_study_config,
    nesting_gaps,
    pareto_points,
    run_study,
    scenario_presets,
)
from flexopt.solver import SolveOptions

# conversion invest, existing flex, storage invest, decarbonize
FIGURE = {
    "REF": (False, False, False, False),
    "noFlex": (True, False, False, False),
    "someFlex": (True, True, False, False),
    "fullFlex": (True, True, True, False),
    "noFlex_d": (True, False, False, True),
    "someFlex_d": (True, True, False, True),
    "fullFlex_d": (True, True, True, True),
}


def test_presets_follow_the_scenario_table():
    presets = scenario_presets()
    assert [s.name for s in presets] == list(SCENARIO_NAMES)
    for s in presets:
        flags = (s.allow_conversion_invest, s.use_existing_flex, s.allow_storage_invest, s.decarbonize)
        assert flags == FIGURE[s.name], s.name
        assert bool(s.z_smart) == s.use_existing_flex == bool(s.z_v2x)
    assert [s.name for s in presets if s.chp_fixed_to_ref] == ["noFlex"]


def test_context_presets(week):
    base, strict, scaled = context_presets(week.prices)
    assert (base.c_dac, strict.c_dac, scaled.c_dac) == (222.0, 10_000.0, 222.0)
    assert base.price_series == week.prices
    assert scaled.price_series.mean() == pytest.approx(97.0) and scaled.price_series.std() == pytest.approx(70.0)


def test_ref_then_noflex(two_days):
    ctx = context_presets(two_days.prices)[:1]
    scen = {s.name: s for s in scenario_presets()}
    st = run_study(two_days, ctx, [scen["REF"], scen["noFlex"]])
    assert len(st.cells) == 2 and st.all_ok
    ref, nof = st.cell("c_base", "REF"), st.cell("c_base", "noFlex")
    np.testing.assert_allclose(nof.chp_dispatch, ref.chp_dispatch, atol=1e-7)


def test_ref_added_when_missing(two_days):
    ctx = context_presets(two_days.prices)[:1]
    scen = {s.name: s for s in scenario_presets()}
    st = run_study(two_days, ctx, [scen["noFlex"]])
    assert ("c_base", "REF") in st.cells and st.notes


def test_failed_cell_is_recorded_and_study_continues(two_days):
    ctx = context_presets(two_days.prices)[:1]
    scen = {s.name: s for s in scenario_presets()}
    opts = StudyOptions(solve=SolveOptions(time_limit_s=1e-6))
    st = run_study(two_days, ctx, [scen["REF"], scen["noFlex"], scen["fullFlex"]], opts)
    assert len(st.cells) == 3
    assert all(c.error is not None or c.ok for c in st.cells.values())
    assert not st.all_ok


def test_study_nesting_and_determinism(small_study, two_days):
    for g in nesting_gaps(small_study):
        assert g["rel_gap"] >= -1e-6, g
    again = run_study(two_days, context_presets(two_days.prices)[:1], scenario_presets())
    for key, cell in small_study.cells.items():
        assert again.cells[key].objective == pytest.approx(cell.objective, rel=1e-9, abs=1e-9)


def test_parallel_matches_serial(small_study, two_days):
    par = run_study(
        two_days, context_presets(two_days.prices)[:1], scenario_presets(), StudyOptions(jobs=2)
    )
    for key, cell in small_study.cells.items():
        assert par.cells[key].report.tac == pytest.approx(cell.report.tac, rel=1e-9)


def test_pareto_percentages(small_study):
    pts = {p["scenario"]: p for p in pareto_points(small_study, "c_base")}
    assert pts["noFlex"]["tac_pct"] == 0.0 and pts["noFlex_d"]["tac_pct"] == 0.0
    assert pts["fullFlex"]["tac"] <= pts["noFlex"]["tac"] * (1 + 1e-6)
    for name in ("noFlex_d", "someFlex_d", "fullFlex_d"):
        assert abs(pts[name]["ce_net"]) <= 1e-6
    tac = pts["fullFlex"]["tac"]
    base = pts["noFlex"]["tac"]
    assert pts["fullFlex"]["tac_pct"] == pytest.approx(100 * (tac - base) / base, rel=1e-12)


def test_study_dict_round_trip(small_study):
    d = small_study.to_dict()
    assert StudyResult.from_dict(d).to_dict() == d


def test_study_config(tmp_path, two_days):
    cfg_file = tmp_path / "study.toml"
    cfg_file.write_text(
        '[study]\ncontexts = ["c_strict"]\nscenarios = ["REF", "someFlex"]\n'
        '[contexts.c_strict]\nc_dac = 5000.0\n'
        '[scenarios.someFlex]\nz_v2x = false\n'
        '[solver]\nmip_gap = 1e-6\n'
    )
    cfg, rest = load_study_config(cfg_file)
    contexts, scenarios = cfg.resolve(two_days)
    assert [c.name for c in contexts] == ["c_strict"] and contexts[0].c_dac == 5000.0
    assert [s.name for s in scenarios] == ["REF", "someFlex"] and not scenarios[1].z_v2x
    assert rest["solver"]["mip_gap"] == 1e-6


def test_study_config_errors(tmp_path, two_days):
    bad = tmp_path / "bad.toml"
    bad.write_text('[study]\nscenarios = ["superFlex"]\n')
    cfg, _ = load_study_config(bad)
    with pytest.raises(StudyError):
        cfg.resolve(two_days)
    bad.write_text('[study]\ncolour = "red"\n')
    with pytest.raises(StudyError):
        load_study_config(bad)
