import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexopt import catalog as cat
from flexopt.core_types import TimeSeries
from flexopt.ingestion import (
    IngestionError,
    aggregate_bev_fleet,
    derive_inflexible_demand,
    generate_synthetic_dataset,
    load_dataset,
    load_timeseries,
    save_dataset,
    scale_prices,
    synthetic_parameters,
    write_timeseries,
)


def _csv(path, rows, header="t,value"):
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return path


def test_load_full_year(tmp_path):
    p = _csv(tmp_path / "p.csv", [f"{t},{40 + t % 7}" for t in range(8760)])
    ts = load_timeseries(p, horizon=8760)
    assert len(ts) == 8760 and ts.values[8] == 41


def test_load_blank_cell(tmp_path):
    p = _csv(tmp_path / "p.csv", ["0,1", "1,", "2,3"])
    with pytest.raises(IngestionError, match="missing value at row 1"):
        load_timeseries(p)


@pytest.mark.parametrize(
    "rows, horizon, match",
    [
        ([f"{t},1" for t in range(168)], 8760, "horizon"),
        (["0,1", "1,abc"], None, "non-numeric"),
        (["0,1", "0,2"], None, "duplicate"),
    ],
)
def test_load_errors(tmp_path, rows, horizon, match):
    p = _csv(tmp_path / "p.csv", rows)
    with pytest.raises(IngestionError, match=match):
        load_timeseries(p, horizon=horizon)


def test_write_then_load_is_exact(tmp_path):
    ts = TimeSeries(np.random.default_rng(3).normal(size=50))
    write_timeseries(ts, tmp_path / "x.csv")
    assert load_timeseries(tmp_path / "x.csv") == ts


def test_derive_inflexible_demand():
    one = lambda v: TimeSeries([v])  # noqa: E731
    out, n = derive_inflexible_demand(one(100), one(20), one(10), one(30))
    assert out.values.tolist() == [80.0] and n == 0
    out, n = derive_inflexible_demand(one(10), one(0), one(20), one(0))
    assert out.values.tolist() == [0.0] and n == 1
    z = TimeSeries(np.zeros(5))
    assert derive_inflexible_demand(z, z, z, z)[0].total() == 0.0
    with pytest.raises(IngestionError):
        derive_inflexible_demand(z, one(0), z, z)


def test_aggregate_bev_fleet():
    pats = {"A": TimeSeries(np.ones(4)), "B": TimeSeries([1, 0, 0, 1])}
    groups = aggregate_bev_fleet([(81.1, "A")] * 12, pats)
    assert len(groups) == 1 and groups[0].e_cap == pytest.approx(cat.BEV_GROUP_KWH)
    assert aggregate_bev_fleet([(50.0, "B")], pats)[0].e_cap == 50.0
    caps = [g.e_cap for g in aggregate_bev_fleet([(10, "A"), (10, "B"), (10, "A")], pats)]
    assert caps == [20.0, 10.0]
    with pytest.raises(IngestionError):
        aggregate_bev_fleet([(10, "C")], pats)


def test_scale_prices():
    base = generate_synthetic_dataset(1, 168).prices
    same = scale_prices(base, base.mean(), base.std())
    np.testing.assert_allclose(same.values, base.values, rtol=1e-12)
    out = scale_prices(base, 97.0, 70.0)
    assert out.mean() == pytest.approx(97.0, rel=1e-12) and out.std() == pytest.approx(70.0, rel=1e-12)
    with pytest.raises(IngestionError):
        scale_prices(TimeSeries(np.full(5, 3.0)), 97.0, 70.0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-50, 300), min_size=3, max_size=40), st.floats(1, 200), st.floats(0.5, 100))
def test_scale_prices_hits_targets(values, mean, std):
    ts = TimeSeries(values)
    if ts.std() < 1e-6:
        return
    out = scale_prices(ts, mean, std)
    assert out.mean() == pytest.approx(mean, rel=1e-9, abs=1e-9)
    assert out.std() == pytest.approx(std, rel=1e-9)


def test_synthetic_is_deterministic(week):
    again = generate_synthetic_dataset(1, 168)
    for (na, a), (nb, b) in zip(week.named_series(), again.named_series()):
        assert na == nb and a == b


def test_synthetic_windows_agree():
    short, long = generate_synthetic_dataset(4, 48), generate_synthetic_dataset(4, 168)
    np.testing.assert_array_equal(short.prices.values, long.prices.values[:48])


def test_synthetic_pv_dark_at_night(week):
    hod = np.arange(168) % 24
    night = (hod < 4) | (hod >= 22)
    assert np.all(week.pv_profile.values[night] == 0.0)


def test_synthetic_full_year_price_mean():
    full = generate_synthetic_dataset(1, 8760)
    target = synthetic_parameters()["prices"]["mean"]
    assert abs(full.prices.mean() - target) <= 0.01 * target


def test_synthetic_horizon_range():
    with pytest.raises(IngestionError):
        generate_synthetic_dataset(1, 10)
    with pytest.raises(IngestionError):
        generate_synthetic_dataset(1, 9000)


def test_dataset_round_trip(tmp_path, two_days):
    save_dataset(two_days, tmp_path / "ds")
    back = load_dataset(tmp_path / "ds")
    assert [n for n, _ in back.named_series()] == [n for n, _ in two_days.named_series()]
    for (_, a), (_, b) in zip(back.named_series(), two_days.named_series()):
        assert a == b
    assert back.catalog == two_days.catalog and back.grid == two_days.grid and back.hp == two_days.hp


def test_dataset_rejects_negative_demand(two_days):
    from dataclasses import replace

    with pytest.raises(IngestionError):
        replace(two_days, edem=two_days.edem.with_values(-np.ones(48)))
