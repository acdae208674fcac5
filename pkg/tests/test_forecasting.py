import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import textbook
from trendcycle.forecasting import (ForecastRun, OosConfig, OosWindows, dm_test, evaluation_table, factor_revisions,
                                    hln_factor, relative_rmse, run_oos, tc_forecast)
from trendcycle.sampler import SamplerConfig
from trendcycle.spec import baseline_spec, reference_parameters
from trendcycle.statespace import assemble, kalman_filter, simulate


def make_runs(errors: dict, origins):
    runs = []
    for model, e in errors.items():
        for o, err in zip(origins, e):
            runs.append(ForecastRun(model, "pi", o, 1, 0.0, float(err)))
    return runs


ORIGINS = pd.period_range("2000Q1", periods=40, freq="Q")


def test_dm_matches_textbook():
    rng = np.random.default_rng(60)
    e1, e2 = rng.normal(size=60), rng.normal(size=60) * 1.2
    res = dm_test(e1, e2, 4)
    stat, p = textbook.dm_statistic(list(e1), list(e2), 4)
    assert res.statistic == pytest.approx(stat, abs=1e-10)
    assert res.p_value == pytest.approx(p, abs=1e-10)


def test_dm_identical_errors():
    e = np.random.default_rng(0).normal(size=30)
    res = dm_test(e, e, 2)
    assert (res.statistic, res.p_value) == (0.0, 1.0)


def test_hln_factor_h1():
    for T in (10, 60, 500):
        assert hln_factor(T, 1) == pytest.approx(math.sqrt((T - 1) / T), rel=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 8))
def test_dm_antisymmetric(seed, h):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=40), rng.normal(size=40)
    x, y = dm_test(a, b, h), dm_test(b, a, h)
    assert x.statistic == pytest.approx(-y.statistic, abs=1e-12)
    assert x.p_value == pytest.approx(y.p_value, abs=1e-12)
    assert 0.0 <= x.p_value <= 1.0


def test_dm_requires_ten():
    with pytest.raises(ValueError, match="10"):
        dm_test(np.ones(9), np.zeros(9), 1)


def test_relative_rmse_self_and_half():
    e = np.random.default_rng(1).normal(size=40)
    table = relative_rmse(make_runs({"rw": e, "tc": e / 2}, ORIGINS))
    got = table.set_index("model")["rel_rmse"]
    assert got["rw"] == 1.0
    assert got["tc"] == pytest.approx(0.5, rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_relative_rmse_scale_invariant(c):
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=40), rng.normal(size=40)
    r1 = relative_rmse(make_runs({"rw": b, "tc": a}, ORIGINS)).set_index("model")["rel_rmse"]["tc"]
    r2 = relative_rmse(make_runs({"rw": c * b, "tc": c * a}, ORIGINS)).set_index("model")["rel_rmse"]["tc"]
    assert r1 == pytest.approx(r2, rel=1e-12)


def test_relative_rmse_empty_intersection():
    runs = make_runs({"rw": np.ones(5)}, ORIGINS[:5]) + make_runs({"tc": np.ones(5)}, ORIGINS[10:15])
    with pytest.raises(ValueError, match="common"):
        relative_rmse(runs)


def test_evaluation_table_columns():
    rng = np.random.default_rng(3)
    runs = make_runs({"rw": rng.normal(size=40), "tc": rng.normal(size=40), "ucsv": rng.normal(size=40)}, ORIGINS)
    t = evaluation_table(runs)
    assert list(t.columns) == ["model", "variable", "h", "rel_rmse", "dm_stat", "dm_p", "n"]
    assert t.set_index("model").loc["rw", "rel_rmse"] == 1.0
    assert np.isnan(t.set_index("model").loc["tc", "dm_p"])
    assert 0 <= t.set_index("model").loc["ucsv", "dm_p"] <= 1


@pytest.fixture(scope="module")
def long_panel():
    spec = baseline_spec()
    sys = assemble(spec, reference_parameters(spec))
    return simulate(sys, 134, 3, start="1984Q1")


def test_last_origin_for_h8(long_panel):
    res = run_oos(long_panel, ["rw"], OosWindows("1984Q1", "1999Q1", "2017Q2"))
    f = res.frame()
    assert f.query("h == 8")["origin"].max() == "2015Q2"
    assert f.query("h == 1")["origin"].max() == "2017Q1"
    assert (f["origin"].min(), len(f.query("h == 8 and variable == 'pi'"))) == ("1999Q1", 66)


def test_rw_oos_deterministic(long_panel):
    w = OosWindows("1984Q1", "2010Q1", "2017Q2")
    a = run_oos(long_panel, ["rw"], w).frame()
    b = run_oos(long_panel, ["rw"], w).frame()
    pd.testing.assert_frame_equal(a, b)


def test_window_validation(long_panel):
    with pytest.raises(ValueError, match="beyond"):
        run_oos(long_panel, ["rw"], OosWindows("1984Q1", "1999Q1", "2018Q1"))
    with pytest.raises(ValueError, match="pre-sample"):
        run_oos(long_panel, ["rw"], OosWindows("1999Q1", "1999Q1", "2017Q2"))


def test_filtered_state_reproduces_last_observation(long_panel):
    spec = baseline_spec()
    sys = assemble(spec, reference_parameters(spec))
    fr = kalman_filter(sys, long_panel.values)
    np.testing.assert_allclose(fr.a_filt[-1] @ sys.Z.T + sys.d, long_panel.values[-1], atol=1e-8)


def test_long_horizon_tc_forecast_approaches_trend(long_panel):
    spec = baseline_spec()
    theta = reference_parameters(spec)
    fc, _ = tc_forecast(theta.values[None], theta.layout, spec, long_panel, [400])
    bound = spec.with_scale_factors(dict(zip(long_panel.ids, long_panel.scale_factors)))
    sys = assemble(bound, theta)
    from trendcycle.statespace import initial_trend_means
    sys = sys.with_initial(a1=initial_trend_means(bound, long_panel, sys))
    a = kalman_filter(sys, long_panel.values).a_filt[-1]
    mu = sys.state("mu_pi")
    j = long_panel.ids.index("pi")
    expected = sys.Z[j, mu] * a[mu] * long_panel.scale_factors[j]
    assert fc[("pi", 400)] == pytest.approx(expected, abs=1e-8)


def test_factor_revisions_trailing_edge(long_panel):
    spec = baseline_spec()
    theta = reference_parameters(spec)
    paths = {}
    for end in pd.period_range("2005Q1", "2012Q4", freq="Q"):
        w = long_panel.window(None, end)
        _, fac = tc_forecast(theta.values[None], theta.layout, spec, w, [1], ("BC", "EP", "mu_pi"))
        paths[str(end)] = fac
    rev = factor_revisions(paths)
    assert set(rev) == {"BC", "EP", "mu_pi"}
    by = rev["BC"]["by_distance"]
    assert by.loc[0] > by.loc[12:].mean()
    assert all(r["revision"] >= 0 for r in rev.values())


def test_identical_windows_zero_revision():
    frame = pd.DataFrame({"BC": np.arange(5.0)}, index=pd.period_range("2000Q1", periods=5, freq="Q"))
    rev = factor_revisions({"2000Q4": frame, "2001Q1": frame.copy()})
    assert rev["BC"]["revision"] == 0.0


def test_tc_in_oos_with_short_chain(long_panel):
    cfg = OosConfig(horizons=(1, 4), variables=("pi",),
                    sampler=SamplerConfig(iterations=60, burn_in=40, thin=5, draw_states=False),
                    reestimate_every=4, forecast_draws=4)
    res = run_oos(long_panel, ["tc", "rw"], OosWindows("1984Q1", "2016Q1", "2017Q2"), cfg, baseline_spec())
    f = res.frame()
    assert not res.skipped
    assert set(f["model"]) == {"tc", "rw"}
    assert len(f.query("model == 'tc'")) == len(f.query("model == 'rw'"))
    assert res.factor_paths
