import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trendcycle.benchmarks import UcsvConfig, local_level_forecast, rw_drift_forecast, ucsv_fit_forecast

FAST = dict(iterations=600, burn_in=100)


def test_rw_constant_series():
    assert rw_drift_forecast(np.full(10, 3.5), 8) == 3.5


def test_rw_unit_drift():
    assert rw_drift_forecast([1, 2, 3, 4], 2) == 6.0


def test_rw_drift_is_mean_difference():
    x = np.random.default_rng(0).normal(size=50).cumsum()
    total = 0.0
    for i in range(1, x.size):
        total += x[i] - x[i - 1]
    assert rw_drift_forecast(x, 3) == pytest.approx(x[-1] + 3 * total / (x.size - 1), rel=1e-13)


def test_rw_vector_horizons_and_missing():
    x = np.array([1.0, np.nan, 2.0, 3.0])
    np.testing.assert_allclose(rw_drift_forecast(x, np.array([1, 2])), [4.0, 5.0])


def test_rw_needs_two_points():
    with pytest.raises(ValueError, match="at least 2"):
        rw_drift_forecast([1.0], 1)


@settings(max_examples=40, deadline=None)
@given(st.floats(-5, 5).filter(lambda a: abs(a) > 1e-3), st.floats(-100, 100), st.integers(1, 8))
def test_rw_affine_equivariant(a, b, h):
    x = np.random.default_rng(1).normal(size=20).cumsum()
    assert rw_drift_forecast(a * x + b, h) == pytest.approx(a * rw_drift_forecast(x, h) + b, rel=1e-9, abs=1e-9)


def test_ucsv_needs_forty_observations():
    with pytest.raises(ValueError, match="40"):
        ucsv_fit_forecast(np.zeros(39))


def test_ucsv_deterministic_given_seed():
    y = np.random.default_rng(2).normal(size=60).cumsum() * 0.3
    cfg = UcsvConfig(**FAST)
    assert ucsv_fit_forecast(y, 1, cfg, 9).forecast == ucsv_fit_forecast(y, 1, cfg, 9).forecast


def test_ucsv_shapes_and_flat_forecast():
    y = np.random.default_rng(3).normal(size=60)
    res = ucsv_fit_forecast(y, 4, UcsvConfig(**FAST), 1)
    assert res.tau.shape == (500, 60) and res.h_eps.shape == (500, 59)
    assert res.forecasts([1, 8]) == {1: res.forecast, 8: res.forecast}


def test_frozen_volatility_matches_local_level():
    y = np.random.default_rng(4).normal(size=60).cumsum() * 0.2 + np.random.default_rng(5).normal(size=60)
    cfg = UcsvConfig(iterations=3000, burn_in=200, freeze_volatility=True, log_var_eta=0.0, log_var_eps=np.log(0.04))
    res = ucsv_fit_forecast(y, 1, cfg, 0)
    oracle = local_level_forecast(y, 0.04, 1.0)
    se = res.tau_last.std() / np.sqrt(res.tau_last.size)  # the frozen-volatility draws are independent
    assert abs(res.forecast - oracle) < 4 * se


def test_white_noise_limit_gives_sample_mean():
    y = 2.0 + np.random.default_rng(6).normal(size=80)
    cfg = UcsvConfig(iterations=2000, burn_in=100, freeze_volatility=True, log_var_eta=0.0, log_var_eps=-25.0)
    res = ucsv_fit_forecast(y, 1, cfg, 3)
    se = res.tau_last.std() / np.sqrt(res.tau_last.size)
    assert abs(res.forecast - y.mean()) < 4 * se + 1e-3


def test_ucsv_config_validation():
    with pytest.raises(ValueError, match="gamma"):
        UcsvConfig(gamma=0.0)
