import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import quarterly
from trendcycle.data import (DataError, RawSeries, TimeSeriesPanel, assemble_panel, diff_scale,
                             inverse_transform, load_csv, parse_quarters, transform, write_panel_csv)


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_three_rows(tmp_path):
    p = write(tmp_path, "date,gdp\n1984Q1,1.0\n1984Q2,2.0\n1984Q3,3.0\n")
    (s,) = load_csv(p, {"gdp": "y"})
    assert s.id == "y" and len(s) == 3
    assert s.transformation == "log_levels_x100"
    assert str(s.dates[0]) == "1984Q1"


def test_na_and_empty_cells_are_missing(tmp_path):
    p = write(tmp_path, "date,u\n1984Q1,5.0\n1984Q2,NA\n1984Q3,\n1984Q4,abc\n")
    (s,) = load_csv(p, {"u": "u"})
    np.testing.assert_array_equal(np.isnan(s.values), [False, True, True, True])


def test_monthly_dates_rejected(tmp_path):
    p = write(tmp_path, "date,u\n1984-01-01,5\n1984-02-01,5\n1984-03-01,5\n")
    with pytest.raises(DataError, match="non-quarterly spacing"):
        load_csv(p, {"u": "u"})


def test_malformed_date(tmp_path):
    p = write(tmp_path, "date,u\n1984Q1,5\nnot-a-date,5\n")
    with pytest.raises(DataError, match="malformed date"):
        load_csv(p, {"u": "u"})


def test_unknown_mnemonic_names_column(tmp_path):
    p = write(tmp_path, "date,foo\n1984Q1,5\n")
    with pytest.raises(DataError, match="'foo'"):
        load_csv(p, {"foo": "bogus"})


def test_missing_file_names_path(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.csv"):
        load_csv(tmp_path / "nope.csv", {"u": "u"})


def test_iso_dates_parse():
    idx = parse_quarters(["1990-01-01", "1990-04-01", "1990-07-01"])
    assert [str(p) for p in idx] == ["1990Q1", "1990Q2", "1990Q3"]


@pytest.mark.parametrize("tr,value,expected", [("levels", 5.0, 5.0), ("log_levels_x100", 1.0, 0.0)])
def test_transform_simple(tr, value, expected):
    s = RawSeries("u", quarterly("2000Q1", 3), [value] * 3, tr)
    assert transform(s).values[0] == pytest.approx(expected, abs=0)


def test_yoy_zero_inflation_and_leading_missing():
    s = RawSeries("pi", quarterly("2000Q1", 8), [100, 101, 102, 103, 100, 101, 102, 103], "yoy_pct")
    out = transform(s).values
    assert np.all(np.isnan(out[:4]))
    np.testing.assert_array_equal(out[4:], 0.0)


def test_yoy_value():
    s = RawSeries("pi", quarterly("2000Q1", 5), [100, 1, 1, 1, 110], "yoy_pct")
    assert transform(s).values[4] == pytest.approx(100 * np.log(1.1), rel=1e-14)


def test_yoy_needs_five_observations():
    with pytest.raises(DataError):
        transform(RawSeries("pi", quarterly("2000Q1", 4), [1, 2, 3, 4], "yoy_pct"))


def test_nonpositive_under_log_reports_date():
    s = RawSeries("oil", quarterly("2000Q1", 3), [1.0, -2.0, 3.0], "log_levels_x100")
    with pytest.raises(DataError, match="2000Q2"):
        transform(s)


@given(st.lists(st.floats(0.01, 1e6), min_size=1, max_size=30), st.sampled_from(["levels", "log_levels_x100"]))
def test_transform_roundtrip(values, tr):
    s = RawSeries("y", quarterly("1990Q1", len(values)), values, tr)
    back = inverse_transform(transform(s))
    np.testing.assert_allclose(back.values, values, rtol=1e-12)


def test_two_series_alignment():
    a = RawSeries("u", quarterly("2000Q1", 10), np.arange(10.0) ** 1.5)
    b = RawSeries("spf", quarterly("2000Q1", 10), np.sin(np.arange(10.0)))
    p = assemble_panel([a, b], ("2000Q1", "2002Q2"))
    assert p.T == 10 and p.ids == ("u", "spf")


def test_scale_factor_definition():
    dx = np.array([1.0, -1.0, 3.0, -3.0, 2.0, 0.0])
    x = np.concatenate([[0.0], np.cumsum(dx)])
    expected = np.std(dx, ddof=1)
    s = RawSeries("u", quarterly("2000Q1", x.size), 2.0 * x / expected)
    p = assemble_panel([s])
    assert p.scale_factors[0] == pytest.approx(2.0, rel=1e-12)
    assert diff_scale(p.values[:, 0]) == pytest.approx(1.0, abs=1e-10)


def test_baseline_window_length():
    series = [RawSeries(o, quarterly("1980Q1", 160), np.random.default_rng(i).normal(size=160).cumsum())
              for i, o in enumerate(["y", "e", "u", "oil", "uom", "spf"])]
    p = assemble_panel(series, ("1984Q1", "2017Q2"))
    assert p.T == 134


def test_entirely_missing_series_rejected():
    a = RawSeries("u", quarterly("2000Q1", 8), np.arange(8.0) ** 2)
    b = RawSeries("spf", quarterly("2000Q1", 8), [np.nan] * 8)
    with pytest.raises(DataError, match="spf"):
        assemble_panel([a, b])


def test_internal_gaps_and_scale_on_non_missing_pairs():
    x = np.array([0.0, 1.0, np.nan, 4.0, 2.0, 3.0, 7.0])
    s = RawSeries("u", quarterly("2000Q1", 7), x)
    p = assemble_panel([s])
    # adjacent non-missing pairs only: (0,1), (4,2), (2,3), (3,7)
    assert p.scale_factors[0] == pytest.approx(np.std([1.0, -2.0, 1.0, 4.0], ddof=1))
    assert np.isnan(p.values[2, 0])


def test_standardisation_exactly_invertible(rng):
    raw = rng.normal(size=(40, 3)).cumsum(axis=0)
    p = TimeSeriesPanel.from_raw(("a", "b", "c"), quarterly("1990Q1", 40), raw)
    np.testing.assert_array_equal(p.values * p.scale_factors, raw / p.scale_factors * p.scale_factors)
    np.testing.assert_allclose(p.values * p.scale_factors, raw, rtol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.permutations([0, 1, 2]))
def test_permutation_invariance(perm):
    base = [RawSeries(o, quarterly("2000Q1", 12), np.random.default_rng(k).normal(size=12).cumsum())
            for k, o in enumerate(["u", "uom", "spf"])]
    p0 = assemble_panel(base)
    p1 = assemble_panel([base[i] for i in perm])
    np.testing.assert_array_equal(p1.select(p0.ids).values, p0.values)
    np.testing.assert_array_equal(p1.select(p0.ids).scale_factors, p0.scale_factors)


def test_window_recomputes_scales(rng):
    raw = rng.normal(size=(60, 1)).cumsum(axis=0)
    p = TimeSeriesPanel.from_raw(("u",), quarterly("1990Q1", 60), raw)
    w = p.window(None, "1999Q4")
    assert w.T == 40
    assert w.scale_factors[0] == pytest.approx(diff_scale(raw[:40, 0]))


def test_write_and_reload(tmp_path, rng):
    raw = rng.normal(size=(12, 2)).cumsum(axis=0)
    p = TimeSeriesPanel.from_raw(("u", "spf"), quarterly("1990Q1", 12), raw)
    path = tmp_path / "panel.csv"
    write_panel_csv(p, path)
    series = load_csv(path, {"u": ("u", "levels"), "spf": ("spf", "levels")})
    q = assemble_panel(series)
    np.testing.assert_array_equal(q.raw, p.raw)
