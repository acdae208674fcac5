import math

import numpy as np
import pytest

from trendcycle.spec import (INV_SCALE, REAL_OBSERVABLES, CycleDecl, LoadingDecl, ModelSpec, SpecError,
                             STYLIZED_RESTRICTION, TrendDecl, baseline_spec, compile_layout, dump_spec,
                             global_spec, load_spec, reference_parameters, restrict_spec, stylized_spec)


def test_baseline_structure():
    s = baseline_spec()
    assert len(s.observables) == 8
    assert len(s.trends) == 7
    assert len(s.cycles) == 10
    assert len(s.common_cycles) == 2
    free = [ld for ld in s.loadings if not ld.fixed]
    assert len(free) == 24
    assert sum(ld.cycle == "BC" for ld in free) == 16
    assert sum(ld.cycle == "EP" for ld in free) == 8


def test_inflation_has_no_idiosyncratic_trend():
    s = baseline_spec()
    for o in ("pi", "pi_c"):
        owners = [t for t in s.trends if o in t.observables]
        assert len(owners) == 1 and owners[0].is_common


def test_common_trend_loadings_are_inverse_scales():
    s = baseline_spec().with_scale_factors({o: 2.0 + i for i, o in enumerate(baseline_spec().observables)})
    mu = s.trend("mu_pi")
    assert set(mu.observables) == {"pi", "pi_c", "uom", "spf"}
    assert s.trend_loading(mu, "pi") == pytest.approx(1 / s.scale_factors["pi"])
    assert all(v == INV_SCALE for _, v in mu.loadings)


def test_baseline_parameter_count():
    theta = compile_layout(baseline_spec())
    assert len(theta) == 24 + 2 + 7 + 10 + 10 + 10 == 63


def test_global_spec():
    g = global_spec()
    assert len(g.observables) == 10
    assert not any(ld.cycle == "EP" and ld.observable in REAL_OBSERVABLES for ld in g.loadings)
    base_ep = sum(ld.cycle == "EP" and not ld.fixed for ld in baseline_spec().loadings)
    g_ep = sum(ld.cycle == "EP" and not ld.fixed for ld in g.loadings)
    assert g_ep - base_ep == 4
    with pytest.raises(KeyError, match="structural zero"):
        compile_layout(g).layout.index("load[EP,y,0]")


def test_stylized_spec():
    s = stylized_spec()
    assert len(s.observables) == 3
    assert {ld.lag for ld in s.loadings if ld.observable == "pi_exp"} == {0, 1}
    assert not any(t.observables == ("pi",) for t in s.trends)
    assert len(compile_layout(s)) < len(compile_layout(baseline_spec()))


def test_layout_name_roundtrip():
    lay = compile_layout(global_spec()).layout
    for i, name in enumerate(lay.names):
        assert lay.index(name) == i
    assert len(set(lay.names)) == len(lay)


def test_structural_zero_cannot_be_set():
    theta = compile_layout(baseline_spec())
    with pytest.raises(KeyError):
        theta.with_values({"load[EP,y,0]": 1.0})


def test_duplicate_idiosyncratic_cycle_rejected():
    s = baseline_spec()
    bad = ModelSpec(s.observables, s.trends, s.cycles + (CycleDecl("idio2:y", "idiosyncratic", 0, "y"),),
                    s.loadings)
    with pytest.raises(SpecError, match="more than one idiosyncratic cycle"):
        compile_layout(bad)


def test_real_variable_on_energy_cycle_rejected():
    s = baseline_spec()
    bad = ModelSpec(s.observables, s.trends, s.cycles, s.loadings + (LoadingDecl("u", "EP", 0),))
    with pytest.raises(SpecError, match="EP"):
        compile_layout(bad)


def test_each_common_cycle_needs_one_fixed_loading():
    s = baseline_spec()
    lds = tuple(ld for ld in s.loadings if not (ld.cycle == "EP" and ld.fixed))
    with pytest.raises(SpecError, match="exactly one fixed loading"):
        compile_layout(ModelSpec(s.observables, s.trends, s.cycles, lds))


def test_lag_beyond_maximum_rejected():
    s = baseline_spec()
    with pytest.raises(SpecError, match="max_lag_loaded"):
        compile_layout(ModelSpec(s.observables, s.trends, s.cycles, s.loadings + (LoadingDecl("e", "BC", 3),)))


def test_baseline_restricts_to_stylized():
    assert restrict_spec(baseline_spec(), **STYLIZED_RESTRICTION) == stylized_spec()


@pytest.mark.parametrize("factory", [baseline_spec, global_spec, stylized_spec])
def test_yaml_roundtrip(tmp_path, factory):
    spec = factory()
    dump_spec(spec, tmp_path / "m.yaml")
    assert load_spec(tmp_path / "m.yaml") == spec


def test_bounds_metadata():
    lay = compile_layout(baseline_spec()).layout
    i = lay.index("rho[BC]")
    assert (lay.lower[i], lay.upper[i]) == (0.001, 0.970)
    j = lay.index("lambda[EP]")
    assert lay.upper[j] == pytest.approx(math.pi)
    assert lay.transforms[lay.index("sigma2[mu_y]")] == "log"


def test_reference_parameters_in_bounds():
    for f in (baseline_spec, global_spec, stylized_spec):
        assert reference_parameters(f()).in_bounds()


def test_pinned_cycles_have_no_frequency_slots():
    lay = compile_layout(stylized_spec()).layout
    assert "rho[idio:y]" not in lay.names and "varsigma2[idio:y]" in lay.names


def test_trend_only_spec_compiles():
    spec = ModelSpec(("y",), (TrendDecl("mu_y", True, (("y", 1.0),)),), (), ())
    assert compile_layout(spec).layout.names == ("drift[mu_y]", "sigma2[mu_y]")
