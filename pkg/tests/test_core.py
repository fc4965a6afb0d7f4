import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dgrw.core import (EV, HBAR, KINDS, ModelParams, ParameterError, PRESETS, default_v_eta,
                       derive_params, dimensionalize, grw_heating_rate, load_config,
                       nondimensionalize, parse_config_text, preset_params, scaled_params,
                       unit_system)


def test_default_v_eta_value():
    assert math.isclose(default_v_eta(), 1.054571817e4, rel_tol=1e-15)


@pytest.mark.parametrize("mass, k", [(1e-27, 5e-5), (1e-3, 5e-29)])
def test_k_examples(mass, k):
    p = ModelParams(lambda_rate=1e-16, r_c=1e-7, v_eta=1.054571817e4, mass=mass)
    assert math.isclose(derive_params(p).k, k, rel_tol=1e-12)


def test_grw_limit():
    d = derive_params(ModelParams(v_eta=math.inf))
    assert d.k == 0.0 and d.xi == 0.0 and d.gamma_thr == 0.0
    assert d.h_as == math.inf and d.temperature == math.inf
    assert ModelParams(v_eta=math.inf).is_grw


def test_macro_temperature():
    t = derive_params(ModelParams(mass=1e-3)).temperature
    assert 0.15 < t < 0.25


def test_derived_identities():
    for mass in (1e-27, 1e-10, 1e-3):
        p = ModelParams(mass=mass)
        d = derive_params(p)
        assert d.gamma_thr == 4.0 * d.k * p.r_c**2
        assert math.isclose(d.h_as * 16 * p.mass * p.r_c**2 * d.k, p.hbar**2, rel_tol=1e-14)
        assert d.xi / p.lambda_rate < 1
        assert math.isclose(d.eps_hat, p.hbar / (p.mass * p.lambda_rate * p.r_c**2), rel_tol=1e-15)


@pytest.mark.parametrize("bad", [
    dict(lambda_rate=0.0), dict(lambda_rate=-1.0), dict(r_c=0.0), dict(mass=-1.0),
    dict(v_eta=0.0), dict(lambda_rate=math.inf), dict(mass=1e-40),
])
def test_rejects_invalid(bad):
    with pytest.raises(ParameterError):
        ModelParams(**bad)


def test_rejects_k_at_least_one():
    v = HBAR / (2 * 1e-27 * 1e-7)  # k == 1 exactly
    with pytest.raises(ParameterError):
        ModelParams(mass=1e-27, v_eta=v)
    assert ModelParams(mass=1e-27, v_eta=v * 1.01).k < 1


def test_pure_function():
    p = ModelParams(mass=2.5e-20)
    assert derive_params(p) == derive_params(ModelParams(mass=2.5e-20))


@pytest.mark.parametrize("k", [1e-3, 1e-6, 1e-9])
def test_heating_limit(k):
    base = ModelParams(mass=1e-27)
    p = base.with_(v_eta=base.hbar / (2 * base.mass * k * base.r_c))
    d = derive_params(p)
    assert math.isclose(d.xi * d.h_as, grw_heating_rate(base), rel_tol=3 * k)


def test_nucleon_heating_order():
    rate = grw_heating_rate(preset_params("nucleon")) / EV
    assert 1e-25 / 3 < rate < 3e-25


def test_unit_examples():
    p = ModelParams(mass=1e-27)
    assert nondimensionalize(p, p.r_c, "length") == 1.0
    assert nondimensionalize(p, 1 / p.lambda_rate, "time") == 1.0
    assert math.isclose(nondimensionalize(p, 1e6 * p.r_c**2, "variance"), 1e6, rel_tol=1e-15)
    with pytest.raises(ValueError):
        nondimensionalize(p, 1.0, "charge")


@settings(max_examples=200, deadline=None)
@given(value=st.floats(1e-200, 1e200), kind=st.sampled_from(KINDS),
       mass=st.floats(1e-27, 1.0), lam=st.floats(1e-20, 1e10))
def test_unit_roundtrip(value, kind, mass, lam):
    p = ModelParams(mass=mass, lambda_rate=lam)
    back = dimensionalize(p, nondimensionalize(p, value, kind), kind)
    assert math.isclose(back, value, rel_tol=1e-14)


def test_unit_system():
    p = ModelParams(mass=1e-27)
    u = unit_system(p)
    assert u.length_scale == p.r_c and u.time_scale == 1 / p.lambda_rate
    assert unit_system(p, "SI").length_scale == 1.0


def test_presets_and_config(tmp_path):
    for name in PRESETS:
        assert preset_params(name).k < 1
    assert preset_params("adler2007").lambda_rate == 2.2e-8
    f = tmp_path / "p.cfg"
    f.write_text("# desk scale\npreset = macro_1g\nlambda_rate = 2e7  # faster\n")
    p = load_config(f)
    assert p.lambda_rate == 2e7 and p.mass == 1e-3
    with pytest.raises(ParameterError):
        parse_config_text("colour = red")
    with pytest.raises(ParameterError):
        parse_config_text("preset = nope")
    with pytest.raises(ParameterError):
        parse_config_text("mass 1e-3")


def test_serialization_roundtrip():
    for p in (ModelParams(mass=3e-20), ModelParams(v_eta=math.inf)):
        assert ModelParams.from_dict(p.as_dict()) == p


def test_scaled_params():
    p = scaled_params(0.05, 3.0)
    assert math.isclose(p.k, 0.05, rel_tol=1e-15)
    assert math.isclose(p.eps_hat, 3.0, rel_tol=1e-15)
    assert scaled_params(0.0, 1.0).k == 0.0
    np.testing.assert_allclose(derive_params(p).xi, 4 * 0.05 / 1.05**2)
