import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from dgrw import amplify, trajectory
from dgrw.core import NUCLEON_MASS, ModelParams, preset_params
from dgrw.gaussian import GaussianState

R_C = 1e-7


def test_reduce_avogadro_body():
    body = amplify.BodySpec([(NUCLEON_MASS, 1e-16, 6e23)])
    p = amplify.rigid_body_reduce(body)
    assert math.isclose(p.lambda_rate, 6e7, rel_tol=1e-12)
    assert 1e7 <= p.lambda_rate <= 1e8
    assert math.isclose(p.mass, 6e23 * NUCLEON_MASS, rel_tol=1e-12)


def test_reduce_single_particle_identity():
    p = amplify.rigid_body_reduce(amplify.BodySpec([(1e-27, 1e-16)]))
    assert p == ModelParams(mass=1e-27, lambda_rate=1e-16)


def test_reduce_macro_k():
    body = amplify.BodySpec([(1e-3 / 1000, 1e4, 1000)])
    assert math.isclose(amplify.rigid_body_reduce(body).k, 5e-29, rel_tol=1e-12)


def test_reduce_refuses_non_rigid():
    with pytest.raises(amplify.NonRigidBodyError):
        amplify.rigid_body_reduce(amplify.BodySpec([(1e-27, 1e-16)], rigid=False))


def test_body_validation_and_loading(tmp_path):
    with pytest.raises(ValueError):
        amplify.BodySpec([])
    with pytest.raises(ValueError):
        amplify.BodySpec([(1e-27, -1.0)])
    f = tmp_path / "body.json"
    f.write_text(json.dumps({"particles": [{"mass": 1e-27, "lambda_rate": 1e-16, "count": 2},
                                           [2e-27, 1e-16]], "rigid": True}))
    b = amplify.BodySpec.load(f)
    assert math.isclose(b.total_mass, 4e-27, rel_tol=1e-15) and math.isclose(b.total_rate, 3e-16, rel_tol=1e-15)


def test_reduced_body_localizes_like_macro_preset():
    body = amplify.BodySpec([(1e-3 / 1e3, 1e4, 1e3)])
    p = amplify.rigid_body_reduce(body)
    ref = preset_params("macro_1g")
    assert math.isclose(p.lambda_rate, ref.lambda_rate) and math.isclose(p.mass, ref.mass)
    s0 = GaussianState(0.0, 0.0, 1e6 * R_C**2)
    tg = np.array([0.0, 20.0]) / p.lambda_rate
    a, _ = trajectory.expected_variance_timeonly(p, s0.gamma, tg, 500, 7)
    b, _ = trajectory.expected_variance_timeonly(ref, s0.gamma, tg, 500, 7)
    np.testing.assert_allclose(a, b, rtol=1e-12)
    assert a[-1] < R_C**2


def test_means_match_exact_gaussian():
    rng = np.random.default_rng(4)
    for _ in range(100):
        k = rng.uniform(0, 0.5)
        s = amplify.TwoParticleGaussian(rng.uniform(0.01, 2), rng.uniform(0.01, 2), rng.normal())
        y = rng.normal()
        x_cm, x_rel = amplify.two_particle_jump_means(s, y, k, 1.0)
        ex = amplify.two_particle_exact(s, y, k, 1.0)
        assert math.isclose(x_cm, ex.mean_cm, rel_tol=1e-10, abs_tol=1e-12)
        assert math.isclose(x_rel, ex.mean_rel, rel_tol=1e-10, abs_tol=1e-12)


def test_grw_relative_coordinate():
    s = amplify.TwoParticleGaussian(1e-20, 1e-22, 3e-8)
    y = 0.7 * R_C
    x_rel = amplify.two_particle_jump_means(s, y, 0.0, R_C)[1]
    den = 4 * R_C**2 + 4e-20 + 1e-22
    assert math.isclose(x_rel, (4 * 3e-8 * (R_C**2 + 1e-20) + 2 * y * 1e-22) / den, rel_tol=1e-14)
    assert math.isclose(x_rel, 3e-8, rel_tol=1e-5)


def test_limit_within_one_percent():
    k = 5e-5
    s = amplify.TwoParticleGaussian(1e-24, 1e-24, 1e-15)
    for y in (-2 * R_C, 0.5 * R_C, R_C):
        exact = amplify.two_particle_jump_means(s, y, k, R_C)
        approx = amplify.two_particle_means_limit(s.alpha_rel, y, k)
        for e, a in zip(exact, approx):
            assert abs(e / a - 1) <= 0.01


@settings(max_examples=200, deadline=None)
@given(k=st.floats(1e-5, 0.3), lg=st.floats(-8, -2), lgp=st.floats(-8, -2),
       alpha=st.floats(-1e-3, 1e-3), y=st.floats(0.2, 3.0), sign=st.sampled_from([-1.0, 1.0]))
def test_limit_error_model(k, lg, lgp, alpha, y, sign):
    # inputs in units of r_c; the relative error is undefined where alpha - 2ky cancels
    g, gp = k * 10**lg, k * 10**lgp
    y = sign * y
    if abs(alpha - 2 * k * y) < 0.1 * abs(2 * k * y):
        return
    s = amplify.TwoParticleGaussian(g, gp, alpha)
    exact = amplify.two_particle_jump_means(s, y, k, 1.0)
    approx = amplify.two_particle_means_limit(alpha, y, k)
    bound = 10 * max(g, gp) / k
    rel_cm = abs(exact[0] / approx[0] - 1)
    rel_rel = abs(exact[1] / approx[1] - 1)
    assert rel_cm <= bound
    assert rel_rel <= bound


def test_nucleon_relative_shift():
    s = amplify.TwoParticleGaussian(5e-29, 5e-29, 1e-15)
    k = ModelParams(mass=1e-27).k
    x_rel = amplify.two_particle_jump_means(s, R_C, k, R_C)[1]
    assert 1e-12 < abs(x_rel) < 1e-10


def test_variances_grw_unchanged():
    s = amplify.TwoParticleGaussian(2e-20, 3e-22, 1e-15)
    a = amplify.two_particle_post_variances_and_density(s, 0.0, R_C)
    assert a.var_cm == s.gamma_cm / 2 and a.var_rel == s.gamma_rel / 2


def test_density_normalized_and_regime():
    s = amplify.TwoParticleGaussian(1e-22, 1e-22, 1e-15)
    a = amplify.two_particle_post_variances_and_density(s, 5e-5, R_C)
    assert a.valid
    w = math.sqrt(a.density_var)
    total, _ = integrate.quad(a.pdf, a.density_mean - 40 * w, a.density_mean + 40 * w,
                              points=[a.density_mean], epsabs=0, epsrel=1e-12)
    assert abs(total - 1) < 1e-10
    assert math.isclose(w, R_C * (1 - 5e-5) / math.sqrt(2), rel_tol=1e-14)
    wide = amplify.TwoParticleGaussian(1e-16, 1e-22, 1e-15)
    assert not amplify.two_particle_post_variances_and_density(wide, 5e-5, R_C).valid


def test_density_approximation_vs_exact():
    s = amplify.TwoParticleGaussian(1e-22, 1e-22, 1e-15)
    mean, var = amplify.two_particle_exact_density(s, 5e-5, R_C)
    a = amplify.two_particle_post_variances_and_density(s, 5e-5, R_C)
    assert mean == a.density_mean
    assert math.isclose(var, a.density_var, rel_tol=1e-6)


def test_variances_close_to_exact_in_regime():
    s = amplify.TwoParticleGaussian(1e-22, 1e-22, 1e-15)
    k = 5e-5
    ex = amplify.two_particle_exact(s, 0.3 * R_C, k, R_C)
    a = amplify.two_particle_post_variances_and_density(s, k, R_C)
    # the exact variances differ from the approximations only at first order in k
    assert abs(ex.var_cm / a.var_cm - 1) < 10 * k
    assert abs(ex.var_rel / a.var_rel - 1) < 10 * k


def test_energy_kick():
    p = ModelParams(mass=1e-27)
    e = amplify.energy_kick_estimate(5e-29, p)
    assert e.valid
    assert math.isclose(e.value / amplify.level_spacing(5e-29, p.mass), 5e-5, rel_tol=1e-12)
    assert amplify.energy_kick_estimate(5e-29, p.with_(v_eta=math.inf)).value == 0.0
    assert math.isclose(amplify.energy_kick_estimate(2.5e-29, p).value, 2 * e.value, rel_tol=1e-15)
    assert not amplify.energy_kick_estimate(1e-15, p).valid
