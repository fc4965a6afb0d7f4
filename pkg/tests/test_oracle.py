import json
import math

import numpy as np
import pytest

from dgrw import oracle, trajectory
from dgrw.core import HBAR, ModelParams, derive_params, grw_heating_rate, preset_params, scaled_params
from dgrw.gaussian import GaussianState, observables


def test_mean_momentum():
    p = scaled_params(0.05, 1.0)
    assert oracle.mean_momentum(2.0, 0.0, p) == 2.0
    tau = (1 + p.k) / (2 * p.k * p.lambda_rate)
    assert math.isclose(oracle.mean_momentum(2.0, tau, p), 2.0 / math.e, rel_tol=1e-14)
    assert math.isclose(oracle.mean_momentum(1.0, 10.0, p), math.exp(-20 * 0.05 / 1.05), rel_tol=1e-14)
    assert np.all(oracle.mean_momentum(3.0, np.linspace(0, 1e9, 5), scaled_params(0.0, 1.0)) == 3.0)


def test_mean_energy():
    p = ModelParams(mass=1e-3)
    d = derive_params(p)
    assert math.isclose(d.h_as, 1.4e-24, rel_tol=0.02)
    assert 0.15 < d.temperature < 0.25
    assert oracle.mean_energy(1.5e-30, 0.0, p) == 1.5e-30
    q = scaled_params(0.05, 1.0)
    assert math.isclose(oracle.mean_energy(7.0, 1e4, q), derive_params(q).h_as, rel_tol=1e-12)
    grw = ModelParams(v_eta=math.inf)
    assert math.isclose(oracle.mean_energy(0.0, 10.0, grw), 10 * grw_heating_rate(grw), rel_tol=1e-14)


def test_mean_energy_grw_slope_limit():
    base = ModelParams(mass=1e-27)
    p = base.with_(v_eta=base.hbar / (2 * base.mass * 1e-9 * base.r_c))
    t = 1e-8 / derive_params(p).xi
    slope = float(oracle.mean_energy(0.0, t, p)) / t
    assert math.isclose(slope, grw_heating_rate(base), rel_tol=1e-6)


def test_energy_drift_matches_derivative():
    p = scaled_params(0.1, 2.0)
    h0, dt = 3.0, 1e-6
    num = (oracle.mean_energy(h0, dt, p) - oracle.mean_energy(h0, 0.0, p)) / dt
    assert math.isclose(num, oracle.energy_drift(h0, p), rel_tol=1e-5)


def test_var_x_rho():
    p = scaled_params(0.05, 1.0)
    assert oracle.var_x_rho(0.5, 0.0, p) == 0.5
    g = scaled_params(0.0, 1.0)
    t = 3.0
    assert math.isclose(oracle.var_x_rho(0.5, t, g), 0.5 + t**3 / (6 * g.mass**2), rel_tol=1e-14)


def test_exact_moments_reduce_to_small_k_form():
    # at small k the exact moment solution and the small-k closed form agree
    p = scaled_params(1e-7, 1.0)
    s0 = GaussianState(0.2, 0.8, 1.0)
    t = np.linspace(0, 5, 6)
    m = oracle.exact_moments(s0, t, p)
    ref = oracle.var_x_rho(oracle.free_variance(s0, t, p), t, p)
    np.testing.assert_allclose(m.var_x, ref, rtol=1e-5)
    ob = observables(s0, p)
    np.testing.assert_allclose(m.mean_p, oracle.mean_momentum(ob.mean_p, t, p), rtol=1e-12)
    np.testing.assert_allclose(m.energy, oracle.mean_energy(ob.kinetic_energy, t, p), rtol=1e-10)


def test_exact_moments_energy_at_finite_k():
    p = scaled_params(0.3, 0.5)
    s0 = GaussianState(0.0, 2.0, complex(0.7, 0.4))
    t = np.array([0.0, 1.0, 4.0, 50.0])
    m = oracle.exact_moments(s0, t, p)
    ob = observables(s0, p)
    np.testing.assert_allclose(m.energy, oracle.mean_energy(ob.kinetic_energy, t, p), rtol=1e-10)
    np.testing.assert_allclose(m.mean_p, oracle.mean_momentum(ob.mean_p, t, p), rtol=1e-10)


def test_characteristic_function_basic():
    p = scaled_params(0.05, 1.0)
    s0 = GaussianState(0.3, 1.0, complex(0.8, 0.3))
    for t in (0.0, 0.5, 3.0):
        assert abs(oracle.characteristic_function(0.0, 0.0, t, s0, p) - 1.0) < 1e-15
        a = oracle.characteristic_function(0.7, -0.4, t, s0, p)
        b = oracle.characteristic_function(-0.7, 0.4, t, s0, p)
        assert abs(a - b.conjugate()) < 1e-12


def test_chi_moments():
    p = scaled_params(1e-9, 1.0)
    s0 = GaussianState(0.1, 0.6, 1.2)
    t = 1.5
    fd = oracle.chi_moments(s0, t, p)
    ob = observables(s0, p)
    assert math.isclose(fd["mean_p"], float(oracle.mean_momentum(ob.mean_p, t, p)), rel_tol=1e-6)
    vr = float(oracle.var_x_rho(oracle.free_variance(s0, t, p), t, p))
    assert math.isclose(fd["var_x"], vr, rel_tol=1e-6)
    assert math.isclose(fd["mean_x"], ob.mean_x + ob.mean_p * t / p.mass, rel_tol=1e-6)


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
def test_chi_quadrature_failure_is_reported():
    p = scaled_params(0.05, 1.0)
    with pytest.raises(oracle.QuadratureError):
        oracle.chi_exponent(1e3, 0.0, 1e6, p, epsabs=1e-300, epsrel=1e-300)


def test_branch_sqrt():
    rng = np.random.default_rng(1)
    for z in rng.normal(size=200) + 1j * rng.normal(size=200):
        w = oracle.branch_sqrt(z)
        assert abs(w * w - z) <= 1e-14 * abs(z)
    assert oracle.branch_sqrt(4.0) == 2.0
    assert oracle.branch_sqrt(0j) == 0
    w = oracle.branch_sqrt(2j)
    assert abs(w - (1 + 1j)) < 1e-15
    # negative real part: the branch points into the upper / lower half plane
    assert oracle.branch_sqrt(complex(-1, 1e-3)).imag > 0
    assert oracle.branch_sqrt(complex(-1, -1e-3)).imag < 0


def test_asymptotic_macro():
    p = ModelParams(mass=1e-3, lambda_rate=1e7)
    vx, vp = oracle.asymptotic_variances(p, 1e7)
    assert math.isclose(vp, 7e-43, rel_tol=0.3)
    assert math.isclose(vx * vp, 2 * (HBAR / 2) ** 2, rel_tol=0.2)
    # the three independent routes agree
    dx, dp = oracle.asymptotic_variances_discriminant(p, 1e7)
    mx, mp = oracle.asymptotic_variances_mp(p, 1e7)
    assert math.isclose(vx, dx, rel_tol=1e-12) and math.isclose(vx, mx, rel_tol=1e-12)
    assert math.isclose(vp, dp, rel_tol=1e-12) and math.isclose(vp, mp, rel_tol=1e-12)


@pytest.mark.parametrize("eps", np.geomspace(1e-24, 1e24, 20))
def test_discriminant_stable(eps):
    for k in (0.0, 5e-29, 5e-5, 0.05):
        p = scaled_params(k, eps)
        vx, vp = oracle.asymptotic_variances_discriminant(p)
        rx, rp = oracle.asymptotic_variances_mp(p)
        assert np.isfinite(vx) and vx > 0 and np.isfinite(vp) and vp > 0
        assert math.isclose(vx, rx, rel_tol=1e-12) and math.isclose(vp, rp, rel_tol=1e-12)
        cx, cp = oracle.asymptotic_variances(p, cross_check=False)
        assert math.isclose(vx, cx, rel_tol=1e-9) and math.isclose(vp, cp, rel_tol=1e-9)


def test_k0_matches_iteration():
    p = scaled_params(0.0, 0.3)
    gam = oracle.gamma_equilibrium(p)
    it, _ = oracle.iterate_fixed_point(p, 1.0)
    assert abs(it - gam) <= 1e-10 * abs(gam)
    assert abs(oracle.mobius_fixed_point(p, 1.0) - gam) <= 1e-10 * abs(gam)


def test_fixed_point_error():
    with pytest.raises(oracle.FixedPointError):
        oracle.iterate_fixed_point(scaled_params(0.0, 1e-6), 1.0, max_iter=3)
    with pytest.raises(ValueError):
        oracle.gamma_equilibrium(scaled_params(0.1, 1.0), lambda_eff=0.0)


def test_momentum_transfer_checks():
    p = scaled_params(0.05, 1.0)
    s = GaussianState(0.0, 2.0, 1.0)
    q = oracle.momentum_transfer_checks(s, p)
    c = oracle.momentum_drift_closed_form(s, p)
    assert math.isclose(q[0], c[0], rel_tol=1e-6) and math.isclose(q[1], c[1], rel_tol=1e-6)
    g = scaled_params(0.0, 1.0)
    dp, dh = oracle.momentum_transfer_checks(s, g)
    assert dp == 0.0
    assert math.isclose(dh, grw_heating_rate(g), rel_tol=1e-6)


def test_momentum_transfer_si():
    p = ModelParams(mass=1e-27, v_eta=1e3)
    s = GaussianState(0.0, 3 * p.hbar / p.r_c, p.r_c**2)
    q = oracle.momentum_transfer_checks(s, p)
    c = oracle.momentum_drift_closed_form(s, p)
    assert math.isclose(q[0], c[0], rel_tol=1e-6) and math.isclose(q[1], c[1], rel_tol=1e-6)


def test_collisional():
    c = oracle.collisional_correspondence(ModelParams())
    assert math.isclose(c.lambda_th, 4 * math.sqrt(math.pi) * 1e-7, rel_tol=1e-15)
    assert c.v_mp == ModelParams().v_eta
    assert oracle.CollisionalCorrespondence.from_json(c.to_json()) == c


def test_threshold_from_auxiliary_dynamics():
    # jumps only: the width settles where jumps stop localizing
    p = scaled_params(0.05, 1.0)
    ser = trajectory.ensemble_statistics(p, GaussianState(0.0, 0.0, 3.0), np.array([0.0, 400.0]),
                                         20, 1, hamiltonian=False)
    v = ser.estimate["var_x_psi"][-1]
    thr = oracle.threshold_variance(p)
    assert math.isclose(v, thr, rel_tol=1e-10)
    h_as = p.hbar**2 / (4 * thr) / (2 * p.mass)
    assert math.isclose(h_as, derive_params(p).h_as, rel_tol=1e-14)


def test_predict_dispatch():
    p = preset_params("macro_1g")
    s0 = GaussianState(0.0, 0.0, p.r_c**2)
    for kind in oracle.KINDS:
        pred = oracle.predict(kind, p, s0=s0, t=1e-7, nu=1e-30)
        json.dumps(pred.as_dict())
    assert oracle.predict("mean_h", p, h0=2.0).value == 2.0
    with pytest.raises(ValueError):
        oracle.predict("nope", p)
