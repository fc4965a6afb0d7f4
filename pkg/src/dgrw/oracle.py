"""Closed-form predictions for ensemble averages, with independent cross-checks.

Every prediction here is a function of ModelParams.  Where cheap, a second
route to the same number (quadrature, ODE solution, matrix iteration) is
provided so that the Monte Carlo engine has two oracles to agree with.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy import integrate, linalg

from .core import ModelParams, derive_params
from .gaussian import GaussianState, characteristic_function as gaussian_chi
from .gaussian import cov_xp, observables


class QuadratureError(RuntimeError):
    pass


class FixedPointError(RuntimeError):
    pass


@dataclass(frozen=True)
class OraclePrediction:
    kind: str
    value: object
    formula: str

    def as_dict(self):
        v = self.value
        if isinstance(v, complex):
            v = [v.real, v.imag]
        elif isinstance(v, tuple):
            v = list(v)
        return {"kind": self.kind, "value": v, "formula": self.formula}


# -- momentum and energy --------------------------------------------------------

def damping_rate(params: ModelParams):
    k = params.k
    return 2.0 * k * params.lambda_rate / (1.0 + k)


def mean_momentum(p0, t, params: ModelParams):
    return p0 * np.exp(-damping_rate(params) * np.asarray(t, dtype=float))


def mean_energy(h0, t, params: ModelParams):
    t = np.asarray(t, dtype=float)
    d = derive_params(params)
    if params.k == 0.0:
        rate = params.hbar**2 * params.lambda_rate / (4.0 * params.mass * params.r_c**2)
        return h0 + rate * t
    # same as (h0 - H_as) exp(-xi t) + H_as, without cancelling H_as at small t
    return h0 * np.exp(-d.xi * t) - d.h_as * np.expm1(-d.xi * t)


def energy_drift(h, params: ModelParams):
    """d<H>/dt at mean energy h."""
    k = params.k
    source = params.hbar**2 * params.lambda_rate / (4.0 * params.mass * params.r_c**2 * (1 + k) ** 2)
    return source - derive_params(params).xi * h


def free_variance(s0: GaussianState, t, params: ModelParams):
    """Position variance under free Schroedinger evolution."""
    g = s0.gamma + 1j * params.hbar * np.asarray(t, dtype=float) / params.mass
    return np.abs(g) ** 2 / (2.0 * np.real(g))


def var_x_rho(free_var, t, params: ModelParams):
    """Position variance of the averaged state in the small-k approximation."""
    t = np.asarray(t, dtype=float)
    k, r_c, lam = params.k, params.r_c, params.lambda_rate
    return (free_var + 2.0 * k * k * r_c**2 * lam * t
            + params.hbar**2 * lam * t**3 / (6.0 * r_c**2 * (1 + k) ** 2 * params.mass**2))


# -- exact second moments ----------------------------------------------------------

def _moment_generator(k, eps_hat):
    """Linear system for (<X>, <P>, <X^2>, <XP+PX>, <P^2>, 1) in scaled units."""
    inv_m = eps_hat
    kappa = 2.0 * k / (1.0 + k)
    xi = 4.0 * k / (1.0 + k) ** 2
    d0 = 0.5 / (1.0 + k) ** 2
    a = np.zeros((6, 6))
    a[0, 1] = inv_m
    a[1, 1] = -kappa
    a[2, 3] = inv_m
    a[2, 5] = 2.0 * k * k
    a[3, 4] = 2.0 * inv_m
    a[3, 3] = -kappa
    a[4, 4] = -xi
    a[4, 5] = d0
    return a


@dataclass(frozen=True)
class Moments:
    mean_x: np.ndarray
    mean_p: np.ndarray
    var_x: np.ndarray
    mean_x2: np.ndarray
    mean_p2: np.ndarray
    energy: np.ndarray


def exact_moments(s0: GaussianState, t, params: ModelParams) -> Moments:
    """First and second moments of the averaged state, without the small-k approximation.

    The jump maps keep the moment hierarchy closed at second order, so the
    moments obey a linear ODE that is solved here by matrix exponentials.
    """
    r, hbar = params.r_c, params.hbar
    ob = observables(s0, params)
    pu = hbar / r
    mx, mp = ob.mean_x / r, ob.mean_p / pu
    v0 = np.array([
        mx,
        mp,
        ob.var_x / r**2 + mx * mx,
        2.0 * cov_xp(s0, hbar) / (r * pu) + 2.0 * mx * mp,
        ob.var_p / pu**2 + mp * mp,
        1.0,
    ])
    gen = _moment_generator(params.k, params.eps_hat)
    ts = np.atleast_1d(np.asarray(t, dtype=float)) * params.lambda_rate
    out = np.array([linalg.expm(gen * tt) @ v0 for tt in ts])
    shape = np.shape(t)
    x, p, x2, p2 = (out[:, i].reshape(shape) for i in (0, 1, 2, 4))
    return Moments(
        mean_x=x * r,
        mean_p=p * pu,
        var_x=(x2 - x * x) * r**2,
        mean_x2=x2 * r**2,
        mean_p2=p2 * pu**2,
        energy=p2 * pu**2 / (2.0 * params.mass),
    )


# -- characteristic function ---------------------------------------------------------

def phi(nu, mu, params: ModelParams):
    k, r_c, hbar = params.k, params.r_c, params.hbar
    return np.exp(-(nu * r_c * k / hbar) ** 2 - mu**2 / (4.0 * r_c**2 * (1 + k) ** 2))


def _one_minus_phi(nu, mu, params):
    k, r_c, hbar = params.k, params.r_c, params.hbar
    return -np.expm1(-(nu * r_c * k / hbar) ** 2 - mu**2 / (4.0 * r_c**2 * (1 + k) ** 2))


def chi_exponent(nu, mu, t, params: ModelParams, epsabs=1e-10, epsrel=1e-12):
    """-lambda * int_0^t (1 - Phi(nu, nu s/M + mu)) ds by adaptive quadrature."""
    if t == 0:
        return 0.0
    m = params.mass

    def f(u):
        return _one_minus_phi(nu, nu * u * t / m + mu, params)

    val, err = integrate.quad(f, 0.0, 1.0, epsabs=epsabs / max(params.lambda_rate * t, 1e-300),
                              epsrel=epsrel, limit=200)
    total = params.lambda_rate * t * val
    if not np.isfinite(total) or params.lambda_rate * t * err > max(epsabs, epsrel * abs(total)) * 10:
        raise QuadratureError(f"characteristic-function integral did not converge (err {err:.2e})")
    return -total


def characteristic_function(nu, mu, t, s0: GaussianState, params: ModelParams, epsabs=1e-10):
    """chi(nu, mu, t) of the averaged state in the small-k approximation."""
    free = gaussian_chi(s0, nu, nu * t / params.mass + mu, params.hbar)
    return complex(free * np.exp(chi_exponent(nu, mu, t, params, epsabs=epsabs)))


def _log_stencil(fn, h):
    pts = (-2, -1, 0, 1, 2)
    vals = np.array([fn(j * h) for j in pts])
    logs = np.log(np.abs(vals)) + 1j * np.unwrap(np.angle(vals))
    d1 = (logs[0] - 8 * logs[1] + 8 * logs[3] - logs[4]) / (12 * h)
    d2 = (-logs[0] + 16 * logs[1] - 30 * logs[2] + 16 * logs[3] - logs[4]) / (12 * h * h)
    return d1, d2


def chi_moments(s0: GaussianState, t, params: ModelParams, rel_step=0.02):
    """<X>, (Delta X)^2 and <P> from central differences of log chi at the origin."""
    ob = observables(s0, params)
    hbar = params.hbar
    sx = math.sqrt(float(free_variance(s0, t, params)) + float(var_x_rho(0.0, t, params)))
    sp = math.sqrt(ob.var_p)
    d1, d2 = _log_stencil(lambda v: characteristic_function(v, 0.0, t, s0, params, epsabs=1e-15),
                          rel_step * hbar / sx)
    dp, _ = _log_stencil(lambda v: characteristic_function(0.0, v, t, s0, params, epsabs=1e-15),
                         rel_step * hbar / sp)
    return {
        "mean_x": float((-1j * hbar * d1).real),
        "var_x": float((-hbar * hbar * d2).real),
        "mean_p": float((-1j * hbar * dp).real),
    }


# -- asymptotic widths -----------------------------------------------------------------

def branch_sqrt(z: complex) -> complex:
    """Square root through the explicit zeta / sign branch rules.

    The imaginary magnitude uses sqrt(1/2 - |x|/(2|z|)) = |y| / (2|z| A)
    (A the real-part factor), which is the same number without cancellation.
    For Re z == 0 the rules leave zeta undefined; sgn(Im z) is used there.
    """
    z = complex(z)
    x, y = z.real, z.imag
    r = abs(z)
    if r == 0.0:
        return 0j
    big = math.sqrt(0.5 + abs(x) / (2.0 * r))
    small = abs(y) / (2.0 * r * big)
    if x > 0:
        zeta = 1.0
    elif x < 0 and y >= 0:
        zeta = 1j
    elif x < 0:
        zeta = -1j
    else:
        s = math.sqrt(r / 2.0)
        return complex(s, math.copysign(s, y))
    sgn = float(np.sign(x * y))
    return zeta * math.sqrt(r) * complex(big, sgn * small)


def _scaled_eq_inputs(params: ModelParams, lambda_eff):
    k = params.k
    eps = params.hbar / (params.mass * lambda_eff) / params.r_c**2
    return 4.0 * k, eps, (1.0 + k) ** 2, ((1.0 - k) / (1.0 + k)) ** 2


def gamma_equilibrium(params: ModelParams, lambda_eff=None):
    """Equilibrium width for equally spaced jumps, in units of r_c**2."""
    lam = params.lambda_rate if lambda_eff is None else lambda_eff
    if not lam > 0:
        raise ValueError("lambda_eff must be positive")
    g, eps, s2, _ = _scaled_eq_inputs(params, lam)
    b = complex(g, -eps)
    w = branch_sqrt(b * b + 4j * eps * s2)
    if (b.conjugate() * w).real >= 0:
        return 0.5 * (b + w)
    # b and w nearly cancel; take the other root and use the product of roots
    return -1j * eps * s2 / (0.5 * (b - w))


def cycle_map(gamma, params: ModelParams, lambda_eff):
    """One free step of 1/lambda_eff followed by the jump width map (scaled units)."""
    g, eps, s2, a2 = _scaled_eq_inputs(params, lambda_eff)
    z = gamma + 1j * eps
    return 1.0 / (a2 / z + 1.0 / s2)


def mobius_fixed_point(params: ModelParams, lambda_eff, gamma0=1.0, doublings=200, dps=60):
    """Limit of the cycle map iterated 2**doublings times, in extended precision."""
    with mpmath.workdps(dps):
        k = mpmath.mpf(params.k)
        eps = mpmath.mpf(params.hbar) / (mpmath.mpf(params.mass) * mpmath.mpf(lambda_eff)) \
            / mpmath.mpf(params.r_c) ** 2
        s2 = (1 + k) ** 2
        a2 = ((1 - k) / (1 + k)) ** 2
        m = mpmath.matrix([[s2, 1j * eps * s2], [1, 1j * eps + a2 * s2]])
        for _ in range(doublings):
            m = m * m
            m = m / mpmath.mnorm(m, 1)
        z = mpmath.mpc(gamma0)
        val = (m[0, 0] * z + m[0, 1]) / (m[1, 0] * z + m[1, 1])
        return complex(val)


def iterate_fixed_point(params: ModelParams, lambda_eff, gamma0=1.0, tol=1e-13, max_iter=10**7):
    """Plain iteration of the cycle map; usable when convergence is fast."""
    gam = complex(gamma0)
    for i in range(max_iter):
        new = cycle_map(gam, params, lambda_eff)
        if abs(new - gam) <= tol * abs(new):
            return new, i + 1
        gam = new
    raise FixedPointError("cycle map iteration did not converge")


def asymptotic_variances(params: ModelParams, lambda_eff=None, tol=1e-10, cross_check=True):
    """(var_x, var_p) at the equal-spacing equilibrium, in SI units."""
    lam = params.lambda_rate if lambda_eff is None else lambda_eff
    gam = gamma_equilibrium(params, lam)
    resid = abs(cycle_map(gam, params, lam) - gam) / abs(gam)
    if not resid <= tol:
        raise FixedPointError(f"fixed-point residual {resid:.3e} exceeds {tol:.1e}")
    if cross_check:
        ref = mobius_fixed_point(params, lam)
        if not abs(ref - gam) <= 1e-8 * abs(gam):
            raise FixedPointError(f"iterated map converged to {ref}, closed form gives {gam}")
    r2 = params.r_c**2
    var_x = abs(gam) ** 2 / (2.0 * gam.real) * r2
    var_p = params.hbar**2 / (2.0 * gam.real * r2)
    return var_x, var_p


def asymptotic_variances_discriminant(params: ModelParams, lambda_eff=None):
    """The same two variances from the real discriminant formulas.

    Rearranged so that no difference of nearly equal terms occurs; in scaled
    units with g = gamma_thr, E = g^2 - 8 g s^2 + 8 s^4 = 8 (1 + k^4).
    """
    lam = params.lambda_rate if lambda_eff is None else lambda_eff
    k = params.k
    g, eps, s2, _ = _scaled_eq_inputs(params, lam)
    e = 8.0 * (1.0 + k**4)
    q = g / eps
    chi = math.sqrt(1.0 + 2.0 * e / eps**2 + q**4)
    a = (1.0 + 2.0 * e / eps**2) / (chi + q * q) + 1.0
    eps2b = (2.0 * e + g**4 / eps**2) / (chi + 1.0) + g * g
    var_x = s2 / (1.0 + math.sqrt(a / 2.0))
    var_p = 1.0 / (g + math.sqrt(eps2b / 2.0))
    r2 = params.r_c**2
    return var_x * r2, var_p * params.hbar**2 / r2


def asymptotic_variances_mp(params: ModelParams, lambda_eff=None, dps=80):
    """Discriminant formulas evaluated literally in extended precision."""
    lam = params.lambda_rate if lambda_eff is None else lambda_eff
    with mpmath.workdps(dps):
        k = mpmath.mpf(params.k)
        r2 = mpmath.mpf(params.r_c) ** 2
        eps = mpmath.mpf(params.hbar) / (mpmath.mpf(params.mass) * mpmath.mpf(lam))
        g = 4 * k * r2
        s2 = r2 * (1 + k) ** 2
        chi = mpmath.sqrt(g**4 / eps**4 + 2 * (g**2 - 8 * g * s2 + 8 * s2**2) / eps**2 + 1)
        vx = s2 / (1 + mpmath.sqrt((chi - g**2 / eps**2 + 1) / 2))
        vp = mpmath.mpf(params.hbar) ** 2 / (g + eps * mpmath.sqrt((chi + g**2 / eps**2 - 1) / 2))
        return float(vx), float(vp)


def threshold_variance(params: ModelParams):
    """Position variance gamma_thr / 2 at which jumps stop localizing."""
    return 2.0 * params.k * params.r_c**2


# -- momentum transfer by quadrature -------------------------------------------------------

def momentum_transfer_checks(s: GaussianState, params: ModelParams, epsabs=1e-13, epsrel=1e-11):
    """(d<P>/dt, d<H>/dt) from the momentum-kick integral, by 2-D quadrature.

    Scaled units: P and Q in hbar/r_c, rates in lambda.  The Q integral is
    folded onto Q >= 0 so the k = 0 symmetry holds exactly.
    """
    k, eps_hat = params.k, params.eps_hat
    ob = observables(s, params)
    pu = params.hbar / params.r_c
    mp = ob.mean_p / pu
    sp = math.sqrt(ob.var_p) / pu
    c = (1.0 + k) / math.sqrt(math.pi)

    def weight(q, p):
        return c * math.exp(-((1.0 + k) * q + 2.0 * k * p) ** 2)

    def dens(p):
        return math.exp(-0.5 * ((p - mp) / sp) ** 2) / (math.sqrt(2.0 * math.pi) * sp)

    def kick_p(q, p):
        return (weight(q, p) - weight(-q, p)) * q * dens(p)

    def kick_h(q, p):
        wp, wm = weight(q, p), weight(-q, p)
        return ((wp + wm) * q * q + 2.0 * p * q * (wp - wm)) * 0.5 * eps_hat * dens(p)

    p_lo, p_hi = mp - 12.0 * sp, mp + 12.0 * sp

    def q_hi(p):
        return abs(2.0 * k * p) / (1.0 + k) + 12.0 / (1.0 + k)

    results = []
    for fn in (kick_p, kick_h):
        val, err = integrate.dblquad(fn, p_lo, p_hi, 0.0, q_hi, epsabs=epsabs, epsrel=epsrel)
        if not np.isfinite(val) or err > max(10 * epsabs, 1e-8 * abs(val)):
            raise QuadratureError(f"momentum-transfer quadrature error {err:.2e}")
        results.append(val)
    lam = params.lambda_rate
    dp = results[0] * lam * pu
    # scaled energy unit is hbar * lambda
    dh = results[1] * params.hbar * lam * lam
    return dp, dh


def momentum_drift_closed_form(s: GaussianState, params: ModelParams):
    ob = observables(s, params)
    return -damping_rate(params) * ob.mean_p, energy_drift(ob.kinetic_energy, params)


# -- collisional model dictionary ---------------------------------------------------------

@dataclass(frozen=True)
class CollisionalCorrespondence:
    lambda_th: float
    v_mp: float
    lambda_expression: str = "lambda <-> 16*pi*K^2*n_gas*m/hbar^3"

    def to_json(self):
        return json.dumps({"lambda_th": self.lambda_th, "v_mp": self.v_mp,
                           "lambda_expression": self.lambda_expression})

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


def collisional_correspondence(params: ModelParams) -> CollisionalCorrespondence:
    return CollisionalCorrespondence(lambda_th=4.0 * math.sqrt(math.pi) * params.r_c,
                                     v_mp=params.v_eta)


# -- dispatcher used by the command line ----------------------------------------------------

KINDS = ("mean_p", "mean_h", "var_x_rho", "chi", "asymptotic", "derived", "collisional")


def predict(kind, params: ModelParams, s0: GaussianState | None = None, t=0.0, nu=0.0, mu=0.0,
            lambda_eff=None, p0=None, h0=None):
    if kind == "mean_p":
        if p0 is None:
            p0 = float(observables(s0, params).mean_p) if s0 is not None else 0.0
        return OraclePrediction(kind, float(mean_momentum(p0, t, params)), "p0*exp(-2k*lambda*t/(1+k))")
    if kind == "mean_h":
        if h0 is None:
            h0 = float(observables(s0, params).kinetic_energy) if s0 is not None else 0.0
        return OraclePrediction(kind, float(mean_energy(h0, t, params)),
                                "(h0-H_as)*exp(-xi*t)+H_as")
    if kind == "var_x_rho":
        fv = float(free_variance(s0, t, params))
        return OraclePrediction(kind, float(var_x_rho(fv, t, params)),
                                "free_var+2k^2 r_c^2 lambda t+hbar^2 lambda t^3/(6 r_c^2 (1+k)^2 M^2)")
    if kind == "chi":
        return OraclePrediction(kind, characteristic_function(nu, mu, t, s0, params),
                                "chi0(nu, nu t/M + mu) exp(-lambda int (1-Phi))")
    if kind == "asymptotic":
        return OraclePrediction(kind, asymptotic_variances(params, lambda_eff),
                                "equal-spacing equilibrium width")
    if kind == "derived":
        return OraclePrediction(kind, derive_params(params).as_dict(), "closed forms")
    if kind == "collisional":
        c = collisional_correspondence(params)
        return OraclePrediction(kind, json.loads(c.to_json()), "collisional identification")
    raise ValueError(f"unknown oracle kind {kind!r}; choose from {KINDS}")
