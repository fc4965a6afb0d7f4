"""Closed-form dynamics of Gaussian wavefunctions.

A state is

    psi(X) = C exp(-(X - alpha)**2 / (2 gamma)) exp(i beta (X - alpha) / hbar)

with complex ``alpha`` and ``gamma`` (Re gamma > 0) and real ``beta``.  The
global phase is never stored.  All functions accept numpy arrays for the
three parameters and broadcast, which is what the vectorized trajectory
engine relies on.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ModelParams


@dataclass(frozen=True)
class GaussianState:
    alpha: complex
    beta: float
    gamma: complex

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.complex128(self.alpha) if np.ndim(self.alpha) == 0
                           else np.asarray(self.alpha, dtype=np.complex128))
        object.__setattr__(self, "beta", np.float64(self.beta) if np.ndim(self.beta) == 0
                           else np.asarray(self.beta, dtype=np.float64))
        object.__setattr__(self, "gamma", np.complex128(self.gamma) if np.ndim(self.gamma) == 0
                           else np.asarray(self.gamma, dtype=np.complex128))
        if np.any(~(np.real(self.gamma) > 0)):
            raise ValueError("Re(gamma) must be positive")

    @classmethod
    def minimum_uncertainty(cls, mean_x=0.0, mean_p=0.0, gamma=1.0):
        return cls(mean_x, mean_p, gamma)

    def as_dict(self):
        return {
            "alpha": [float(np.real(self.alpha)), float(np.imag(self.alpha))],
            "beta": float(self.beta),
            "gamma": [float(np.real(self.gamma)), float(np.imag(self.gamma))],
        }

    @classmethod
    def from_dict(cls, d):
        def _c(v):
            return complex(v[0], v[1]) if isinstance(v, (list, tuple)) else complex(v)
        return cls(_c(d["alpha"]), float(d["beta"]), _c(d["gamma"]))


@dataclass(frozen=True)
class Observables:
    mean_x: float
    var_x: float
    mean_p: float
    var_p: float
    kinetic_energy: float


@dataclass(frozen=True)
class GaussianDensity:
    """Normal density of the jump position."""

    mean: float
    var: float

    @property
    def std(self):
        return np.sqrt(self.var)

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        return np.exp(-0.5 * (y - self.mean) ** 2 / self.var) / np.sqrt(2.0 * np.pi * self.var)


def _check_k(k):
    if not 0.0 <= k < 1.0:
        raise ValueError(f"k = {k!r} outside [0, 1)")


def free_evolve(s: GaussianState, dt, params: ModelParams) -> GaussianState:
    dt = np.asarray(dt, dtype=float)
    if np.any(dt < 0):
        raise ValueError("dt must be non-negative")
    return GaussianState(
        s.alpha + s.beta * dt / params.mass,
        s.beta,
        s.gamma + 1j * (params.hbar / params.mass) * dt,
    )


def jump_maps(gamma, k, r_c):
    """Post-jump width and mixing weight ``(gamma', g)`` for width ``gamma``.

    Uses the reciprocal form Gamma' = a**2 Gamma + 1/s**2 so that very wide
    states do not lose precision.
    """
    a = (1.0 - k) / (1.0 + k)
    s2 = (r_c * (1.0 + k)) ** 2
    inv = 1.0 / gamma
    inv_new = a * a * inv + 1.0 / s2
    return 1.0 / inv_new, a * inv / inv_new


def apply_jump(s: GaussianState, y, k, r_c) -> GaussianState:
    _check_k(k)
    gamma_new, g = jump_maps(s.gamma, k, r_c)
    a = (1.0 - k) / (1.0 + k)
    return GaussianState(g * s.alpha + (1.0 - g) * y, s.beta * a, gamma_new)


def g_real(gamma, k, r_c):
    """The weight g for real width, written as in the real-parameter density."""
    return 1.0 / (gamma / (r_c**2 * (1.0 - k * k)) + (1.0 - k) / (1.0 + k))


def jump_position_density(s: GaussianState, k, r_c, hbar=1.0) -> GaussianDensity:
    """Exact density of the jump position, p(y) = ||L_y psi||**2.

    For any Gaussian (complex alpha, gamma) the density is normal with the
    position mean of the state and variance var_x + (1 - k)**2 r_c**2 / 2.
    ``hbar`` is unused here; the result does not depend on it.
    """
    _check_k(k)
    gr = np.real(s.gamma)
    gi = np.imag(s.gamma)
    mean = np.real(s.alpha) + gi / gr * np.imag(s.alpha)
    var = (gr * gr + gi * gi) / (2.0 * gr) + 0.5 * ((1.0 - k) * r_c) ** 2
    return GaussianDensity(mean, var)


def prdi_density(alpha: float, gamma: float, k, r_c) -> GaussianDensity:
    """Jump density for real alpha and gamma via the weight g."""
    g = g_real(gamma, k, r_c)
    return GaussianDensity(alpha, (1.0 - k * k) * r_c**2 / (2.0 * g))


def observables(s: GaussianState, params: ModelParams) -> Observables:
    hbar, mass = params.hbar, params.mass
    gr = np.real(s.gamma)
    gi = np.imag(s.gamma)
    ai = np.imag(s.alpha)
    mean_x = np.real(s.alpha) + gi / gr * ai
    var_x = (gr * gr + gi * gi) / (2.0 * gr)
    mean_p = s.beta + hbar * ai / gr
    var_p = hbar * hbar / (2.0 * gr)
    energy = (var_p + mean_p * mean_p) / (2.0 * mass)
    return Observables(mean_x, var_x, mean_p, var_p, energy)


def cov_xp(s: GaussianState, hbar) -> float:
    """Symmetrized covariance <(XP + PX)/2> - <X><P>."""
    return hbar * np.imag(s.gamma) / (2.0 * np.real(s.gamma))


def log_norm_constant(s: GaussianState, hbar):
    """log |C| of the normalization constant."""
    gr = np.real(s.gamma)
    ai = np.imag(s.alpha)
    return (-0.25 * np.log(np.pi * np.abs(s.gamma) ** 2 / gr)
            - ai * ai / (2.0 * gr) - s.beta * ai / hbar)


def wavefunction(s: GaussianState, x, hbar):
    x = np.asarray(x, dtype=float)
    d = x - s.alpha
    return np.exp(log_norm_constant(s, hbar) - d * d / (2.0 * s.gamma) + 1j * s.beta * d / hbar)


class NormDeficitError(RuntimeError):
    pass


def evaluate_on_grid(s: GaussianState, grid, hbar, tol=1e-6):
    """Sample the state on ``grid`` (a ``grid.Grid``) as a GridWavefunction.

    Raises NormDeficitError if the grid misses more than ``tol`` of the norm.
    """
    from .grid import GridWavefunction

    amp = wavefunction(s, grid.x, hbar)
    norm = float(np.sum(np.abs(amp) ** 2) * grid.dx)
    if abs(1.0 - norm) > tol:
        raise NormDeficitError(f"grid too narrow: discrete norm {norm:.3e}")
    return GridWavefunction(grid.x0, grid.dx, amp)


def characteristic_function(s: GaussianState, nu, mu, hbar):
    """Tr(rho exp(i(nu X + mu P)/hbar)) for the pure Gaussian state."""
    ob_mx = np.real(s.alpha) + np.imag(s.gamma) / np.real(s.gamma) * np.imag(s.alpha)
    gr = np.real(s.gamma)
    vx = np.abs(s.gamma) ** 2 / (2.0 * gr)
    mp = s.beta + hbar * np.imag(s.alpha) / gr
    vp = hbar**2 / (2.0 * gr)
    cxp = hbar * np.imag(s.gamma) / (2.0 * gr)
    nu = np.asarray(nu, dtype=float)
    mu = np.asarray(mu, dtype=float)
    phase = (nu * ob_mx + mu * mp) / hbar
    quad = (nu * nu * vx + 2.0 * nu * mu * cxp + mu * mu * vp) / hbar**2
    return np.exp(1j * phase - 0.5 * quad)


def to_scaled(s: GaussianState, params: ModelParams) -> GaussianState:
    r = params.r_c
    return GaussianState(s.alpha / r, s.beta * r / params.hbar, s.gamma / r**2)


def from_scaled(s: GaussianState, params: ModelParams) -> GaussianState:
    r = params.r_c
    return GaussianState(s.alpha * r, s.beta * params.hbar / r, s.gamma * r**2)
