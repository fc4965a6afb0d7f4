"""Composite bodies: rigid-body reduction and the two-particle jump example."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ModelParams, R_C_DEFAULT, default_v_eta, HBAR


@dataclass(frozen=True)
class Species:
    mass: float
    lambda_rate: float
    count: float = 1.0


@dataclass(frozen=True)
class BodySpec:
    """Constituents of a body.

    Each entry is (mass, lambda_rate) or (mass, lambda_rate, count); the
    count lets Avogadro-sized bodies be described without listing every
    particle.
    """

    particles: tuple
    rigid: bool = True

    def __post_init__(self):
        parts = tuple(p if isinstance(p, Species) else Species(*p) for p in self.particles)
        if not parts:
            raise ValueError("a body needs at least one particle")
        for p in parts:
            if not (p.mass > 0 and p.lambda_rate > 0 and p.count > 0):
                raise ValueError(f"masses, rates and counts must be positive: {p}")
        object.__setattr__(self, "particles", parts)

    @property
    def total_mass(self):
        return float(sum(p.mass * p.count for p in self.particles))

    @property
    def total_rate(self):
        return float(sum(p.lambda_rate * p.count for p in self.particles))

    @classmethod
    def from_dict(cls, d):
        parts = []
        for p in d["particles"]:
            if isinstance(p, dict):
                parts.append(Species(float(p["mass"]), float(p["lambda_rate"]), float(p.get("count", 1))))
            else:
                parts.append(Species(*map(float, p)))
        return cls(tuple(parts), bool(d.get("rigid", True)))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


class NonRigidBodyError(ValueError):
    pass


def rigid_body_reduce(b: BodySpec, v_eta=None, r_c=R_C_DEFAULT, hbar=HBAR) -> ModelParams:
    """Centre-of-mass parameters: lambda_T = sum of rates, M_T = total mass."""
    if not b.rigid:
        raise NonRigidBodyError("only rigid bodies can be reduced to a single particle")
    if v_eta is None:
        v_eta = default_v_eta(r_c, hbar)
    return ModelParams(lambda_rate=b.total_rate, r_c=r_c, v_eta=v_eta, mass=b.total_mass, hbar=hbar)


# -- two particles ---------------------------------------------------------------

@dataclass(frozen=True)
class TwoParticleGaussian:
    """Product of a centre-of-mass Gaussian at 0 and a relative one at alpha_rel."""

    gamma_cm: float
    gamma_rel: float
    alpha_rel: float

    def __post_init__(self):
        if not (self.gamma_cm > 0 and self.gamma_rel > 0):
            raise ValueError("both widths must be positive")


def two_particle_jump_means(s: TwoParticleGaussian, y, k, r_c):
    """Post-jump <X_CM>, <X_REL> for a jump on particle 1, rational forms."""
    g, gp, al = s.gamma_cm, s.gamma_rel, s.alpha_rel
    den = 4.0 * (1 - k) ** 2 * r_c**2 + 4.0 * g + gp
    x_cm = 2.0 * (al - 2.0 * y) * ((1 - k) * k * r_c**2 - g) / den
    x_rel = (4.0 * al * ((1 - k) * r_c**2 + g) - 2.0 * y * (4.0 * (1 - k) * k * r_c**2 - gp)) / den
    return x_cm, x_rel


def two_particle_means_limit(alpha, y, k):
    """Leading behaviour of the means when k r_c^2 dominates both widths."""
    return k * (alpha - 2.0 * y) / (2.0 - 2.0 * k), (alpha - 2.0 * k * y) / (1.0 - k)


def _post_jump_quadratic(s: TwoParticleGaussian, y, k, r_c):
    """Hessian H and linear term c of Q, with |psi_y|^2 ~ exp(-2 Q), Q = z.H.z/2 - c.z."""
    s2 = (r_c * (1 + k)) ** 2
    # each factor is (u . z + u0)^2 / (2 w), z = (X_CM, X_REL)
    rows = [
        (np.array([1.0, 0.5]), -y, s2),
        (np.array([1.0, -0.5 * k]) / (1 + k), k * y / (1 + k), s.gamma_cm),
        (np.array([-2.0 * k, 1.0]) / (1 + k), 2.0 * k * y / (1 + k) - s.alpha_rel, s.gamma_rel),
    ]
    h = np.zeros((2, 2))
    c = np.zeros(2)
    for u, u0, w in rows:
        h += np.outer(u, u) / w
        c -= u * u0 / w
    return h, c


@dataclass(frozen=True)
class TwoParticleExact:
    mean_cm: float
    mean_rel: float
    var_cm: float
    var_rel: float
    cov: float


def two_particle_exact(s: TwoParticleGaussian, y, k, r_c) -> TwoParticleExact:
    """Post-jump moments from the exact two-dimensional Gaussian."""
    h, c = _post_jump_quadratic(s, y, k, r_c)
    mean = np.linalg.solve(h, c)
    cov = np.linalg.inv(2.0 * h)
    return TwoParticleExact(mean[0], mean[1], cov[0, 0], cov[1, 1], cov[0, 1])


def two_particle_exact_density(s: TwoParticleGaussian, k, r_c):
    """(mean, var) of the exact jump-position density for particle 1."""
    return 0.5 * s.alpha_rel, s.gamma_cm / 2 + s.gamma_rel / 8 + 0.5 * ((1 - k) * r_c) ** 2


@dataclass(frozen=True)
class TwoParticleApprox:
    var_cm: float
    var_rel: float
    density_mean: float
    density_var: float
    valid: bool

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        return np.exp(-0.5 * (y - self.density_mean) ** 2 / self.density_var) / np.sqrt(
            2.0 * np.pi * self.density_var)


def regime_valid(s: TwoParticleGaussian, k, r_c, ratio=100.0):
    return bool(k * r_c**2 >= ratio * max(s.gamma_cm, s.gamma_rel))


def two_particle_post_variances_and_density(s: TwoParticleGaussian, k, r_c) -> TwoParticleApprox:
    """Small-width approximations of the post-jump variances and jump density."""
    g, gp = s.gamma_cm, s.gamma_rel
    return TwoParticleApprox(
        var_cm=g / 2 + k * k * gp / 8,
        var_rel=gp / 2 + 2 * k * k * g,
        density_mean=s.alpha_rel / 2,
        density_var=((1 - k) * r_c) ** 2 / 2,
        valid=regime_valid(s, k, r_c),
    )


@dataclass(frozen=True)
class EnergyKick:
    value: float
    valid: bool


def energy_kick_estimate(gamma, params: ModelParams, ratio=100.0) -> EnergyKick:
    """Typical energy exchanged in one jump, hbar^2 k / (M gamma)."""
    val = params.hbar**2 * params.k / (params.mass * gamma)
    return EnergyKick(val, bool(params.r_c**2 >= ratio * gamma))


def level_spacing(gamma, mass, hbar=HBAR):
    return hbar**2 / (mass * gamma)
