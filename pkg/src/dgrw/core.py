"""Model parameters, derived constants and unit handling.

All dynamics in this package run in scaled units where r_c, 1/lambda and
hbar/r_c are the units of length, time and momentum.  In these units the
model depends on two numbers only: the dissipation parameter ``k`` and
``eps_hat = hbar / (M lambda r_c**2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

HBAR = 1.054571817e-34  # J s
K_BOLTZMANN = 1.380649e-23  # J / K
EV = 1.602176634e-19  # J

R_C_DEFAULT = 1e-7  # m
LAMBDA_DEFAULT = 1e-16  # 1/s
LAMBDA_ADLER = 2.2e-8  # 1/s
NUCLEON_MASS = 1.67262192e-27  # kg


class ParameterError(ValueError):
    """Raised for physically invalid model parameters."""


def default_v_eta(r_c=R_C_DEFAULT, hbar=HBAR):
    """Dissipation velocity 1e31 * (hbar / r_c) per kilogram, in m/s."""
    return 1e31 * hbar / r_c


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the dissipative model.

    ``v_eta=math.inf`` selects the original (non-dissipative) GRW limit.
    ``hbar`` is a field so that scaled parameter sets (hbar = 1) can reuse
    every formula unchanged.
    """

    lambda_rate: float = LAMBDA_DEFAULT
    r_c: float = R_C_DEFAULT
    v_eta: float | None = None
    mass: float = 1e-27
    hbar: float = HBAR
    k_boltzmann: float = K_BOLTZMANN

    def __post_init__(self):
        for name in ("lambda_rate", "r_c", "mass", "hbar"):
            value = getattr(self, name)
            if not value > 0:
                raise ParameterError(f"{name} must be positive, got {value!r}")
        if self.v_eta is None:
            object.__setattr__(self, "v_eta", default_v_eta(self.r_c, self.hbar))
        if not self.v_eta > 0:
            raise ParameterError(f"v_eta must be positive, got {self.v_eta!r}")
        if math.isnan(self.lambda_rate) or math.isinf(self.lambda_rate):
            raise ParameterError("lambda_rate must be finite")
        if not 0.0 <= self.k < 1.0:
            raise ParameterError(f"k = {self.k!r} outside [0, 1)")

    @property
    def k(self):
        if math.isinf(self.v_eta):
            return 0.0
        return self.hbar / (2.0 * self.mass * self.v_eta * self.r_c)

    @property
    def eps_hat(self):
        return self.hbar / (self.mass * self.lambda_rate * self.r_c**2)

    @property
    def is_grw(self):
        return self.k == 0.0

    def with_(self, **changes):
        return replace(self, **changes)

    def as_dict(self):
        return {
            "lambda_rate": self.lambda_rate,
            "r_c": self.r_c,
            "v_eta": self.v_eta,
            "mass": self.mass,
            "hbar": self.hbar,
            "k_boltzmann": self.k_boltzmann,
        }

    @classmethod
    def from_dict(cls, d):
        keys = ("lambda_rate", "r_c", "v_eta", "mass", "hbar", "k_boltzmann")
        return cls(**{key: float(d[key]) for key in keys if key in d and d[key] is not None})


@dataclass(frozen=True)
class DerivedParams:
    k: float
    gamma_thr: float
    xi: float
    h_as: float
    temperature: float
    epsilon: float
    eps_hat: float

    def as_dict(self):
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


def derive_params(p: ModelParams) -> DerivedParams:
    k = p.k
    r2 = p.r_c**2
    epsilon = p.hbar / (p.mass * p.lambda_rate)
    if k == 0.0:
        h_as = math.inf
        temperature = math.inf
    else:
        h_as = p.hbar**2 / (16.0 * p.mass * r2 * k)
        temperature = p.hbar**2 / (8.0 * p.k_boltzmann * p.mass * r2 * k)
    return DerivedParams(
        k=k,
        gamma_thr=4.0 * k * r2,
        xi=4.0 * p.lambda_rate * k / (1.0 + k) ** 2,
        h_as=h_as,
        temperature=temperature,
        epsilon=epsilon,
        eps_hat=epsilon / r2,
    )


def grw_heating_rate(p: ModelParams) -> float:
    """Linear energy growth rate of the non-dissipative model, in J/s."""
    return p.hbar**2 * p.lambda_rate / (4.0 * p.mass * p.r_c**2)


# -- units -------------------------------------------------------------------

KINDS = ("length", "time", "momentum", "energy", "variance")


@dataclass(frozen=True)
class UnitSystem:
    mode: str
    length_scale: float
    time_scale: float
    momentum_scale: float


def unit_system(p: ModelParams, mode="nondimensional") -> UnitSystem:
    if mode == "SI":
        return UnitSystem("SI", 1.0, 1.0, 1.0)
    if mode != "nondimensional":
        raise ValueError(f"unknown unit mode {mode!r}")
    return UnitSystem(mode, p.r_c, 1.0 / p.lambda_rate, p.hbar / p.r_c)


def _scale(p: ModelParams, kind: str) -> float:
    if kind == "length":
        return p.r_c
    if kind == "time":
        return 1.0 / p.lambda_rate
    if kind == "momentum":
        return p.hbar / p.r_c
    if kind == "energy":
        return p.hbar**2 / (p.mass * p.r_c**2)
    if kind == "variance":
        return p.r_c**2
    raise ValueError(f"unknown quantity kind {kind!r}; expected one of {KINDS}")


def nondimensionalize(p: ModelParams, value, kind: str):
    if kind == "time":
        return value * p.lambda_rate
    return value / _scale(p, kind)


def dimensionalize(p: ModelParams, value, kind: str):
    if kind == "time":
        return value / p.lambda_rate
    return value * _scale(p, kind)


@dataclass(frozen=True)
class Scaled:
    """The two dimensionless groups that fix the dynamics in scaled units.

    In scaled units hbar = r_c = lambda = 1 and the mass is 1/eps_hat.
    """

    k: float
    eps_hat: float

    @property
    def mass(self):
        return 1.0 / self.eps_hat

    @classmethod
    def of(cls, p: ModelParams):
        return cls(k=p.k, eps_hat=p.eps_hat)


# -- presets and config files ------------------------------------------------

PRESETS = {
    "grw1986": dict(lambda_rate=LAMBDA_DEFAULT, r_c=R_C_DEFAULT, mass=1e-27),
    "adler2007": dict(lambda_rate=LAMBDA_ADLER, r_c=R_C_DEFAULT, mass=1e-27),
    "nucleon": dict(lambda_rate=LAMBDA_DEFAULT, r_c=R_C_DEFAULT, mass=NUCLEON_MASS),
    "macro_1g": dict(lambda_rate=1e7, r_c=R_C_DEFAULT, mass=1e-3),
}

CONFIG_KEYS = ("lambda_rate", "r_c", "v_eta", "mass", "preset")


def preset_params(name: str, **overrides) -> ModelParams:
    try:
        values = dict(PRESETS[name])
    except KeyError:
        raise ParameterError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    values.update({key: val for key, val in overrides.items() if val is not None})
    return ModelParams(**values)


def parse_config_text(text: str) -> ModelParams:
    """Parse ``key = value`` lines; a ``preset`` line supplies defaults."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ParameterError(f"line {lineno}: unknown key {key!r}")
        values[key] = val
    preset = values.pop("preset", None)
    numeric = {key: float(val) for key, val in values.items()}
    if preset is not None:
        return preset_params(preset, **numeric)
    return ModelParams(**numeric)


def load_config(path) -> ModelParams:
    return parse_config_text(Path(path).read_text())


def scaled_params(k: float, eps_hat: float) -> ModelParams:
    """ModelParams in scaled units: hbar = r_c = lambda = 1, mass = 1/eps_hat."""
    v_eta = math.inf if k == 0.0 else eps_hat / (2.0 * k)
    return ModelParams(lambda_rate=1.0, r_c=1.0, v_eta=v_eta, mass=1.0 / eps_hat, hbar=1.0)
