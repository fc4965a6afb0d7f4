"""Wavefunctions on a uniform one-dimensional grid.

The jump operator acts on an arbitrary wavefunction as

    (L_y psi)(X) = (pi s**2)**(-1/4) exp(-(X - y)**2 / (2 s**2)) psi(a X + b y)

with s = r_c (1 + k), a = (1 - k)/(1 + k) and b = 2k/(1 + k).  For k > 0
the argument is contracted towards y, so psi is interpolated.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import ModelParams


class GridError(RuntimeError):
    """Numerical condition on a grid (truncation, aliasing, deficit)."""


class GridTruncationError(GridError):
    pass


class GridAliasingError(GridError):
    pass


class RegimeError(ValueError):
    pass


def _is_pow2(n):
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    x0: float
    dx: float
    n: int

    def __post_init__(self):
        if not _is_pow2(self.n):
            raise ValueError(f"grid size {self.n} is not a power of two")
        if not self.dx > 0:
            raise ValueError("dx must be positive")

    @property
    def x(self):
        return self.x0 + self.dx * np.arange(self.n)

    @property
    def x_max(self):
        return self.x0 + self.dx * (self.n - 1)

    @classmethod
    def centered(cls, half_width, n):
        """Grid symmetric about zero covering [-half_width, half_width]."""
        dx = 2.0 * half_width / n
        return cls(-half_width + 0.5 * dx, dx, n)

    @classmethod
    def covering(cls, lo, hi, n):
        dx = (hi - lo) / (n - 1)
        return cls(lo, dx, n)


def auto_grid(supports, r_c, n, ys=()):
    """Grid spanning every interval in ``supports`` and y +- 8 r_c."""
    lo = min(a for a, _ in supports)
    hi = max(b for _, b in supports)
    for y in ys:
        lo = min(lo, y - 8.0 * r_c)
        hi = max(hi, y + 8.0 * r_c)
    half = max(abs(lo), abs(hi))
    return Grid.centered(half, n)


@dataclass(frozen=True)
class GridWavefunction:
    x0: float
    dx: float
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amp = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if amp.ndim != 1 or not _is_pow2(amp.size):
            raise ValueError("amplitudes must be 1-D with power-of-two length")
        object.__setattr__(self, "amplitudes", amp)

    @property
    def n(self):
        return self.amplitudes.size

    @property
    def grid(self):
        return Grid(self.x0, self.dx, self.n)

    @property
    def x(self):
        return self.x0 + self.dx * np.arange(self.n)

    def norm2(self):
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.dx)

    def normalized(self):
        return GridWavefunction(self.x0, self.dx, self.amplitudes / np.sqrt(self.norm2()))

    def moments(self, hbar):
        """<X>, <X^2>, <P>, <P^2> by quadrature (momenta spectrally)."""
        rho = np.abs(self.amplitudes) ** 2 * self.dx
        x = self.x
        mx = float(np.sum(rho * x))
        mx2 = float(np.sum(rho * x * x))
        phi = np.fft.fft(self.amplitudes)
        p = 2.0 * np.pi * hbar * np.fft.fftfreq(self.n, self.dx)
        w = np.abs(phi) ** 2
        w = w / w.sum()
        return mx, mx2, float(np.sum(w * p)), float(np.sum(w * p * p))

    def to_csv(self, path):
        data = np.column_stack([self.x, self.amplitudes.real, self.amplitudes.imag])
        np.savetxt(path, data, delimiter=",", header="x,re,im", comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        x = data[:, 0]
        dx = float(np.mean(np.diff(x)))
        if not np.allclose(np.diff(x), dx, rtol=1e-9, atol=0):
            raise ValueError("CSV grid is not uniform")
        return cls(float(x[0]), dx, data[:, 1] + 1j * data[:, 2])


def l2_distance(a: GridWavefunction, b: GridWavefunction, phase_free=True):
    """L2 distance, optionally minimized over a global phase."""
    if a.n != b.n or not np.isclose(a.dx, b.dx) or not np.isclose(a.x0, b.x0):
        raise ValueError("wavefunctions live on different grids")
    u, v = a.amplitudes, b.amplitudes
    if phase_free:
        ov = np.vdot(v, u)
        if abs(ov) > 0:
            v = v * (ov / abs(ov))
    return float(np.sqrt(np.sum(np.abs(u - v) ** 2) * a.dx))


# -- interpolation -------------------------------------------------------------

def interpolate(psi: GridWavefunction, u, method="cubic"):
    """Evaluate psi at points ``u``; zero outside the grid."""
    u = np.asarray(u, dtype=float)
    amp = psi.amplitudes
    n = psi.n
    s = (u - psi.x0) / psi.dx
    i = np.floor(s).astype(np.int64)
    t = s - i
    if method == "linear":
        nodes = (0, 1)
        w = (1.0 - t, t)
    elif method == "cubic":
        nodes = (-1, 0, 1, 2)
        w = (
            -t * (t - 1.0) * (t - 2.0) / 6.0,
            (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
            -(t + 1.0) * t * (t - 2.0) / 2.0,
            (t + 1.0) * t * (t - 1.0) / 6.0,
        )
    else:
        raise ValueError(f"unknown interpolation {method!r}")
    out = np.zeros(u.shape, dtype=np.complex128)
    for off, wj in zip(nodes, w):
        j = i + off
        ok = (j >= 0) & (j < n)
        out[ok] += wj[ok] * amp[j[ok]]
    return out


# -- jump ----------------------------------------------------------------------

def _jump_consts(k, r_c):
    if not 0.0 <= k < 1.0:
        raise ValueError(f"k = {k!r} outside [0, 1)")
    a = (1.0 - k) / (1.0 + k)
    b = 2.0 * k / (1.0 + k)
    s2 = (r_c * (1.0 + k)) ** 2
    return a, b, s2


def apply_jump_grid(psi: GridWavefunction, y, params: ModelParams, method="cubic",
                    truncation_tol=1e-10):
    """Apply L_y to ``psi``; returns (normalized state, squared norm before normalizing)."""
    k, r_c = params.k, params.r_c
    a, b, s2 = _jump_consts(k, r_c)
    x = psi.x
    u = a * x + b * y
    # probability that L_y would pick up from outside the contracted range
    xs = psi.x
    outside = (xs < u[0]) | (xs > u[-1])
    if np.any(outside):
        env2 = np.exp(-((xs[outside] - y) / a) ** 2 / s2) / np.sqrt(np.pi * s2)
        lost = float(np.sum(env2 * np.abs(psi.amplitudes[outside]) ** 2) * psi.dx / a)
        if lost > truncation_tol:
            raise GridTruncationError(f"rescaled argument leaves the grid (mass {lost:.2e})")
    if k == 0.0:
        vals = psi.amplitudes
    else:
        vals = interpolate(psi, u, method)
    env = (np.pi * s2) ** -0.25 * np.exp(-((x - y) ** 2) / (2.0 * s2))
    out = env * vals
    prenorm = float(np.sum(np.abs(out) ** 2) * psi.dx)
    if prenorm <= 0.0:
        raise GridTruncationError("jump annihilated the wavefunction on this grid")
    return GridWavefunction(psi.x0, psi.dx, out / np.sqrt(prenorm)), prenorm


def jump_density_grid(psi: GridWavefunction, y_grid, params: ModelParams, deficit_tol=1e-3,
                      block=512):
    """p(y) = ||L_y psi||**2 on ``y_grid``.

    Uses p(y) = (1/a) int (pi s**2)**(-1/2) exp(-(u - y)**2/(a s)**2) |psi(u)|**2 du,
    which follows from substituting u = a X + b y and a + b = 1.
    """
    k, r_c = params.k, params.r_c
    a, _, s2 = _jump_consts(k, r_c)
    y_grid = np.asarray(y_grid, dtype=float)
    rho = np.abs(psi.amplitudes) ** 2 * psi.dx
    u = psi.x
    w2 = (a * a) * s2
    pref = 1.0 / (a * np.sqrt(np.pi * s2))
    out = np.empty(y_grid.shape)
    flat = y_grid.ravel()
    res = out.ravel()
    for start in range(0, flat.size, block):
        yy = flat[start:start + block, None]
        res[start:start + block] = pref * np.exp(-((u[None, :] - yy) ** 2) / w2) @ rho
    out = res.reshape(y_grid.shape)
    if y_grid.ndim == 1 and y_grid.size > 1:
        mass = float(np.trapezoid(out, y_grid))
        if 1.0 - mass > deficit_tol:
            raise GridTruncationError(f"y range misses {1.0 - mass:.2e} of the jump density")
    return out


# -- free evolution ------------------------------------------------------------

def momentum_grid(psi: GridWavefunction, hbar):
    return 2.0 * np.pi * hbar * np.fft.fftfreq(psi.n, psi.dx)


def free_evolve_grid(psi: GridWavefunction, dt, mass, hbar, alias_tol=1e-12):
    """Exact free propagation on the periodic grid.

    Raises GridAliasingError if the momentum spectrum reaches the Nyquist
    band or the evolved state wraps around the edges.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    phi = np.fft.fft(psi.amplitudes)
    n = psi.n
    edge = np.r_[n // 2 - n // 16: n // 2 + n // 16]
    power = np.abs(phi) ** 2
    if power[edge].sum() > alias_tol * power.sum():
        raise GridAliasingError("momentum support reaches the Nyquist frequency")
    if dt == 0:
        return GridWavefunction(psi.x0, psi.dx, psi.amplitudes.copy())
    p = momentum_grid(psi, hbar)
    out = np.fft.ifft(phi * np.exp(-1j * p * p * dt / (2.0 * mass * hbar)))
    rim = np.r_[0:n // 32, n - n // 32:n]
    if np.sum(np.abs(out[rim]) ** 2) > alias_tol * np.sum(np.abs(out) ** 2):
        raise GridAliasingError("evolved state wraps around the periodic boundary")
    return GridWavefunction(psi.x0, psi.dx, out)


# -- superpositions and the Born rule -------------------------------------------

def superposition(grid: Grid, alpha, gamma, c_plus, c_minus):
    x = grid.x
    amp = (c_plus * np.exp(-((x - alpha) ** 2) / (2.0 * gamma))
           + c_minus * np.exp(-((x + alpha) ** 2) / (2.0 * gamma)))
    return GridWavefunction(grid.x0, grid.dx, amp).normalized()


@dataclass
class SuperpositionResult:
    n_samples: int
    n_plus: int
    n_minus: int
    n_undecided: int
    c_plus_sq: float

    @property
    def freq_plus(self):
        return self.n_plus / self.n_samples

    @property
    def freq_undecided(self):
        return self.n_undecided / self.n_samples

    @property
    def std_error(self):
        p = self.c_plus_sq
        return float(np.sqrt(p * (1.0 - p) / self.n_samples))

    def as_dict(self):
        return {
            "n_samples": self.n_samples,
            "counts": {"plus": self.n_plus, "minus": self.n_minus, "undecided": self.n_undecided},
            "frequencies": {
                "plus": self.freq_plus,
                "minus": self.n_minus / self.n_samples,
                "undecided": self.freq_undecided,
            },
            "expected_plus": self.c_plus_sq,
            "binomial_std_error": self.std_error,
        }

    def to_json(self):
        return json.dumps(self.as_dict(), indent=2)


def check_regime(alpha, gamma, r_c, ratio=100.0):
    if alpha**2 < ratio * r_c**2:
        raise RegimeError(f"need alpha^2 >= {ratio} r_c^2")
    if r_c**2 < ratio * gamma:
        raise RegimeError(f"need r_c^2 >= {ratio} gamma")


def sample_from_density(y, p, u):
    """Inverse-CDF sampling from a tabulated density (trapezoid CDF)."""
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(y))])
    cdf /= cdf[-1]
    return np.interp(u, cdf, y)


def superposition_experiment(alpha, gamma, c_plus, c_minus, params: ModelParams, n_samples,
                             seed, n=4096, threshold=0.99, method="cubic"):
    """Collapse a two-peak superposition and count which peak survives."""
    r_c = params.r_c
    check_regime(alpha, gamma, r_c)
    c_plus, c_minus = complex(c_plus), complex(c_minus)
    if abs(abs(c_plus) ** 2 + abs(c_minus) ** 2 - 1.0) > 1e-12:
        raise RegimeError("|c+|^2 + |c-|^2 must equal 1")
    grid = auto_grid([(-alpha - 8 * np.sqrt(gamma), alpha + 8 * np.sqrt(gamma))], r_c, n,
                     ys=(-alpha, alpha))
    psi = superposition(grid, alpha, gamma, c_plus, c_minus)
    dens = jump_density_grid(psi, grid.x, params)
    rng = np.random.default_rng(seed)
    ys = sample_from_density(grid.x, dens, rng.random(n_samples))
    right = grid.x > 0
    counts = [0, 0, 0]
    for y in ys:
        post, _ = apply_jump_grid(psi, y, params, method=method)
        w = np.abs(post.amplitudes) ** 2
        frac = w[right].sum() / w.sum()
        if frac >= threshold:
            counts[0] += 1
        elif frac <= 1.0 - threshold:
            counts[1] += 1
        else:
            counts[2] += 1
    return SuperpositionResult(n_samples, counts[0], counts[1], counts[2], abs(c_plus) ** 2)
